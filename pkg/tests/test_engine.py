"""Ray tracer: launch lattice, interaction limits, hashing, determinism."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from raylaunch.em import C0
from raylaunch.engine import (
    LaunchConfig,
    direction_in_window,
    edge_samples,
    launch_directions,
    trace,
)
from raylaunch.geometry import vec3
from raylaunch.grid import FieldGrid, GridConfig
from raylaunch.materials import default_materials
from raylaunch.scene import Obstacle, Scene, TransmitterSpec


def _scene(obstacles=(), bounds=(20.0, 20.0, 10.0), tx=(10.0, 10.0, 5.0),
           frequency_hz=1e9, power_dbm=0.0):
    mats = default_materials()
    return Scene(
        bounds_min=vec3(0, 0, 0),
        bounds_max=vec3(*bounds),
        materials=mats,
        obstacles=list(obstacles),
        humans=[],
        transmitters=[TransmitterSpec(vec3(*tx), power_dbm, frequency_hz)],
    )


def _grid_for(scene, cell=0.5, **cfg):
    return FieldGrid(scene.bounds_min, scene.bounds_max, GridConfig(cell_size=cell, **cfg),
                     scene.transmitters[0].frequency_hz)


# -- launch lattice ------------------------------------------------------------


def test_lattice_count_coarse():
    cfg = LaunchConfig(delta_theta=math.pi / 4, delta_phi=math.pi / 4)
    dirs = launch_directions(cfg)
    assert len(dirs) == 3 * 8 + 2


def test_lattice_count_one_degree():
    cfg = LaunchConfig()
    dirs = launch_directions(cfg)
    assert len(dirs) == 179 * 360 + 2


def test_lattice_directions_are_unit_and_distinct():
    dirs = launch_directions(LaunchConfig(delta_theta=math.pi / 12, delta_phi=math.pi / 12))
    assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    rounded = {tuple(np.round(d, 12)) for d in dirs}
    assert len(rounded) == len(dirs)


def test_lattice_contains_poles_once():
    dirs = launch_directions(LaunchConfig(delta_theta=math.pi / 6, delta_phi=math.pi / 6))
    up = [d for d in dirs if d[2] > 1.0 - 1e-12]
    down = [d for d in dirs if d[2] < -1.0 + 1e-12]
    assert len(up) == len(down) == 1


def test_angular_window_filters_directions():
    cfg = LaunchConfig(
        delta_theta=math.pi / 18,
        delta_phi=math.pi / 18,
        theta_window=(math.pi / 3, 2 * math.pi / 3),
        phi_window=(0.0, math.pi / 2),
    )
    dirs = launch_directions(cfg)
    assert len(dirs) > 0
    for d in dirs:
        assert direction_in_window(d, cfg)
        theta = math.acos(d[2])
        assert math.pi / 3 - 1e-9 <= theta <= 2 * math.pi / 3 + 1e-9


def test_window_keeps_poles_only_by_theta():
    cfg = LaunchConfig(theta_window=(0.0, math.pi / 2), phi_window=(1.0, 2.0))
    assert direction_in_window(vec3(0, 0, 1), cfg)
    assert not direction_in_window(vec3(0, 0, -1), cfg)


def test_launch_config_validation():
    with pytest.raises(ValueError, match="delta_theta"):
        LaunchConfig(delta_theta=math.pi / 2)
    with pytest.raises(ValueError, match="delta_phi"):
        LaunchConfig(delta_phi=0.0)
    with pytest.raises(ValueError, match="diffraction"):
        LaunchConfig(max_diffractions=2)
    with pytest.raises(ValueError, match="theta_window"):
        LaunchConfig(theta_window=(1.0, 0.5))
    with pytest.raises(ValueError, match="non-negative"):
        LaunchConfig(max_reflections=-1)


# -- tracing ------------------------------------------------------------------


def test_direct_only_trace_populates_grid():
    scene = _scene()
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 60, delta_phi=math.pi / 60,
                       max_reflections=0, max_transmissions=0, diffraction_enabled=False)
    stats = trace(scene, scene.transmitters[0], cfg, grid)
    assert stats.rays_launched == len(launch_directions(cfg))
    assert stats.segments == stats.rays_launched
    assert stats.children == 0
    # stored count is smaller: overlapping same-wavefront deposits compact away
    assert 0 < grid.n_components <= stats.components


def test_delays_respect_straight_line_distance():
    """No component can arrive earlier than light from the transmitter."""
    scene = _scene()
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 30, delta_phi=math.pi / 30,
                       max_reflections=1, max_transmissions=0, diffraction_enabled=False)
    trace(scene, scene.transmitters[0], cfg, grid)
    tx = scene.transmitters[0].position
    records = grid.raw_buffers()
    half_diag = math.sqrt(3) * 0.5 / 2
    cells = records["cell"].astype(np.int64)
    ix = cells % grid.nx
    iy = (cells // grid.nx) % grid.ny
    iz = cells // (grid.nx * grid.ny)
    centers = grid.bounds_min + (np.stack([ix, iy, iz], axis=1) + 0.5) * 0.5
    dist = np.linalg.norm(centers - tx, axis=1)
    assert np.all(records["delay"] * C0 >= dist - half_diag - 1e-6)


def test_reflection_spawns_children_and_marks_surfaces():
    mats = default_materials()
    wall = Obstacle("wall", vec3(15, 2, 0), vec3(15.4, 18, 10), mats["metal"])
    scene = _scene([wall])
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 24, delta_phi=math.pi / 24,
                       max_reflections=1, max_transmissions=0, diffraction_enabled=False)
    stats = trace(scene, scene.transmitters[0], cfg, grid)
    assert stats.children > 0
    assert stats.segments > stats.rays_launched
    assert any(surface[0] == 0 for surface in stats.hit_surfaces)
    paths = set(grid.raw_buffers()["path"])
    assert len(paths) == 2  # direct, and one per reflecting face


def test_interaction_counters_respect_limits():
    mats = default_materials()
    room = [
        Obstacle("left", vec3(0, 0, 0), vec3(0.4, 20, 10), mats["metal"]),
        Obstacle("right", vec3(19.6, 0, 0), vec3(20, 20, 10), mats["metal"]),
    ]
    scene = _scene(room)
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 12, delta_phi=math.pi / 12,
                       max_reflections=3, max_transmissions=0, diffraction_enabled=False)
    trace(scene, scene.transmitters[0], cfg, grid)
    records = grid.raw_buffers()
    assert records["nrefl"].max() == 3
    assert records["ntrans"].max() == 0


def test_power_floor_prunes_lossy_children():
    mats = default_materials()
    wall = Obstacle("wall", vec3(15, 2, 0), vec3(15.4, 18, 10), mats["concrete"])
    scene = _scene([wall])
    cfg_keep = LaunchConfig(delta_theta=math.pi / 24, delta_phi=math.pi / 24,
                            max_reflections=1, max_transmissions=0,
                            diffraction_enabled=False, power_floor_db=-60.0)
    cfg_prune = LaunchConfig(delta_theta=math.pi / 24, delta_phi=math.pi / 24,
                             max_reflections=1, max_transmissions=0,
                             diffraction_enabled=False, power_floor_db=-0.1)
    kept = trace(scene, scene.transmitters[0], cfg_keep, _grid_for(scene))
    pruned = trace(scene, scene.transmitters[0], cfg_prune, _grid_for(scene))
    assert kept.children > 0
    assert pruned.children == 0


def test_pec_reflection_keeps_amplitude():
    """A PEC bounce preserves the 1 m reference amplitude of the child."""
    mats = default_materials()
    wall = Obstacle("wall", vec3(15, 0, 0), vec3(15.4, 20, 10), mats["metal"])
    scene = _scene([wall])
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 24, delta_phi=math.pi / 24,
                       max_reflections=1, max_transmissions=0, diffraction_enabled=False,
                       phi_window=(0.0, 0.3), theta_window=(1.4, 1.7))
    trace(scene, scene.transmitters[0], cfg, grid)
    records = grid.raw_buffers()
    direct = records[records["nrefl"] == 0]
    bounced = records[records["nrefl"] == 1]
    assert len(bounced) > 0
    for sel, recs in (("direct", direct), ("bounced", bounced)):
        e = np.stack([recs["ex"], recs["ey"], recs["ez"]], axis=1).astype(np.complex128)
        amp_1m = np.linalg.norm(e, axis=1) * recs["delay"] * C0
        assert_allclose(amp_1m, amp_1m[0], rtol=1e-4), sel


def test_finer_lattice_covers_more_surfaces():
    rng = np.random.default_rng(4)
    mats = default_materials()
    obstacles = []
    for i in range(6):
        lo = rng.uniform(2, 16, size=3)
        lo[2] = rng.uniform(0, 6)
        hi = lo + rng.uniform(0.5, 2.0, size=3)
        obstacles.append(Obstacle(f"b{i}", lo, np.minimum(hi, [19, 19, 9]), mats["wood"]))
    scene = _scene(obstacles)
    hit_sets = []
    for pitch in (math.pi / 8, math.pi / 16, math.pi / 32):
        cfg = LaunchConfig(delta_theta=pitch, delta_phi=pitch, max_reflections=0,
                           max_transmissions=1, diffraction_enabled=False)
        stats = trace(scene, scene.transmitters[0], cfg, _grid_for(scene, cell=1.0))
        hit_sets.append(set(stats.hit_surfaces))
    assert hit_sets[0] <= hit_sets[1] <= hit_sets[2]


def test_transmitter_inside_obstacle_is_rejected():
    mats = default_materials()
    box = Obstacle("b", vec3(9, 9, 4), vec3(11, 11, 6), mats["wood"])
    scene = _scene([box])
    with pytest.raises(ValueError, match="inside obstacle"):
        trace(scene, scene.transmitters[0], LaunchConfig(), _grid_for(scene))


def test_grid_frequency_mismatch_is_rejected():
    scene = _scene()
    grid = FieldGrid(scene.bounds_min, scene.bounds_max, GridConfig(), 2.44e9)
    with pytest.raises(ValueError, match="frequencies"):
        trace(scene, scene.transmitters[0], LaunchConfig(), grid)


# -- diffraction seeding ---------------------------------------------------------


def _screen_scene():
    mats = default_materials()
    screen = Obstacle("screen", vec3(9.8, 4, 0), vec3(10.2, 16, 6), mats["metal"],
                      diffracting=True)
    return _scene([screen], tx=(4.0, 10.0, 1.5), frequency_hz=C0 / 1.0)


def test_edge_samples_follow_the_angular_pitch():
    scene = _screen_scene()
    cfg = LaunchConfig(delta_theta=math.pi / 90, delta_phi=math.pi / 90)
    samples = edge_samples(scene, scene.transmitters[0], cfg)
    assert len(samples) > 0
    for wedge_idx, fraction in samples:
        assert 0.0 < fraction < 1.0
    # the top edge (length 12 m, ~8 m away) should carry on the order of
    # length / (distance * pitch) samples
    counts = {}
    for wedge_idx, _ in samples:
        counts[wedge_idx] = counts.get(wedge_idx, 0) + 1
    assert max(counts.values()) > 20


def test_diffraction_fills_the_shadow():
    scene = _screen_scene()
    tx = scene.transmitters[0]
    # below the lit boundary (z = 10.8 at x = 16) yet above the screen top,
    # so a single top-edge diffraction can reach it
    shadow_cell_pos = vec3(16.0, 10.25, 8.25)

    cfg_go = LaunchConfig(delta_theta=math.pi / 90, delta_phi=math.pi / 90,
                          max_reflections=0, max_transmissions=0,
                          diffraction_enabled=False,
                          phi_window=(0.0, 0.5), theta_window=(1.0, 2.2))
    grid_go = _grid_for(scene)
    trace(scene, tx, cfg_go, grid_go)
    assert grid_go.received_power_dbm(grid_go.cell_index(shadow_cell_pos)) == -math.inf

    cfg_utd = LaunchConfig(delta_theta=math.pi / 90, delta_phi=math.pi / 90,
                           max_reflections=0, max_transmissions=0,
                           diffraction_enabled=True,
                           phi_window=(0.0, 0.5), theta_window=(1.0, 2.2))
    grid_utd = _grid_for(scene)
    stats = trace(scene, tx, cfg_utd, grid_utd)
    assert stats.diffracted_rays > 0
    power = grid_utd.received_power_dbm(grid_utd.cell_index(shadow_cell_pos))
    assert math.isfinite(power)
    records = grid_utd.raw_buffers()
    assert records["ndiff"].max() == 1


def test_diffracted_components_carry_distinct_paths_per_edge():
    scene = _screen_scene()
    cfg = LaunchConfig(delta_theta=math.pi / 45, delta_phi=math.pi / 45,
                       max_reflections=0, max_transmissions=0)
    grid = _grid_for(scene)
    trace(scene, scene.transmitters[0], cfg, grid)
    records = grid.raw_buffers()
    diffracted = records[records["ndiff"] == 1]
    direct = records[records["ndiff"] == 0]
    assert set(diffracted["path"]).isdisjoint(set(direct["path"]))


# -- determinism ------------------------------------------------------------------


def _mini_workshop():
    mats = default_materials()
    obstacles = [
        Obstacle("wall", vec3(12, 0, 0), vec3(12.4, 20, 10), mats["concrete"]),
        Obstacle("cabinet", vec3(5, 14, 0), vec3(7, 15, 2), mats["metal"], diffracting=True),
    ]
    return _scene(obstacles, frequency_hz=2.44e9)


def _trace_dump(workers):
    scene = _mini_workshop()
    grid = _grid_for(scene)
    cfg = LaunchConfig(delta_theta=math.pi / 36, delta_phi=math.pi / 36,
                       max_reflections=2, max_transmissions=1)
    trace(scene, scene.transmitters[0], cfg, grid, workers=workers)
    grid._finalize()
    return grid._records.tobytes()


def test_repeat_runs_are_byte_identical():
    assert _trace_dump(workers=1) == _trace_dump(workers=1)


def test_worker_count_does_not_change_results():
    assert _trace_dump(workers=1) == _trace_dump(workers=2)
