"""Voxel grid: traversal, deposit physics, de-aliasing and persistence."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from raylaunch.em import C0, ETA0, WaveNumbers
from raylaunch.geometry import ray_box_interval, unit, vec3
from raylaunch.grid import FieldGrid, GridConfig, Segment, compact_records
from raylaunch.scene import AntennaPattern

F_1GHZ = 1e9


def _grid(bounds=(10.0, 10.0, 10.0), cell=0.5, **cfg):
    config = GridConfig(cell_size=cell, **cfg)
    return FieldGrid(vec3(0, 0, 0), vec3(*bounds), config, F_1GHZ)


def _spherical(origin, direction, length, amp, s_start=1.0, path=1):
    return Segment(
        origin=np.asarray(origin, dtype=float),
        direction=np.asarray(direction, dtype=float),
        length=length,
        s_start=s_start,
        n_reflections=0,
        n_transmissions=0,
        n_diffractions=0,
        path_hash=path,
        amp=np.asarray(amp, dtype=complex),
    )


def _records(grid, entries, cell=(0, 0, 0), direction=(1.0, 0.0, 0.0)):
    """Hand-built record batch: entries are (field_vec, delay_s, path)."""
    dtype = grid.raw_buffers().dtype
    rec = np.zeros(len(entries), dtype=dtype)
    ix, iy, iz = cell
    rec["cell"] = ix + grid.nx * (iy + grid.ny * iz)
    for i, (field_vec, delay, path) in enumerate(entries):
        rec["ex"][i], rec["ey"][i], rec["ez"][i] = np.asarray(field_vec, dtype=complex)
        rec["delay"][i] = delay
        rec["path"][i] = path
    rec["dirx"], rec["diry"], rec["dirz"] = direction
    return rec


# -- traversal ----------------------------------------------------------------


def test_axis_parallel_segment_touches_every_cell():
    grid = _grid()
    seg = _spherical((0, 5.25, 5.25), (1, 0, 0), 10.0, [0, 0, 1])
    assert grid.deposit(seg) == 20
    cells = sorted(r["cell"] for r in grid.raw_buffers())
    iy, iz = 10, 10
    assert cells == [ix + grid.nx * (iy + grid.ny * iz) for ix in range(20)]


def test_traversal_matches_dense_marching():
    """Every cell the chord passes through gets exactly one record.

    Dense point marching is the bulk oracle; where the two disagree
    (chords shorter than the march step, boundary touches binned to a
    neighbour) the exact chord from ray_box_interval arbitrates.
    """
    rng = np.random.default_rng(11)

    def chord(grid, flat, origin, direction, length):
        ix = flat % grid.nx
        iy = (flat // grid.nx) % grid.ny
        iz = flat // (grid.nx * grid.ny)
        lo = np.array([ix, iy, iz], dtype=float) * 0.5
        span = ray_box_interval(origin, direction, lo, lo + 0.5)
        if span is None:
            return 0.0
        return max(0.0, min(span[1], length) - max(span[0], 0.0))

    for _ in range(25):
        grid = _grid()
        origin = rng.uniform(0.5, 9.5, size=3)
        direction = unit(rng.normal(size=3))
        length = rng.uniform(0.5, 6.0)
        grid.deposit(_spherical(origin, direction, length, [1, 0, 0]))
        got = {int(r["cell"]) for r in grid.raw_buffers()}
        assert len(got) == len(grid.raw_buffers())  # one record per cell

        t = np.arange(1e-4, length, 2e-4)
        pts = origin[None, :] + t[:, None] * direction[None, :]
        idx = np.clip((pts / 0.5).astype(int), 0, 19)
        want = set((idx[:, 0] + grid.nx * (idx[:, 1] + grid.ny * idx[:, 2])).tolist())

        for flat in got - want:
            assert 0.0 < chord(grid, flat, origin, direction, length) < 1e-3
        for flat in want - got:
            assert chord(grid, flat, origin, direction, length) < 1e-3


def test_midpoint_delay_and_field_law():
    grid = _grid(bounds=(10, 10, 10), cell=10.0)  # single cell
    amp = np.array([2.0, 0, 0], dtype=complex)
    seg = _spherical((0, 5, 5), (1, 0, 0), 10.0, amp, s_start=3.0)
    assert grid.deposit(seg) == 1
    (comp,) = grid.components_at((0, 0, 0))
    s_mid = 3.0 + 5.0
    assert_allclose(comp.delay_s, s_mid / C0, rtol=1e-6)
    k = WaveNumbers(F_1GHZ).k
    want = amp / s_mid * np.exp(-1j * k * s_mid)
    assert_allclose(comp.field_vec, want, rtol=1e-6)
    assert_allclose(comp.direction, [1, 0, 0])


def test_zero_length_and_offgrid_segments_deposit_nothing():
    grid = _grid()
    assert grid.deposit(_spherical((1, 1, 1), (1, 0, 0), 0.0, [1, 0, 0])) == 0
    assert grid.deposit(_spherical((0, -3, 5), (1, 0, 0), 2.0, [1, 0, 0])) == 0
    assert grid.n_components == 0


def test_deposit_skips_the_launch_point_singularity():
    grid = _grid()
    seg = _spherical((5.25, 5.25, 5.25), (1, 0, 0), 0.5, [1, 0, 0], s_start=0.0)
    grid.deposit(seg)
    for rec in grid.raw_buffers():
        assert rec["delay"] * C0 > 1e-3


def test_diffracted_deposit_guards_the_edge_caustic():
    grid = _grid()
    lam = WaveNumbers(F_1GHZ).wavelength
    seg = Segment(
        origin=vec3(5.25, 5.25, 5.25),
        direction=vec3(1, 0, 0),
        length=3.0,
        s_start=4.0,
        n_reflections=0,
        n_transmissions=0,
        n_diffractions=1,
        path_hash=9,
        kind="diffracted",
        v_soft=np.array([0, 0, 1], dtype=complex),
        v_hard=np.array([0, 1, 0], dtype=complex),
        s_edge=4.0,
        phi=3.5,
        phi_p=0.7,
        beta0=np.pi / 2,
    )
    n = grid.deposit(seg)
    assert n > 0
    for rec in grid.raw_buffers():
        u = rec["delay"] * C0 - 4.0
        assert u > lam / 4


# -- received power ------------------------------------------------------------


def test_single_component_received_power_is_friis():
    grid = _grid(bounds=(60, 60, 10))
    p_watts = 10 ** ((0.0 - 30.0) / 10.0)
    amp = np.array([0, 0, 1], dtype=complex) * math.sqrt(30.0 * p_watts)
    seg = _spherical((0, 30.25, 5.25), (1, 0, 0), 60.0, amp, s_start=0.0)
    grid.deposit(seg)
    cell = grid.cell_index(vec3(20.1, 30.25, 5.25))
    comps = grid.effective_components(cell)
    assert len(comps) == 1
    d = comps[0].delay_s * C0
    lam = WaveNumbers(F_1GHZ).wavelength
    friis_dbm = 0.0 + 20 * math.log10(lam / (4 * math.pi * d))
    assert_allclose(grid.received_power_dbm(cell), friis_dbm, atol=1e-9)


def test_opposite_fields_cancel_coherently():
    grid = _grid()
    e = [1.0, 0.0, 0.0]
    rec = _records(grid, [(e, 1e-7, 1), ([-1.0, 0.0, 0.0], 1e-7, 2)], cell=(3, 3, 3))
    grid.extend_raw(rec)
    assert grid.received_power_dbm((3, 3, 3)) == -math.inf


def test_same_bin_sums_fields_across_bins_sums_powers():
    base = dict(bounds=(10.0, 10.0, 10.0), cell=0.5, delta_t=1e-8)
    e = [1.0, 0.0, 0.0]

    coherent = _grid(**base)
    coherent.extend_raw(_records(coherent, [(e, 1e-7, 1), (e, 1.02e-7, 2)], cell=(1, 1, 1)))

    split = _grid(**base)
    split.extend_raw(_records(split, [(e, 1e-7, 1), (e, 2.5e-7, 2)], cell=(1, 1, 1)))

    single = _grid(**base)
    single.extend_raw(_records(single, [(e, 1e-7, 1)], cell=(1, 1, 1)))

    p0 = single.received_power_dbm((1, 1, 1))
    assert_allclose(coherent.received_power_dbm((1, 1, 1)) - p0, 6.020599913, atol=1e-6)
    assert_allclose(split.received_power_dbm((1, 1, 1)) - p0, 3.010299957, atol=1e-6)


def test_empty_cell_sentinels():
    grid = _grid()
    assert grid.received_power_dbm((0, 0, 0)) == -math.inf
    assert math.isnan(grid.delay_spread_ns((0, 0, 0)))
    assert grid.pdp((0, 0, 0)) == []
    assert grid.effective_components((0, 0, 0)) == []


def test_delay_spread_and_pdp():
    grid = _grid()
    e = [0.5, 0.0, 0.0]
    entries = [(e, 40e-9, 1), (e, 100e-9, 2), (e, 75e-9, 3)]
    grid.extend_raw(_records(grid, entries, cell=(2, 2, 2)))
    assert_allclose(grid.delay_spread_ns((2, 2, 2)), 60.0, atol=1e-3)
    profile = grid.pdp((2, 2, 2))
    delays = [d for d, _ in profile]
    assert delays == sorted(delays)
    assert len(profile) == 3
    powers = {p for _, p in profile}
    assert len(powers) == 1  # equal amplitudes give equal per-component power


def test_rx_antenna_weighting():
    cfg = dict(bounds=(10.0, 10.0, 10.0), cell=0.5)
    e = [1.0, 0.0, 0.0]
    iso = _grid(**cfg)
    iso.extend_raw(_records(iso, [(e, 1e-7, 1)], cell=(1, 1, 1), direction=(0, 0, -1)))

    monopole = _grid(**cfg, rx_antenna=AntennaPattern(kind="monopole", peak_gain_dbi=0.0))
    monopole.extend_raw(
        _records(monopole, [(e, 1e-7, 1)], cell=(1, 1, 1), direction=(0, 0, -1))
    )
    # arriving straight down means the receive monopole sees its null
    assert math.isfinite(iso.received_power_dbm((1, 1, 1)))
    assert monopole.received_power_dbm((1, 1, 1)) == -math.inf

    sideways = _grid(**cfg, rx_antenna=AntennaPattern(kind="monopole", peak_gain_dbi=3.0))
    sideways.extend_raw(
        _records(sideways, [(e, 1e-7, 1)], cell=(1, 1, 1), direction=(1, 0, 0))
    )
    assert_allclose(
        sideways.received_power_dbm((1, 1, 1)) - iso.received_power_dbm((1, 1, 1)),
        3.0,
        atol=1e-9,
    )


# -- de-aliasing ----------------------------------------------------------------


def test_same_path_samples_collapse_to_median():
    grid = _grid()
    w = grid.cluster_window_s
    t0 = 1e-7
    e = [1.0, 0.0, 0.0]
    entries = [(e, t0, 7), (e, t0 + 0.2 * w, 7), (e, t0 + 0.4 * w, 7), (e, t0 + 0.9 * w, 7)]
    grid.extend_raw(_records(grid, entries, cell=(4, 4, 4)))
    comps = grid.effective_components((4, 4, 4))
    assert len(comps) == 1
    assert_allclose(comps[0].delay_s, t0 + 0.2 * w, rtol=1e-6)


def test_distinct_paths_never_merge():
    grid = _grid()
    t0 = 1e-7
    e = [1.0, 0.0, 0.0]
    grid.extend_raw(_records(grid, [(e, t0, 1), (e, t0, 2), (e, t0, 3)], cell=(4, 4, 4)))
    assert len(grid.effective_components((4, 4, 4))) == 3


def test_arrivals_beyond_the_window_stay_separate():
    grid = _grid()
    w = grid.cluster_window_s
    t0 = 1e-7
    e = [1.0, 0.0, 0.0]
    grid.extend_raw(
        _records(grid, [(e, t0, 7), (e, t0 + 1.5 * w, 7)], cell=(4, 4, 4))
    )
    assert len(grid.effective_components((4, 4, 4))) == 2


def test_order_of_deposits_does_not_matter():
    e = [1.0, 0.0, 0.0]
    w = _grid().cluster_window_s
    entries = [
        (e, 1e-7, 7),
        (e, 1e-7 + 0.3 * w, 7),
        ([0.0, 1.0, 0.0], 2e-7, 9),
        (e, 5e-7, 11),
    ]
    grid_a = _grid()
    grid_a.extend_raw(_records(grid_a, entries, cell=(5, 5, 5)))
    grid_b = _grid()
    grid_b.extend_raw(_records(grid_b, entries[::-1], cell=(5, 5, 5)))
    assert grid_a.received_power_dbm((5, 5, 5)) == grid_b.received_power_dbm((5, 5, 5))
    assert grid_a.delay_spread_ns((5, 5, 5)) == grid_b.delay_spread_ns((5, 5, 5))


def test_compact_records_keeps_one_sample_per_wavefront():
    grid = _grid()
    w = grid.cluster_window_s
    e = [1.0, 0.0, 0.0]
    batch = _records(
        grid,
        [(e, 1e-7, 7), (e, 1e-7 + 0.1 * w, 7), (e, 1e-7 + 0.2 * w, 7), (e, 9e-7, 8)],
        cell=(1, 2, 3),
    )
    out = compact_records(batch, w)
    assert len(out) <= 3
    paths = set(out["path"])
    assert paths == {7, 8}


def test_compact_records_never_merges_across_cells():
    grid = _grid()
    a = _records(grid, [([1, 0, 0], 1e-7, 7)], cell=(0, 0, 0))
    b = _records(grid, [([1, 0, 0], 1e-7, 7)], cell=(1, 0, 0))
    out = compact_records(np.concatenate([a, b]), grid.cluster_window_s)
    assert len(out) == 2


def test_compact_split_is_healed_by_clustering():
    """Quantisation may split one wavefront; the per-cell pass re-merges it."""
    grid = _grid()
    w = grid.cluster_window_s
    e = [1.0, 0.0, 0.0]
    # delays straddling a quantisation boundary but within one window
    entries = [(e, 0.98 * w, 7), (e, 1.02 * w, 7)]
    batch = _records(grid, entries, cell=(6, 6, 6))
    out = compact_records(batch, w)
    assert len(out) == 2  # split at the bin edge
    grid.extend_raw(out)
    assert len(grid.effective_components((6, 6, 6))) == 1


# -- planes and persistence -------------------------------------------------------


def test_grid_shape_tiles_the_bounds():
    grid = FieldGrid(vec3(0, 0, 0), vec3(120, 40, 12), GridConfig(cell_size=0.5), F_1GHZ)
    assert grid.shape == (240, 80, 24)
    small = FieldGrid(vec3(0, 0, 0), vec3(1.1, 0.9, 0.5), GridConfig(cell_size=0.5), F_1GHZ)
    assert small.shape == (3, 2, 1)


def test_plane_slice_shape_and_nan():
    grid = _grid(bounds=(12, 4, 2))
    grid.extend_raw(_records(grid, [([1, 0, 0], 1e-7, 1)], cell=(3, 2, 1)))
    plane = grid.plane_slice(0.75, "power")
    assert plane.values.shape == (8, 24)
    assert plane.z_index == 1
    assert np.isfinite(plane.values[2, 3])
    assert np.isnan(plane.values[0, 0])
    with pytest.raises(ValueError, match="quantity"):
        grid.plane_slice(0.75, "phase")
    with pytest.raises(ValueError, match="height"):
        grid.plane_slice(7.0)


def test_plane_csv_format(tmp_path):
    grid = _grid(bounds=(2, 1, 1), cell=0.5)
    grid.extend_raw(_records(grid, [([1, 0, 0], 1e-7, 1)], cell=(0, 0, 0)))
    path = tmp_path / "plane.csv"
    grid.plane_slice(0.25, "power").to_csv(path)
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    assert len(comments) == 3
    assert lines[len(comments)] == "x_m,y_m,value"
    rows = lines[len(comments) + 1 :]
    assert len(rows) == 4 * 2
    assert rows[0].startswith("0.250,0.250,")
    assert rows[1].split(",")[2] == "nan"


def test_cell_index_and_center_roundtrip():
    grid = _grid()
    cell = grid.cell_index(vec3(3.3, 9.9, 0.01))
    assert cell == (6, 19, 0)
    center = grid.cell_center(cell)
    assert_allclose(center, [3.25, 9.75, 0.25])
    with pytest.raises(ValueError, match="outside"):
        grid.cell_index(vec3(-0.1, 5, 5))


def test_save_load_roundtrip(tmp_path):
    grid = _grid()
    grid.deposit(_spherical((0, 5.25, 5.25), (1, 0, 0), 10.0, [0, 1, 0]))
    path = tmp_path / "dump.rlg"
    grid.save(path)
    again = FieldGrid.load(path)
    assert again.shape == grid.shape
    assert again.config == grid.config
    assert again.frequency_hz == grid.frequency_hz
    assert again.n_components == grid.n_components
    a = np.sort(grid.raw_buffers(), order="cell")
    b = np.sort(again.raw_buffers(), order="cell")
    assert a.tobytes() == b.tobytes()
    cell = (5, 10, 10)
    assert grid.received_power_dbm(cell) == again.received_power_dbm(cell)


def test_load_rejects_truncated_or_foreign_files(tmp_path):
    grid = _grid()
    grid.deposit(_spherical((0, 5.25, 5.25), (1, 0, 0), 10.0, [0, 1, 0]))
    path = tmp_path / "dump.rlg"
    grid.save(path)
    blob = path.read_bytes()
    truncated = tmp_path / "cut.rlg"
    truncated.write_bytes(blob[:-17])
    with pytest.raises(ValueError, match="truncated"):
        FieldGrid.load(truncated)
    foreign = tmp_path / "other.bin"
    foreign.write_bytes(b"something else entirely")
    with pytest.raises(ValueError, match="grid dump"):
        FieldGrid.load(foreign)


def test_grid_config_validation():
    with pytest.raises(ValueError, match="cell_size"):
        GridConfig(cell_size=0.0)
    with pytest.raises(ValueError, match="delta_t"):
        GridConfig(delta_t=-1.0)
