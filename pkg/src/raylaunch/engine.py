"""Shooting-and-bouncing ray tracer.

Rays launch on a regular (theta, phi) lattice from each transmitter, fly
between surfaces, and hand every free-flight segment to a sink (normally a
:class:`~raylaunch.grid.FieldGrid`). At a surface hit the ray spawns a
reflected child and, through penetrable obstacles, a transmitted child;
children below the configured power floor are dropped. Wedge diffraction
is seeded in a separate phase: every edge of a diffracting obstacle that
the transmitter illuminates directly becomes a line of point sources whose
children leave on the local Keller cone. Diffracted rays reflect and
transmit like any other but do not diffract again.

Child amplitudes re-reference in place: interaction operators are linear
in the field, so the 1 m reference vector transforms by the same
coefficients as the field itself, and only slab traversals need an
explicit phase correction (the vacuum phase over the chord is swapped for
the slab's internal phase, which the transmission coefficient carries).

Work is split into fixed-size chunks merged in a fixed order, so results
are identical for any worker count; with a ``FieldGrid`` sink two runs of
the same configuration produce byte-identical dumps.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from .em import WaveNumbers, antenna_gain, launch_polarization, reflect, transmit
from .geometry import EPS_GEOM, Vec3, cross3, face_index, ray_box_interval, unit
from .grid import FieldGrid, Segment, compact_records
from .scene import Scene, TransmitterSpec, Wedge, enumerate_edges, intersect
from .utd import wedge_coefficients

log = logging.getLogger(__name__)

PRIMARY_CHUNK = 2048
DIFFRACTION_CHUNK = 128

_HASH_SEED = 0xCBF29CE484222325
_HASH_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_EVENT_REFLECT = 1
_EVENT_TRANSMIT = 2
_EVENT_DIFFRACT = 3

#: L value used when screening spawn candidates against the power floor;
#: large enough that the transition function is 1 (far-field coefficient).
_FAR_FIELD_L = 1e9

_MIN_SIN_BETA = 1e-3
_MIN_WEDGE_AZIMUTH = 1e-3


def _fold_hash(h: int, event: int, ident: int) -> int:
    for word in (event, ident):
        h = ((h ^ (word & _MASK64)) * _HASH_PRIME) & _MASK64
    return h


def _reflection_axis(ident: int) -> int:
    return (ident % 8) // 2


def _canonical_reflection_hash(base: int, run: tuple[int, ...]) -> int:
    """Fold a run of consecutive reflections in a canonical order.

    Mirror images about perpendicular planes commute, so two rays that
    straddle a corner seam and hit the same two faces in opposite order
    sample the same unfolded image; they must share one wavefront
    identity or the grid would report the arrival twice. Sorting the run
    by axis gives that. The sort is stable, so hits about parallel
    planes, whose order is a real geometric difference, keep it.
    Transmissions and diffractions end the run: reordering across them
    is not attempted.
    """
    h = base
    for ident in sorted(run, key=_reflection_axis):
        h = _fold_hash(h, _EVENT_REFLECT, ident)
    return h


@dataclass(frozen=True)
class LaunchConfig:
    """Tracing controls.

    ``delta_theta`` / ``delta_phi`` set the launch lattice pitch (radians,
    at most pi/4). ``power_floor_db`` is relative to the strongest launch
    amplitude at the 1 m reference; children falling below it are dropped.
    ``absolute_floor_dbm``, when set, is a receive dynamic-range bound:
    a segment whose best possible sample sits below it is neither stored
    nor continued. Interactions are passive and spreading only decays, so
    everything downstream of such a segment is unmeasurable too.
    ``theta_window`` / ``phi_window`` restrict launch and diffraction-cone
    directions to an angular sector, which keeps targeted studies cheap.
    """

    delta_theta: float = math.pi / 180.0
    delta_phi: float = math.pi / 180.0
    max_reflections: int = 3
    max_transmissions: int = 3
    max_diffractions: int = 1
    diffraction_enabled: bool = True
    power_floor_db: float = -150.0
    absolute_floor_dbm: float | None = None
    theta_window: tuple[float, float] = (0.0, math.pi)
    phi_window: tuple[float, float] = (0.0, 2.0 * math.pi)

    def __post_init__(self) -> None:
        for name, value in (("delta_theta", self.delta_theta), ("delta_phi", self.delta_phi)):
            if not 0.0 < value <= math.pi / 4.0 + 1e-12:
                raise ValueError(f"{name} must lie in (0, pi/4], got {value}")
        if self.max_reflections < 0 or self.max_transmissions < 0:
            raise ValueError("interaction limits must be non-negative")
        if self.max_diffractions not in (0, 1):
            raise ValueError("only a single diffraction order is supported")
        lo_t, hi_t = self.theta_window
        lo_p, hi_p = self.phi_window
        if not (0.0 <= lo_t <= hi_t <= math.pi):
            raise ValueError("theta_window must be an ordered pair within [0, pi]")
        if not (0.0 <= lo_p <= hi_p <= 2.0 * math.pi):
            raise ValueError("phi_window must be an ordered pair within [0, 2*pi]")


@dataclass
class RayState:
    """A ray about to fly: geometry, reference amplitude and bookkeeping."""

    origin: Vec3
    direction: Vec3
    s_start: float
    n_reflections: int = 0
    n_transmissions: int = 0
    n_diffractions: int = 0
    path_hash: int = _HASH_SEED
    base_hash: int = _HASH_SEED
    refl_run: tuple[int, ...] = ()
    exclude_id: int | None = None
    kind: str = "spherical"
    amp: np.ndarray | None = None
    v_soft: np.ndarray | None = None
    v_hard: np.ndarray | None = None
    s_edge: float = 0.0
    wedge_n: float = 1.5
    phi: float = 0.0
    phi_p: float = 0.0
    beta0: float = 0.0
    d_far_soft: complex = 0.0j
    d_far_hard: complex = 0.0j

    def reference_amplitude(self) -> float:
        """1 m equivalent amplitude used for power-floor pruning."""
        if self.kind == "spherical":
            return float(np.linalg.norm(self.amp))
        mix = abs(self.d_far_soft) ** 2 * float(np.vdot(self.v_soft, self.v_soft).real) + abs(
            self.d_far_hard
        ) ** 2 * float(np.vdot(self.v_hard, self.v_hard).real)
        return math.sqrt(mix * self.s_edge)

    def to_segment(self, length: float) -> Segment:
        return Segment(
            origin=self.origin,
            direction=self.direction,
            length=length,
            s_start=self.s_start,
            n_reflections=self.n_reflections,
            n_transmissions=self.n_transmissions,
            n_diffractions=self.n_diffractions,
            path_hash=self.path_hash,
            kind=self.kind,
            amp=self.amp,
            v_soft=self.v_soft,
            v_hard=self.v_hard,
            s_edge=self.s_edge,
            wedge_n=self.wedge_n,
            phi=self.phi,
            phi_p=self.phi_p,
            beta0=self.beta0,
        )


@dataclass
class TraceStats:
    rays_launched: int = 0
    diffraction_sources: int = 0
    diffracted_rays: int = 0
    segments: int = 0
    components: int = 0
    children: int = 0
    hit_surfaces: set = field(default_factory=set)

    def merge(self, other: "TraceStats") -> None:
        self.rays_launched += other.rays_launched
        self.diffraction_sources += other.diffraction_sources
        self.diffracted_rays += other.diffracted_rays
        self.segments += other.segments
        self.components += other.components
        self.children += other.children
        self.hit_surfaces |= other.hit_surfaces

    def as_dict(self) -> dict:
        return {
            "rays_launched": self.rays_launched,
            "diffraction_sources": self.diffraction_sources,
            "diffracted_rays": self.diffracted_rays,
            "segments": self.segments,
            "components": self.components,
            "children": self.children,
            "distinct_surfaces_hit": len(self.hit_surfaces),
        }


def launch_directions(cfg: LaunchConfig) -> np.ndarray:
    """Unit launch directions on the (theta, phi) lattice, poles once.

    Rows run over theta = i * delta_theta (0 < theta < pi) with azimuths
    j * delta_phi; the two poles are appended as single rays subject to
    the theta window only. For pitches dividing the sphere evenly the
    count is (pi/dt - 1) * (2 pi / dp) + 2.
    """
    thetas = []
    i = 1
    while i * cfg.delta_theta < math.pi - 1e-12:
        thetas.append(i * cfg.delta_theta)
        i += 1
    phis = []
    j = 0
    while j * cfg.delta_phi < 2.0 * math.pi - 1e-12:
        phis.append(j * cfg.delta_phi)
        j += 1
    lo_t, hi_t = cfg.theta_window
    lo_p, hi_p = cfg.phi_window
    dirs: list[np.ndarray] = []
    if lo_t <= 0.0 <= hi_t:
        dirs.append(np.array([0.0, 0.0, 1.0]))
    for theta in thetas:
        if not lo_t <= theta <= hi_t:
            continue
        st, ct = math.sin(theta), math.cos(theta)
        for phi in phis:
            if not lo_p <= phi <= hi_p:
                continue
            dirs.append(np.array([st * math.cos(phi), st * math.sin(phi), ct]))
    if lo_t <= math.pi <= hi_t:
        dirs.append(np.array([0.0, 0.0, -1.0]))
    if not dirs:
        return np.empty((0, 3))
    return np.vstack(dirs)


def direction_in_window(direction: Vec3, cfg: LaunchConfig) -> bool:
    theta = math.acos(min(1.0, max(-1.0, float(direction[2]))))
    lo_t, hi_t = cfg.theta_window
    if not lo_t <= theta <= hi_t:
        return False
    if theta < 1e-12 or theta > math.pi - 1e-12:
        return True
    phi = math.atan2(float(direction[1]), float(direction[0])) % (2.0 * math.pi)
    lo_p, hi_p = cfg.phi_window
    return lo_p <= phi <= hi_p


def _primary_state(tx: TransmitterSpec, direction: np.ndarray) -> RayState:
    gain = antenna_gain(tx.antenna, direction)
    amp = math.sqrt(30.0 * tx.power_watts * gain) * launch_polarization(tx.antenna, direction)
    return RayState(
        origin=np.array(tx.position, dtype=np.float64),
        direction=np.asarray(direction, dtype=np.float64),
        s_start=0.0,
        amp=amp.astype(np.complex128),
    )


def _trace_one(
    scene: Scene,
    cfg: LaunchConfig,
    waves: WaveNumbers,
    root: RayState,
    sink,
    floor_amp: float,
    stats: TraceStats,
) -> None:
    stack = [root]
    while stack:
        st = stack.pop()
        if np.any(st.origin < scene.bounds_min - EPS_GEOM) or np.any(
            st.origin > scene.bounds_max + EPS_GEOM
        ):
            continue  # left the volume through a boundary-flush obstacle
        hit = intersect(st.origin, st.direction, scene, exclude_id=st.exclude_id)
        if hit.distance > EPS_GEOM:
            stats.components += sink.deposit(st.to_segment(hit.distance))
            stats.segments += 1
        if hit.is_bounds:
            continue
        obstacle = scene.all_obstacles[hit.obstacle_id]
        stats.hit_surfaces.add((hit.obstacle_id, face_index(hit.normal)))
        material = obstacle.material
        cos_i = -float(st.direction @ hit.normal)
        if cos_i <= 1e-9:
            continue  # numerically grazing, no well-defined children
        s_hit = st.s_start + hit.distance

        if st.n_reflections < cfg.max_reflections:
            child = _reflected_child(st, hit, material, waves, s_hit)
            if child is not None and child.reference_amplitude() >= floor_amp:
                stats.children += 1
                stack.append(child)

        if st.n_transmissions < cfg.max_transmissions and not material.is_pec:
            child = _transmitted_child(st, hit, obstacle, waves, cos_i, s_hit)
            if child is not None and child.reference_amplitude() >= floor_amp:
                stats.children += 1
                stack.append(child)


def _reflected_child(
    st: RayState, hit, material, waves: WaveNumbers, s_hit: float
) -> RayState | None:
    f = waves.frequency_hz
    if st.kind == "spherical":
        amp_r, d_r = reflect(st.amp, st.direction, hit.normal, material, f)
        payload = {"amp": amp_r}
    else:
        vs_r, d_r = reflect(st.v_soft, st.direction, hit.normal, material, f)
        vh_r, _ = reflect(st.v_hard, st.direction, hit.normal, material, f)
        payload = {"v_soft": vs_r, "v_hard": vh_r}
    run = st.refl_run + (hit.obstacle_id * 8 + face_index(hit.normal),)
    return replace(
        st,
        origin=hit.point,
        direction=d_r,
        s_start=s_hit,
        n_reflections=st.n_reflections + 1,
        path_hash=_canonical_reflection_hash(st.base_hash, run),
        refl_run=run,
        exclude_id=hit.obstacle_id,
        **payload,
    )


def _transmitted_child(
    st: RayState, hit, obstacle, waves: WaveNumbers, cos_i: float, s_hit: float
) -> RayState | None:
    interval = ray_box_interval(hit.point, st.direction, obstacle.box_min, obstacle.box_max)
    if interval is None:
        return None
    chord = interval[1]
    if chord <= EPS_GEOM:
        return None
    f = waves.frequency_hz
    thickness = chord * cos_i
    correction = np.exp(1j * waves.k * chord)
    if st.kind == "spherical":
        amp_t = transmit(st.amp, st.direction, hit.normal, thickness, obstacle.material, f)
        payload = {"amp": amp_t * correction}
    else:
        vs_t = transmit(st.v_soft, st.direction, hit.normal, thickness, obstacle.material, f)
        vh_t = transmit(st.v_hard, st.direction, hit.normal, thickness, obstacle.material, f)
        payload = {"v_soft": vs_t * correction, "v_hard": vh_t * correction}
    folded = _fold_hash(st.path_hash, _EVENT_TRANSMIT, hit.obstacle_id)
    return replace(
        st,
        origin=hit.point + chord * st.direction,
        s_start=s_hit + chord,
        n_transmissions=st.n_transmissions + 1,
        path_hash=folded,
        base_hash=folded,
        refl_run=(),
        exclude_id=hit.obstacle_id,
        **payload,
    )


# -- diffraction seeding -----------------------------------------------------


def edge_samples(scene: Scene, tx: TransmitterSpec, cfg: LaunchConfig) -> list[tuple[int, float]]:
    """(wedge index, edge fraction) pairs spaced like the launch lattice.

    Sample spacing matches the lattice ray separation at the edge's
    distance from the transmitter, so the diffracted field is resolved no
    worse than the incident one. Visibility is not checked here; the
    spawn step does that per sample.
    """
    wedges = enumerate_edges(scene)
    out: list[tuple[int, float]] = []
    pos = np.asarray(tx.position)
    for w_idx, wedge in enumerate(wedges):
        mid = 0.5 * (wedge.p0 + wedge.p1)
        spacing = max(float(np.linalg.norm(mid - pos)) * cfg.delta_theta, 0.01)
        m = min(max(int(math.ceil(wedge.length / spacing)), 1), 4096)
        out.extend((w_idx, (i + 0.5) / m) for i in range(m))
    return out


def _spawn_diffracted(
    scene: Scene,
    tx: TransmitterSpec,
    cfg: LaunchConfig,
    waves: WaveNumbers,
    wedge: Wedge,
    wedge_ident: int,
    fraction: float,
    floor_amp: float,
) -> list[RayState]:
    q = wedge.p0 + fraction * (wedge.p1 - wedge.p0)
    w = q - np.asarray(tx.position)
    s_p = float(np.linalg.norm(w))
    if s_p <= EPS_GEOM:
        return []
    d_in = w / s_p
    hit = intersect(np.asarray(tx.position, dtype=np.float64), d_in, scene)
    if hit is not None and not hit.is_bounds and hit.distance < s_p - 1e-6:
        return []
    phi_p = wedge.azimuth_of(-d_in)
    n_pi = wedge.n * math.pi
    if not _MIN_WEDGE_AZIMUTH <= phi_p <= n_pi - _MIN_WEDGE_AZIMUTH:
        return []
    e = wedge.edge_dir
    cos_b = float(d_in @ e)
    sin_b = math.sqrt(max(0.0, 1.0 - cos_b * cos_b))
    if sin_b < _MIN_SIN_BETA:
        return []
    beta0 = math.acos(min(1.0, max(-1.0, abs(cos_b))))  # folded to (0, pi/2]

    gain = antenna_gain(tx.antenna, d_in)
    if gain <= 0.0:
        return []
    e_inc = (
        math.sqrt(30.0 * tx.power_watts * gain)
        * launch_polarization(tx.antenna, d_in)
        / s_p
        * np.exp(-1j * waves.k * s_p)
    )
    phi_in_hat = -unit(cross3(e, d_in))
    beta_in_hat = cross3(phi_in_hat, d_in)
    a_soft = -complex(e_inc @ beta_in_hat)
    a_hard = -complex(e_inc @ phi_in_hat)

    u_hat = unit(d_in - cos_b * e)
    v_hat = cross3(e, u_hat)
    psis = np.arange(int(round(2.0 * math.pi / cfg.delta_phi))) * cfg.delta_phi
    d_out = (
        cos_b * e[None, :]
        + sin_b * (np.cos(psis)[:, None] * u_hat[None, :] + np.sin(psis)[:, None] * v_hat[None, :])
    )
    w_perp = d_out - (d_out @ e)[:, None] * e[None, :]
    phi_out = np.arctan2(w_perp @ wedge.n1, w_perp @ wedge.o_face_tangent) % (2.0 * math.pi)
    ok = (phi_out >= _MIN_WEDGE_AZIMUTH) & (phi_out <= n_pi - _MIN_WEDGE_AZIMUTH)
    if not ok.any():
        return []
    rows = np.flatnonzero(ok)
    d_far_s, d_far_h = wedge_coefficients(
        waves.k, wedge.n, phi_out[rows], phi_p, beta0, _FAR_FIELD_L
    )
    amp_eq = np.sqrt(
        (np.abs(d_far_s) ** 2 * abs(a_soft) ** 2 + np.abs(d_far_h) ** 2 * abs(a_hard) ** 2) * s_p
    )
    diff_hash = _fold_hash(_HASH_SEED, _EVENT_DIFFRACT, wedge_ident)
    states: list[RayState] = []
    for pos, row in enumerate(rows):
        if amp_eq[pos] < floor_amp:
            continue
        d_j = d_out[row]
        if not direction_in_window(d_j, cfg):
            continue
        phi_out_hat = unit(cross3(e, d_j))
        beta_out_hat = cross3(phi_out_hat, d_j)
        states.append(
            RayState(
                origin=q,
                direction=d_j,
                s_start=s_p,
                n_diffractions=1,
                path_hash=diff_hash,
                base_hash=diff_hash,
                exclude_id=wedge.obstacle_id,
                kind="diffracted",
                v_soft=(a_soft * beta_out_hat).astype(np.complex128),
                v_hard=(a_hard * phi_out_hat).astype(np.complex128),
                s_edge=s_p,
                wedge_n=wedge.n,
                phi=float(phi_out[row]),
                phi_p=phi_p,
                beta0=beta0,
                d_far_soft=complex(d_far_s[pos]),
                d_far_hard=complex(d_far_h[pos]),
            )
        )
    return states


# -- chunk execution ----------------------------------------------------------


def _floor_amplitude(tx: TransmitterSpec, cfg: LaunchConfig) -> float:
    peak = math.sqrt(30.0 * tx.power_watts * tx.antenna.peak_gain_linear)
    return peak * 10.0 ** (cfg.power_floor_db / 20.0)


def _run_chunk(args) -> tuple[np.ndarray, TraceStats]:
    """Trace one chunk of work into a fresh local grid (worker entry)."""
    kind, scene, tx, cfg, grid_args, payload = args
    grid = FieldGrid(*grid_args)
    stats = TraceStats()
    waves = grid.waves
    floor_amp = _floor_amplitude(tx, cfg)
    if kind == "primary":
        for direction in payload:
            state = _primary_state(tx, direction)
            if np.linalg.norm(state.amp) >= floor_amp:
                _trace_one(scene, cfg, waves, state, grid, floor_amp, stats)
    else:
        wedges = enumerate_edges(scene)
        for w_idx, fraction in payload:
            wedge = wedges[w_idx]
            ident = wedge.obstacle_id * 12 + wedge.edge_index
            children = _spawn_diffracted(
                scene, tx, cfg, waves, wedge, ident, fraction, floor_amp
            )
            stats.diffraction_sources += 1 if children else 0
            stats.diffracted_rays += len(children)
            for child in children:
                _trace_one(scene, cfg, waves, child, grid, floor_amp, stats)
    records = compact_records(grid.raw_buffers(), grid.cluster_window_s)
    return records, stats


def trace(
    scene: Scene,
    tx: TransmitterSpec,
    cfg: LaunchConfig,
    sink,
    workers: int = 1,
    deterministic: bool = False,
) -> TraceStats:
    """Trace a full launch into ``sink`` and return run statistics.

    With a :class:`FieldGrid` sink the workload is chunked and chunk
    results are merged in a fixed order, so any ``workers`` value yields
    the same stored components; ``deterministic`` simply forces
    single-process execution. Other sinks (anything with a
    ``deposit(segment)`` method) are fed sequentially in launch order.
    """
    _check_transmitter(scene, tx)
    if isinstance(sink, FieldGrid) and abs(sink.frequency_hz - tx.frequency_hz) > 1e-6:
        raise ValueError("grid and transmitter frequencies disagree")
    directions = launch_directions(cfg)
    stats = TraceStats(rays_launched=len(directions))
    waves = WaveNumbers(tx.frequency_hz)
    floor_amp = _floor_amplitude(tx, cfg)

    if not isinstance(sink, FieldGrid):
        for direction in directions:
            state = _primary_state(tx, direction)
            if np.linalg.norm(state.amp) >= floor_amp:
                _trace_one(scene, cfg, waves, state, sink, floor_amp, stats)
        if cfg.diffraction_enabled and cfg.max_diffractions > 0:
            wedges = enumerate_edges(scene)
            for w_idx, fraction in edge_samples(scene, tx, cfg):
                wedge = wedges[w_idx]
                ident = wedge.obstacle_id * 12 + wedge.edge_index
                children = _spawn_diffracted(
                    scene, tx, cfg, waves, wedge, ident, fraction, floor_amp
                )
                stats.diffraction_sources += 1 if children else 0
                stats.diffracted_rays += len(children)
                for child in children:
                    _trace_one(scene, cfg, waves, child, sink, floor_amp, stats)
        return stats

    grid_args = (sink.bounds_min, sink.bounds_max, sink.config, sink.frequency_hz)
    jobs = [
        ("primary", scene, tx, cfg, grid_args, directions[i : i + PRIMARY_CHUNK])
        for i in range(0, len(directions), PRIMARY_CHUNK)
    ]
    if cfg.diffraction_enabled and cfg.max_diffractions > 0:
        samples = edge_samples(scene, tx, cfg)
        jobs.extend(
            ("diffraction", scene, tx, cfg, grid_args, samples[i : i + DIFFRACTION_CHUNK])
            for i in range(0, len(samples), DIFFRACTION_CHUNK)
        )

    if deterministic:
        workers = 1
    if workers <= 1:
        results = map(_run_chunk, jobs)
        for records, chunk_stats in results:
            sink.extend_raw(records)
            stats.merge(chunk_stats)
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            for records, chunk_stats in pool.imap(_run_chunk, jobs):
                sink.extend_raw(records)
                stats.merge(chunk_stats)
    log.info(
        "traced %d rays (%d diffracted) into %d segments, %d components",
        stats.rays_launched,
        stats.diffracted_rays,
        stats.segments,
        stats.components,
    )
    return stats


def _check_transmitter(scene: Scene, tx: TransmitterSpec) -> None:
    pos = np.asarray(tx.position)
    for obstacle in scene.all_obstacles:
        if np.all(pos > obstacle.box_min + 1e-12) and np.all(pos < obstacle.box_max - 1e-12):
            raise ValueError(
                f"transmitter at {tx.position} sits inside obstacle {obstacle.name!r}"
            )
