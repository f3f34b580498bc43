"""Voxel field grid: multipath component storage and per-cell analysis.

The scene bounds are tiled by cubic cells (default edge 0.5 m). Each traced
ray segment deposits one multipath component into every cell its chord
crosses, with the field evaluated at the chord midpoint: amplitude follows
the segment's spreading law from the 1 m launch reference, phase is
``-k * s_mid`` over the unfolded path and the arrival delay is
``s_mid / c`` (material traversals count their geometric length; the extra
optical phase of a slab lives in the complex amplitude).

Analysis works on *effective* components. The launch lattice oversamples a
wavefront, so one physical path (same source, same ordered surface
sequence) usually crosses a cell as several nearly identical components
whose chord midpoints differ by at most a cell diagonal. Summing those
samples coherently would multiply one wavefront by the local ray count, so
components sharing an interaction path are first clustered by arrival
delay (window: one cell diagonal of travel) and each cluster is collapsed
to its median-delay member. Distinct paths never share a cluster because
the path key encodes the ordered list of surfaces hit. Received power then
bins effective components into consecutive ``delta_t`` windows anchored at
the earliest arrival, sums fields coherently inside a bin and adds bin
powers; the delay spread and the power-delay profile use the same
effective components.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .em import C0, ETA0, WaveNumbers, antenna_gain
from .geometry import Vec3, ray_box_interval
from .scene import AntennaPattern
from .utd import caustic_spreading, wedge_coefficients

#: Diffracted segments do not deposit closer than a quarter wavelength to
#: their edge, where the ray-optical caustic makes the field meaningless.
EDGE_CAUSTIC_GUARD_WAVELENGTHS = 0.25

_MIN_DEPOSIT_DISTANCE = 1e-3

#: Raw rows buffered before an in-place :func:`compact_records` pass. The
#: trigger counts appended rows only, so it fires at the same points in the
#: deposit stream no matter how the work was chunked or parallelised.
_COMPACT_THRESHOLD = 6_000_000

_RECORD_DTYPE = np.dtype(
    [
        ("cell", "<i4"),
        ("ex", "<c8"),
        ("ey", "<c8"),
        ("ez", "<c8"),
        ("delay", "<f4"),
        ("dirx", "<f4"),
        ("diry", "<f4"),
        ("dirz", "<f4"),
        ("nrefl", "u1"),
        ("ntrans", "u1"),
        ("ndiff", "u1"),
        ("path", "<u8"),
    ]
)

_DUMP_MAGIC = b"RLGRIDv1\n"


def compact_records(records: np.ndarray, window_s: float) -> np.ndarray:
    """Collapse same-wavefront samples of a record batch.

    Records sharing a cell, a path key and a quantised delay bin of width
    ``window_s`` are one wavefront sampled by neighbouring launch rays;
    only the median-delay member is kept. Quantisation can split a
    wavefront across two bins, which is harmless because the per-cell
    clustering in :meth:`FieldGrid.effective_components` merges the
    survivors again; it can never merge arrivals more than ``window_s``
    apart. Used to shrink tracer output batches before accumulation.
    """
    if len(records) < 2:
        return records
    qdelay = np.floor(records["delay"] / np.float32(window_s)).astype(np.int64)
    order = np.lexsort(
        (np.arange(len(records)), records["delay"], qdelay, records["path"], records["cell"])
    )
    cell = records["cell"][order]
    path = records["path"][order]
    qd = qdelay[order]
    new_group = np.empty(len(records), dtype=bool)
    new_group[0] = True
    new_group[1:] = (
        (cell[1:] != cell[:-1]) | (path[1:] != path[:-1]) | (qd[1:] != qd[:-1])
    )
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], len(records))
    reps = order[starts + (ends - starts - 1) // 2]
    return records[reps]


@dataclass(frozen=True)
class GridConfig:
    """Grid resolution and receiver-side analysis parameters.

    ``delta_t`` is the coherence window used by received-power binning;
    pick it to match the symbol duration of the modulation under study.
    """

    cell_size: float = 0.5
    delta_t: float = 1e-6
    rx_antenna: AntennaPattern = field(default_factory=AntennaPattern)

    def __post_init__(self) -> None:
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        if self.delta_t <= 0.0:
            raise ValueError("delta_t must be positive")


@dataclass(frozen=True)
class MultipathComponent:
    """One deposited field sample: complex vector, arrival delay, origin tag."""

    field_vec: np.ndarray
    delay_s: float
    direction: np.ndarray
    n_reflections: int
    n_transmissions: int
    n_diffractions: int
    path_key: int

    @property
    def signature(self) -> tuple[int, int, int]:
        return (self.n_reflections, self.n_transmissions, self.n_diffractions)


@dataclass
class Segment:
    """A free-flight piece of a traced ray, the unit handed to deposit().

    ``kind`` selects the spreading law. Spherical segments carry ``amp``,
    the complex field-vector referenced to 1 m, so the field at unfolded
    distance ``s`` is ``amp / s * exp(-j k s)``. Diffracted segments carry
    the soft/hard channel vectors, the edge distance ``s_edge`` and the
    wedge geometry; their field at ``s`` is

        (D_s(L(u)) * v_soft + D_h(L(u)) * v_hard)
            * sqrt(s_edge / (u (s_edge + u))) * exp(-j k u),   u = s - s_edge

    with the transition-function argument re-evaluated per deposit cell so
    shadow-boundary smoothing tracks the observation distance.
    """

    origin: Vec3
    direction: Vec3
    length: float
    s_start: float
    n_reflections: int
    n_transmissions: int
    n_diffractions: int
    path_hash: int
    kind: str = "spherical"
    amp: np.ndarray | None = None
    v_soft: np.ndarray | None = None
    v_hard: np.ndarray | None = None
    s_edge: float = 0.0
    wedge_n: float = 1.5
    phi: float = 0.0
    phi_p: float = 0.0
    beta0: float = 0.0


@dataclass(frozen=True)
class ResultPlane:
    """A horizontal slice of per-cell values with cell-centre coordinates."""

    quantity: str
    height: float
    z_index: int
    cell_size: float
    x_centers: np.ndarray
    y_centers: np.ndarray
    values: np.ndarray  # shape (ny, nx); NaN marks cells without data

    def to_csv(self, path: str | Path) -> None:
        """Write ``x_m,y_m,value`` rows; cells without data read ``nan``."""
        with open(path, "w") as fh:
            fh.write(f"# quantity: {self.quantity}\n")
            fh.write(f"# height_m: {self.height}\n")
            fh.write(f"# cell_size_m: {self.cell_size}\n")
            fh.write("x_m,y_m,value\n")
            for iy, y in enumerate(self.y_centers):
                for ix, x in enumerate(self.x_centers):
                    v = self.values[iy, ix]
                    text = "nan" if not np.isfinite(v) else f"{v:.6f}"
                    fh.write(f"{x:.3f},{y:.3f},{text}\n")


class FieldGrid:
    """Append-only store of multipath components over the scene voxels."""

    def __init__(
        self,
        bounds_min: Vec3,
        bounds_max: Vec3,
        config: GridConfig,
        frequency_hz: float,
    ) -> None:
        self.bounds_min = np.asarray(bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(bounds_max, dtype=np.float64)
        self.config = config
        self.frequency_hz = float(frequency_hz)
        self.waves = WaveNumbers(frequency_hz)
        h = config.cell_size
        spans = self.bounds_max - self.bounds_min
        self.shape = tuple(max(1, int(math.ceil(s / h - 1e-9))) for s in spans)
        self.nx, self.ny, self.nz = self.shape
        self._buffers: list[np.ndarray] = []
        self._pending_rows = 0
        self._records: np.ndarray | None = None
        self._order: np.ndarray | None = None
        self._offsets: np.ndarray | None = None
        #: delay window within which same-path samples are one wavefront
        self.cluster_window_s = math.sqrt(3.0) * h / C0

    # -- deposit -----------------------------------------------------------

    def deposit(self, segment: Segment) -> int:
        """Rasterise one segment; returns the number of cells it touched."""
        if segment.length <= 0.0:
            return 0
        h = self.config.cell_size
        o = self.bounds_min
        p0 = segment.origin
        d = segment.direction
        # clamp to the part of the chord inside the grid; without this,
        # midpoints past the volume would clip into boundary cells and
        # deposit spurious duplicates there
        span = ray_box_interval(p0, d, self.bounds_min, self.bounds_max)
        if span is None:
            return 0
        t_lo = max(0.0, span[0])
        t_hi = min(segment.length, span[1])
        if t_hi - t_lo <= 1e-12:
            return 0
        ts = [np.array([t_lo, t_hi])]
        for axis in range(3):
            da = d[axis]
            if da == 0.0:
                continue
            q0 = (p0[axis] - o[axis]) / h
            q1 = q0 + da * segment.length / h
            lo, hi = (q0, q1) if q1 >= q0 else (q1, q0)
            first = math.floor(lo) + 1
            last = math.ceil(hi) - 1
            if last < first:
                continue
            planes = np.arange(first, last + 1, dtype=np.float64)
            ts.append((planes * h - (p0[axis] - o[axis])) / da)
        t = np.unique(np.concatenate(ts))
        t = t[(t >= t_lo) & (t <= t_hi)]
        if len(t) < 2:
            return 0
        dt = np.diff(t)
        keep = dt > 1e-12
        t_mid = (t[:-1] + 0.5 * dt)[keep]
        if not len(t_mid):
            return 0
        points = p0[None, :] + t_mid[:, None] * d[None, :]
        idx = ((points - o[None, :]) / h).astype(np.int64)
        np.clip(idx, 0, np.array(self.shape) - 1, out=idx)
        flat = idx[:, 0] + self.nx * (idx[:, 1] + self.ny * idx[:, 2])
        s_mid = segment.s_start + t_mid

        fields = self._evaluate(segment, s_mid)
        ok = np.isfinite(fields).all(axis=1) & (s_mid > _MIN_DEPOSIT_DISTANCE)
        if segment.kind == "diffracted":
            guard = EDGE_CAUSTIC_GUARD_WAVELENGTHS * self.waves.wavelength
            ok &= (s_mid - segment.s_edge) > guard
        if not ok.any():
            return 0
        flat, s_mid, fields = flat[ok], s_mid[ok], fields[ok]

        rec = np.empty(len(flat), dtype=_RECORD_DTYPE)
        rec["cell"] = flat
        rec["ex"], rec["ey"], rec["ez"] = (
            fields[:, 0].astype(np.complex64),
            fields[:, 1].astype(np.complex64),
            fields[:, 2].astype(np.complex64),
        )
        rec["delay"] = (s_mid / C0).astype(np.float32)
        rec["dirx"], rec["diry"], rec["dirz"] = (
            np.float32(d[0]),
            np.float32(d[1]),
            np.float32(d[2]),
        )
        rec["nrefl"] = segment.n_reflections
        rec["ntrans"] = segment.n_transmissions
        rec["ndiff"] = segment.n_diffractions
        rec["path"] = np.uint64(segment.path_hash)
        self._buffers.append(rec)
        self._pending_rows += len(rec)
        self._records = None
        if self._pending_rows >= _COMPACT_THRESHOLD:
            self._compact_buffers()
        return len(rec)

    def _evaluate(self, segment: Segment, s_mid: np.ndarray) -> np.ndarray:
        k = self.waves.k
        if segment.kind == "spherical":
            phase = np.exp(-1j * k * s_mid) / s_mid
            return segment.amp[None, :] * phase[:, None]
        if segment.kind != "diffracted":
            raise ValueError(f"unknown segment kind {segment.kind!r}")
        u = s_mid - segment.s_edge
        u = np.maximum(u, 1e-12)
        sin_b = math.sin(segment.beta0)
        L = segment.s_edge * u * sin_b**2 / (segment.s_edge + u)
        d_soft, d_hard = wedge_coefficients(
            k, segment.wedge_n, segment.phi, segment.phi_p, segment.beta0, L
        )
        spread = caustic_spreading(segment.s_edge, u) * np.exp(-1j * k * u)
        return (
            d_soft[:, None] * segment.v_soft[None, :]
            + d_hard[:, None] * segment.v_hard[None, :]
        ) * spread[:, None]

    # -- indexing ----------------------------------------------------------

    def extend_raw(self, records: np.ndarray) -> None:
        """Append pre-built records (worker shard merge path)."""
        if records.dtype != _RECORD_DTYPE:
            raise ValueError("records have the wrong dtype")
        if len(records):
            self._buffers.append(records)
            self._pending_rows += len(records)
            self._records = None
            if self._pending_rows >= _COMPACT_THRESHOLD:
                self._compact_buffers()

    def raw_buffers(self) -> np.ndarray:
        return (
            np.concatenate(self._buffers)
            if self._buffers
            else np.empty(0, dtype=_RECORD_DTYPE)
        )

    def _compact_buffers(self) -> None:
        """Collapse buffered same-wavefront samples to bound memory."""
        records = compact_records(self.raw_buffers(), self.cluster_window_s)
        self._buffers = [records]
        self._pending_rows = 0

    @property
    def n_components(self) -> int:
        self._finalize()
        return len(self._records)

    def _finalize(self) -> None:
        if self._records is not None:
            return
        # Mid-trace compaction may have left one representative per
        # wavefront per compacted stretch; query-time re-clustering in
        # effective_components merges those, so no global pass is needed.
        records = self.raw_buffers()
        order = np.argsort(records["cell"], kind="stable")
        self._records = records[order]
        n_cells = self.nx * self.ny * self.nz
        self._offsets = np.searchsorted(
            self._records["cell"], np.arange(n_cells + 1)
        )

    def cell_index(self, position: Vec3) -> tuple[int, int, int]:
        """Cell containing a point; raises if outside the grid."""
        rel = (np.asarray(position, dtype=np.float64) - self.bounds_min) / self.config.cell_size
        idx = np.floor(rel).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ValueError(f"position {position} lies outside the grid")
        return int(idx[0]), int(idx[1]), int(idx[2])

    def cell_center(self, cell: tuple[int, int, int]) -> np.ndarray:
        return self.bounds_min + (np.asarray(cell, dtype=np.float64) + 0.5) * self.config.cell_size

    def _cell_records(self, cell: tuple[int, int, int]) -> np.ndarray:
        self._finalize()
        ix, iy, iz = cell
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz):
            raise ValueError(f"cell {cell} outside grid of shape {self.shape}")
        flat = ix + self.nx * (iy + self.ny * iz)
        return self._records[self._offsets[flat] : self._offsets[flat + 1]]

    def components_at(self, cell: tuple[int, int, int]) -> list[MultipathComponent]:
        """Raw (pre-clustering) components stored in one cell."""
        return [self._to_component(r) for r in self._cell_records(cell)]

    @staticmethod
    def _to_component(rec) -> MultipathComponent:
        return MultipathComponent(
            field_vec=np.array(
                [rec["ex"], rec["ey"], rec["ez"]], dtype=np.complex128
            ),
            delay_s=float(rec["delay"]),
            direction=np.array([rec["dirx"], rec["diry"], rec["dirz"]], dtype=np.float64),
            n_reflections=int(rec["nrefl"]),
            n_transmissions=int(rec["ntrans"]),
            n_diffractions=int(rec["ndiff"]),
            path_key=int(rec["path"]),
        )

    def effective_components(self, cell: tuple[int, int, int]) -> list[MultipathComponent]:
        """De-aliased multipath components of one cell.

        Same-path samples within one cell-diagonal of delay collapse to
        their median-delay member; the survivors are returned sorted by
        delay.
        """
        recs = self._cell_records(cell)
        if not len(recs):
            return []
        reps: list[MultipathComponent] = []
        order = np.lexsort((np.arange(len(recs)), recs["delay"], recs["path"]))
        sorted_recs = recs[order]
        start = 0
        for i in range(1, len(sorted_recs) + 1):
            if (
                i == len(sorted_recs)
                or sorted_recs["path"][i] != sorted_recs["path"][start]
                or sorted_recs["delay"][i] - sorted_recs["delay"][start]
                > self.cluster_window_s
            ):
                rep = sorted_recs[start + (i - 1 - start) // 2]
                reps.append(self._to_component(rep))
                start = i
        reps.sort(key=lambda c: c.delay_s)
        return reps

    # -- per-cell analysis ---------------------------------------------------

    def _rx_weight(self, component: MultipathComponent) -> float:
        gain = antenna_gain(self.config.rx_antenna, -component.direction)
        return math.sqrt(max(gain, 0.0))

    def _component_power_watts(self, comps: list[MultipathComponent]) -> float:
        """Coherent power of a set of components arriving together."""
        total = np.zeros(3, dtype=np.complex128)
        for c in comps:
            total += self._rx_weight(c) * c.field_vec
        aperture = self.waves.wavelength**2 / (4.0 * np.pi)
        return float(np.vdot(total, total).real) / ETA0 * aperture

    def received_power_dbm(self, cell: tuple[int, int, int]) -> float:
        """Power over all delay bins; empty cells give the -inf sentinel."""
        comps = self.effective_components(cell)
        if not comps:
            return -math.inf
        t0 = comps[0].delay_s
        bins: dict[int, list[MultipathComponent]] = {}
        for c in comps:
            bins.setdefault(int((c.delay_s - t0) / self.config.delta_t), []).append(c)
        watts = sum(self._component_power_watts(group) for group in bins.values())
        if watts <= 0.0:
            return -math.inf
        return 10.0 * math.log10(watts) + 30.0

    def delay_spread_ns(self, cell: tuple[int, int, int]) -> float:
        """Spread between first and last arrival in ns; NaN when empty."""
        comps = self.effective_components(cell)
        if not comps:
            return math.nan
        return (comps[-1].delay_s - comps[0].delay_s) * 1e9

    def pdp(self, cell: tuple[int, int, int]) -> list[tuple[float, float]]:
        """Power-delay profile: (delay_ns, power_dbm) per effective component."""
        out = []
        for c in self.effective_components(cell):
            watts = self._component_power_watts([c])
            power = 10.0 * math.log10(watts) + 30.0 if watts > 0.0 else -math.inf
            out.append((c.delay_s * 1e9, power))
        return out

    # -- slices --------------------------------------------------------------

    def layer_index(self, height: float) -> int:
        iz = int(math.floor((height - self.bounds_min[2]) / self.config.cell_size))
        if not 0 <= iz < self.nz:
            raise ValueError(
                f"height {height} m is outside the grid (z range "
                f"{self.bounds_min[2]}..{self.bounds_min[2] + self.nz * self.config.cell_size})"
            )
        return iz

    def plane_slice(self, height: float, quantity: str = "power") -> ResultPlane:
        """Horizontal plane of received power (dBm) or delay spread (ns)."""
        if quantity not in ("power", "delay_spread"):
            raise ValueError(f"unknown slice quantity {quantity!r}")
        iz = self.layer_index(height)
        values = np.full((self.ny, self.nx), np.nan)
        for iy in range(self.ny):
            for ix in range(self.nx):
                if quantity == "power":
                    v = self.received_power_dbm((ix, iy, iz))
                    values[iy, ix] = np.nan if v == -math.inf else v
                else:
                    values[iy, ix] = self.delay_spread_ns((ix, iy, iz))
        h = self.config.cell_size
        return ResultPlane(
            quantity=quantity,
            height=height,
            z_index=iz,
            cell_size=h,
            x_centers=self.bounds_min[0] + (np.arange(self.nx) + 0.5) * h,
            y_centers=self.bounds_min[1] + (np.arange(self.ny) + 0.5) * h,
            values=values,
        )

    # -- persistence -----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the grid dump: JSON header, then packed component records."""
        self._finalize()
        header = {
            "format": "raylaunch-grid",
            "version": 1,
            "bounds_min": list(self.bounds_min),
            "bounds_max": list(self.bounds_max),
            "cell_size": self.config.cell_size,
            "delta_t": self.config.delta_t,
            "rx_antenna": {
                "kind": self.config.rx_antenna.kind,
                "peak_gain_dbi": self.config.rx_antenna.peak_gain_dbi,
            },
            "frequency_hz": self.frequency_hz,
            "shape": list(self.shape),
            "n_components": int(len(self._records)),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_DUMP_MAGIC)
            fh.write(len(blob).to_bytes(8, "little"))
            fh.write(blob)
            fh.write(self._records.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "FieldGrid":
        with open(path, "rb") as fh:
            magic = fh.read(len(_DUMP_MAGIC))
            if magic != _DUMP_MAGIC:
                raise ValueError(f"{path}: not a raylaunch grid dump")
            size = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(size))
            body = fh.read()
        config = GridConfig(
            cell_size=header["cell_size"],
            delta_t=header["delta_t"],
            rx_antenna=AntennaPattern(**header["rx_antenna"]),
        )
        grid = cls(
            np.array(header["bounds_min"]),
            np.array(header["bounds_max"]),
            config,
            header["frequency_hz"],
        )
        if len(body) != header["n_components"] * _RECORD_DTYPE.itemsize:
            raise ValueError(f"{path}: truncated grid dump")
        records = np.frombuffer(body, dtype=_RECORD_DTYPE).copy()
        grid.extend_raw(records)
        return grid
