"""Comparison against measurements, coverage metrics and run orchestration."""

from __future__ import annotations

import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import LaunchConfig, TraceStats, trace
from .grid import FieldGrid, GridConfig, ResultPlane
from .scene import AntennaPattern, Scene, load_scene

log = logging.getLogger(__name__)


@dataclass
class MeasurementSet:
    """Measured received power at survey points.

    CSV exchange format: header ``x_m,y_m,z_m,power_dbm``, one row per
    point, comment lines starting with ``#`` ignored.
    """

    positions: np.ndarray  # (n, 3)
    power_dbm: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.power_dbm = np.asarray(self.power_dbm, dtype=np.float64).reshape(-1)
        if len(self.positions) != len(self.power_dbm):
            raise ValueError("positions and power_dbm lengths differ")

    def __len__(self) -> int:
        return len(self.power_dbm)

    @classmethod
    def from_csv(cls, path: str | Path) -> "MeasurementSet":
        positions = []
        powers = []
        with open(path) as fh:
            header = None
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if header is None:
                    header = [c.strip() for c in line.split(",")]
                    if header != ["x_m", "y_m", "z_m", "power_dbm"]:
                        raise ValueError(
                            f"{path}:{lineno}: expected header x_m,y_m,z_m,power_dbm"
                        )
                    continue
                parts = line.split(",")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
                try:
                    values = [float(p) for p in parts]
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
                positions.append(values[:3])
                powers.append(values[3])
        if not positions:
            raise ValueError(f"{path}: no measurement rows found")
        return cls(np.array(positions), np.array(powers))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("x_m,y_m,z_m,power_dbm\n")
            for pos, p in zip(self.positions, self.power_dbm):
                fh.write(f"{pos[0]:.3f},{pos[1]:.3f},{pos[2]:.3f},{p:.3f}\n")


@dataclass(frozen=True)
class ComparisonRow:
    position: tuple[float, float, float]
    measured_dbm: float
    predicted_dbm: float  # -inf when the cell holds no components
    error_db: float | None  # predicted - measured; None without prediction


@dataclass(frozen=True)
class ComparisonReport:
    """Prediction-vs-measurement summary.

    ``mae_db`` is the mean absolute error and ``std_db`` the population
    standard deviation of the signed errors, both over points where the
    grid holds a prediction; points in empty cells are only counted in
    ``n_no_data``.
    """

    rows: tuple[ComparisonRow, ...]
    mae_db: float
    std_db: float
    n_compared: int
    n_no_data: int

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("x_m,y_m,z_m,measured_dbm,predicted_dbm,error_db\n")
            for row in self.rows:
                x, y, z = row.position
                pred = "nan" if not math.isfinite(row.predicted_dbm) else f"{row.predicted_dbm:.3f}"
                err = "nan" if row.error_db is None else f"{row.error_db:.3f}"
                fh.write(f"{x:.3f},{y:.3f},{z:.3f},{row.measured_dbm:.3f},{pred},{err}\n")

    def summary(self) -> str:
        return (
            f"compared {self.n_compared} points ({self.n_no_data} without prediction): "
            f"MAE {self.mae_db:.2f} dB, error std {self.std_db:.2f} dB"
        )


def error_statistics(errors) -> tuple[float, float]:
    """(mean absolute error, population standard deviation) of errors."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        return math.nan, math.nan
    return float(np.mean(np.abs(errors))), float(np.std(errors))


def compare(grid: FieldGrid, measurements: MeasurementSet) -> ComparisonReport:
    """Evaluate grid predictions at measurement points.

    Points whose cell carries no multipath components are reported but
    excluded from the statistics; points outside the grid raise.
    """
    rows = []
    errors = []
    n_no_data = 0
    for pos, measured in zip(measurements.positions, measurements.power_dbm):
        cell = grid.cell_index(pos)
        predicted = grid.received_power_dbm(cell)
        if math.isfinite(predicted):
            error = predicted - measured
            errors.append(error)
        else:
            error = None
            n_no_data += 1
        rows.append(
            ComparisonRow(
                position=(float(pos[0]), float(pos[1]), float(pos[2])),
                measured_dbm=float(measured),
                predicted_dbm=predicted,
                error_db=error,
            )
        )
    mae, std = error_statistics(errors)
    return ComparisonReport(
        rows=tuple(rows),
        mae_db=mae,
        std_db=std,
        n_compared=len(errors),
        n_no_data=n_no_data,
    )


@dataclass(frozen=True)
class CoverageResult:
    """Fraction of evaluable cells at or above a sensitivity threshold."""

    sensitivity_dbm: float
    mask: np.ndarray  # True where covered; False below threshold or no data
    fraction: float
    n_covered: int
    n_valid: int


def coverage(plane: ResultPlane, sensitivity_dbm: float) -> CoverageResult:
    """Coverage of a power plane: covered / cells-with-data.

    Cells without data (NaN) are excluded from the denominator; an all-NaN
    plane yields fraction NaN.
    """
    if plane.quantity != "power":
        raise ValueError("coverage needs a power plane")
    valid = np.isfinite(plane.values)
    mask = valid & (plane.values >= sensitivity_dbm)
    n_valid = int(valid.sum())
    n_covered = int(mask.sum())
    fraction = n_covered / n_valid if n_valid else math.nan
    return CoverageResult(
        sensitivity_dbm=sensitivity_dbm,
        mask=mask,
        fraction=fraction,
        n_covered=n_covered,
        n_valid=n_valid,
    )


# -- run orchestration --------------------------------------------------------


@dataclass
class RunSettings:
    """Resolved knobs of one simulation run (JSON config file contents)."""

    launch: LaunchConfig = field(default_factory=LaunchConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    slice_heights_m: tuple[float, ...] = (1.5,)
    transmitter_index: int = 0


_DEG = math.pi / 180.0

_CONFIG_KEYS = {
    "delta_theta_deg",
    "delta_phi_deg",
    "max_reflections",
    "max_transmissions",
    "max_diffractions",
    "diffraction_enabled",
    "power_floor_db",
    "theta_window_deg",
    "phi_window_deg",
    "cell_size_m",
    "delta_t_s",
    "rx_antenna",
    "slice_heights_m",
    "transmitter_index",
}


def settings_from_dict(raw: dict) -> RunSettings:
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    launch_kwargs = {}
    if "delta_theta_deg" in raw:
        launch_kwargs["delta_theta"] = float(raw["delta_theta_deg"]) * _DEG
    if "delta_phi_deg" in raw:
        launch_kwargs["delta_phi"] = float(raw["delta_phi_deg"]) * _DEG
    for key in ("max_reflections", "max_transmissions", "max_diffractions"):
        if key in raw:
            launch_kwargs[key] = int(raw[key])
    if "diffraction_enabled" in raw:
        launch_kwargs["diffraction_enabled"] = bool(raw["diffraction_enabled"])
    if "power_floor_db" in raw:
        launch_kwargs["power_floor_db"] = float(raw["power_floor_db"])
    if "theta_window_deg" in raw:
        lo, hi = raw["theta_window_deg"]
        launch_kwargs["theta_window"] = (float(lo) * _DEG, float(hi) * _DEG)
    if "phi_window_deg" in raw:
        lo, hi = raw["phi_window_deg"]
        launch_kwargs["phi_window"] = (float(lo) * _DEG, float(hi) * _DEG)
    grid_kwargs = {}
    if "cell_size_m" in raw:
        grid_kwargs["cell_size"] = float(raw["cell_size_m"])
    if "delta_t_s" in raw:
        grid_kwargs["delta_t"] = float(raw["delta_t_s"])
    if "rx_antenna" in raw:
        spec = raw["rx_antenna"]
        grid_kwargs["rx_antenna"] = AntennaPattern(
            kind=spec.get("kind", "isotropic"),
            peak_gain_dbi=float(spec.get("peak_gain_dbi", 0.0)),
        )
    return RunSettings(
        launch=LaunchConfig(**launch_kwargs),
        grid=GridConfig(**grid_kwargs),
        slice_heights_m=tuple(float(h) for h in raw.get("slice_heights_m", (1.5,))),
        transmitter_index=int(raw.get("transmitter_index", 0)),
    )


def load_settings(path: str | Path) -> RunSettings:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return settings_from_dict(raw)


@dataclass
class RunResult:
    grid: FieldGrid
    stats: TraceStats
    manifest: dict
    outputs: list[Path]


def run(
    scene: Scene | str | Path,
    settings: RunSettings | str | Path | None = None,
    out_dir: str | Path = ".",
    workers: int = 1,
    deterministic: bool = False,
) -> RunResult:
    """Simulate one transmitter and write the standard output set.

    Writes ``grid.rlg``, per-height power and delay-spread slice CSVs with
    matching PNG renderings, and ``manifest.json``. On failure every file
    already written by this call is removed before the exception
    propagates, so an output directory never holds a partial result set.
    """
    from .heatmap import DEFAULT_RAMP  # noqa: F401  (import check only)
    from .plots import plot_plane

    scene_path = None
    if not isinstance(scene, Scene):
        scene_path = str(scene)
        scene = load_scene(scene)
    if settings is None:
        settings = RunSettings()
    elif not isinstance(settings, RunSettings):
        settings = load_settings(settings)
    if not 0 <= settings.transmitter_index < len(scene.transmitters):
        raise ValueError(
            f"transmitter_index {settings.transmitter_index} out of range "
            f"(scene has {len(scene.transmitters)} transmitters)"
        )
    tx = scene.transmitters[settings.transmitter_index]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    t_start = time.perf_counter()
    try:
        grid = FieldGrid(scene.bounds_min, scene.bounds_max, settings.grid, tx.frequency_hz)
        stats = trace(scene, tx, settings.launch, grid, workers=workers, deterministic=deterministic)

        dump_path = out / "grid.rlg"
        grid.save(dump_path)
        written.append(dump_path)

        for height in settings.slice_heights_m:
            for quantity, label in (("power", "received power [dBm]"),
                                    ("delay_spread", "delay spread [ns]")):
                plane = grid.plane_slice(height, quantity)
                # not Path.with_suffix: a fractional height like 1.5 would
                # lose its ".5" to the suffix replacement
                csv_path = out / f"{quantity}_h{height:g}.csv"
                plane.to_csv(csv_path)
                written.append(csv_path)
                png_path = out / f"{quantity}_h{height:g}.png"
                plot_plane(plane, png_path, label)
                written.append(png_path)

        elapsed = time.perf_counter() - t_start
        manifest = {
            "tool": {"name": "raylaunch", "version": __version__},
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scene": scene_path,
            "transmitter": {
                "position": list(map(float, tx.position)),
                "power_dbm": tx.power_dbm,
                "frequency_hz": tx.frequency_hz,
                "antenna": {"kind": tx.antenna.kind, "peak_gain_dbi": tx.antenna.peak_gain_dbi},
            },
            "launch": {
                "delta_theta_rad": settings.launch.delta_theta,
                "delta_phi_rad": settings.launch.delta_phi,
                "max_reflections": settings.launch.max_reflections,
                "max_transmissions": settings.launch.max_transmissions,
                "max_diffractions": settings.launch.max_diffractions,
                "diffraction_enabled": settings.launch.diffraction_enabled,
                "power_floor_db": settings.launch.power_floor_db,
            },
            "grid": {
                "cell_size_m": settings.grid.cell_size,
                "delta_t_s": settings.grid.delta_t,
                "shape": list(grid.shape),
                "components": grid.n_components,
            },
            "stats": stats.as_dict(),
            "workers": workers,
            "deterministic": deterministic,
            "wall_clock_s": round(elapsed, 3),
            "outputs": [p.name for p in written],
        }
        manifest_path = out / "manifest.json"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(manifest_path)
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise
    log.info("run finished in %.1f s, outputs in %s", elapsed, out)
    return RunResult(grid=grid, stats=stats, manifest=manifest, outputs=written)
