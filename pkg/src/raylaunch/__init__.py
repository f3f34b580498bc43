"""raylaunch: GO/UTD ray-launching radio coverage prediction on voxel grids.

Scenes are axis-aligned box worlds with lossy dielectric or metal
obstacles. Rays launch on a regular angular lattice, reflect, pass
through thin slabs and diffract at illuminated box edges; every traversed
grid cell collects multipath components that per-cell analysis turns into
received power, delay spread and power-delay profiles.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import (
    ComparisonReport,
    CoverageResult,
    MeasurementSet,
    RunResult,
    RunSettings,
    compare,
    coverage,
    load_settings,
    run,
)
from .em import C0, ETA0, WaveNumbers, fresnel_coefficients, slab_coefficients
from .engine import LaunchConfig, TraceStats, launch_directions, trace
from .grid import FieldGrid, GridConfig, MultipathComponent, ResultPlane, Segment
from .materials import MaterialSpec, default_materials
from .scene import (
    AntennaPattern,
    Obstacle,
    Scene,
    SceneFormatError,
    SceneValidationError,
    TransmitterSpec,
    Wedge,
    enumerate_edges,
    load_scene,
    save_scene,
)
from .utd import utd_diffraction, wedge_coefficients

__all__ = [
    "__version__",
    "AntennaPattern",
    "C0",
    "ComparisonReport",
    "CoverageResult",
    "ETA0",
    "FieldGrid",
    "GridConfig",
    "LaunchConfig",
    "MaterialSpec",
    "MeasurementSet",
    "MultipathComponent",
    "Obstacle",
    "ResultPlane",
    "RunResult",
    "RunSettings",
    "Scene",
    "SceneFormatError",
    "SceneValidationError",
    "Segment",
    "TraceStats",
    "TransmitterSpec",
    "WaveNumbers",
    "Wedge",
    "compare",
    "coverage",
    "default_materials",
    "enumerate_edges",
    "fresnel_coefficients",
    "launch_directions",
    "load_scene",
    "load_settings",
    "run",
    "save_scene",
    "slab_coefficients",
    "trace",
    "utd_diffraction",
    "wedge_coefficients",
]
