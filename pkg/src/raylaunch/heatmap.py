"""Dependency-free PPM heatmap export for result planes.

Writes binary P6 images, one pixel per grid cell, using a fixed
five-stop colour ramp interpolated linearly in value:

    stop 0.00  ( 13,   8, 135)   dark blue
    stop 0.25  (126,   3, 168)   purple
    stop 0.50  (204,  71, 120)   magenta
    stop 0.75  (248, 149,  64)   orange
    stop 1.00  (240, 249,  33)   yellow

Cells without data render black. Every image gets a sidecar text file
(``<image>.scale``) recording the value range and the ramp stops so the
colours stay interpretable away from the tool.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import ResultPlane

DEFAULT_RAMP: tuple[tuple[int, int, int], ...] = (
    (13, 8, 135),
    (126, 3, 168),
    (204, 71, 120),
    (248, 149, 64),
    (240, 249, 33),
)

NO_DATA_RGB = (0, 0, 0)


def colorize(values: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    """Map values to (..., 3) uint8 colours on the default ramp.

    Values clip to [vmin, vmax]; NaN maps to the no-data colour.
    """
    if not vmax > vmin:
        raise ValueError("vmax must exceed vmin")
    values = np.asarray(values, dtype=np.float64)
    invalid = ~np.isfinite(values)
    t = np.clip((np.where(invalid, vmin, values) - vmin) / (vmax - vmin), 0.0, 1.0)
    ramp = np.asarray(DEFAULT_RAMP, dtype=np.float64)
    pos = t * (len(ramp) - 1)
    low = np.floor(pos).astype(int)
    high = np.minimum(low + 1, len(ramp) - 1)
    frac = (pos - low)[..., None]
    rgb = ramp[low] * (1.0 - frac) + ramp[high] * frac
    rgb = np.round(rgb).astype(np.uint8)
    rgb[invalid] = np.array(NO_DATA_RGB, dtype=np.uint8)
    return rgb


def write_ppm(
    plane: ResultPlane,
    path: str | Path,
    vmin: float | None = None,
    vmax: float | None = None,
) -> tuple[float, float]:
    """Render a plane to a binary PPM plus its ``.scale`` sidecar.

    Rows are written north-up (largest y first). When ``vmin``/``vmax``
    are omitted they come from the finite data; a plane with no finite
    cells needs both. Returns the (vmin, vmax) actually used.
    """
    values = plane.values
    finite = values[np.isfinite(values)]
    if vmin is None:
        if not len(finite):
            raise ValueError("plane has no data; pass vmin and vmax explicitly")
        vmin = float(finite.min())
    if vmax is None:
        if not len(finite):
            raise ValueError("plane has no data; pass vmin and vmax explicitly")
        vmax = float(finite.max())
    if vmax <= vmin:
        vmax = vmin + 1e-9
    rgb = colorize(values[::-1, :], vmin, vmax)
    ny, nx = values.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{nx} {ny}\n255\n".encode())
        fh.write(rgb.tobytes())
    stops = " ".join(f"({r},{g},{b})" for r, g, b in DEFAULT_RAMP)
    with open(path.with_name(path.name + ".scale"), "w") as fh:
        fh.write(f"quantity: {plane.quantity}\n")
        fh.write(f"height_m: {plane.height}\n")
        fh.write(f"vmin: {vmin}\n")
        fh.write(f"vmax: {vmax}\n")
        fh.write(f"ramp: {stops}\n")
        fh.write(f"no_data_rgb: {NO_DATA_RGB}\n")
    return vmin, vmax
