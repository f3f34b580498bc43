"""Small vector and axis-aligned-box helpers shared by the scene and the tracer.

Positions and directions are plain ``numpy`` float64 arrays of shape (3,).
All lengths are metres.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]

#: Minimum accepted hit distance; guards against a ray re-hitting the surface
#: it was just spawned on due to floating point round-off.
EPS_GEOM = 1e-6


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def as_vec3(values) -> Vec3:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return arr


def norm(v: Vec3) -> float:
    return float(np.sqrt(v @ v))


def unit(v: Vec3) -> Vec3:
    n = norm(v)
    if n == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return v / n


def cross3(a, b):
    """Cross product over the last axis, without ``np.cross`` overhead.

    ``np.cross`` spends most of its time reshaping; spelling the components
    out is an order of magnitude faster for the (3,) and (N, 3) shapes used
    throughout the tracer.
    """
    if a.ndim == 1 and b.ndim == 1:
        return np.array(
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        )
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx), axis=-1)


def perpendicular_unit(v: Vec3) -> Vec3:
    """Any unit vector orthogonal to ``v``, chosen deterministically.

    Crosses ``v`` with the coordinate axis it is least aligned with, which
    keeps the result well conditioned for every input.
    """
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(v)))] = 1.0
    return unit(cross3(v, axis))


def ray_box_interval(
    origin: Vec3, direction: Vec3, box_min: Vec3, box_max: Vec3
) -> tuple[float, float] | None:
    """Entry/exit parameters of a ray against one axis-aligned box.

    Returns ``(t_near, t_far)`` with ``t_near <= t_far`` when the infinite
    line hits the box and the exit lies ahead of the origin, else ``None``.
    The slab method; division by zero yields inf which compares correctly.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (box_min - origin) * inv
        t1 = (box_max - origin) * inv
    t_near = np.nanmax(np.minimum(t0, t1), initial=-np.inf)
    t_far = np.nanmin(np.maximum(t0, t1), initial=np.inf)
    if t_near > t_far or t_far < 0.0:
        return None
    return float(t_near), float(t_far)


def boxes_intervals(
    origin: Vec3,
    direction: Vec3,
    mins: NDArray[np.float64],
    maxs: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorised slab test against ``N`` boxes given as (N, 3) corner arrays.

    Returns ``(t_near, t_far)`` arrays of shape (N,); rows that miss have
    ``t_near > t_far``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / direction
        t0 = (mins - origin) * inv
        t1 = (maxs - origin) * inv
    lo = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    # NaN appears when direction is 0 on an axis and origin sits exactly on
    # the slab plane; treating it as straddling keeps the test conservative.
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    return lo.max(axis=1), hi.min(axis=1)


def exit_face_normal(point: Vec3, box_min: Vec3, box_max: Vec3) -> Vec3:
    """Outward normal of the box face nearest to ``point``.

    Used for bounds exits and for resolving which face a hit parameter
    landed on without carrying per-axis bookkeeping through the slab test.
    """
    d_lo = np.abs(point - box_min)
    d_hi = np.abs(point - box_max)
    axis_lo = int(np.argmin(d_lo))
    axis_hi = int(np.argmin(d_hi))
    n = np.zeros(3)
    if d_lo[axis_lo] <= d_hi[axis_hi]:
        n[axis_lo] = -1.0
    else:
        n[axis_hi] = 1.0
    return n


def face_index(normal: Vec3) -> int:
    """Stable 0..5 index for an axis-aligned outward face normal."""
    axis = int(np.argmax(np.abs(normal)))
    return axis * 2 + (1 if normal[axis] > 0 else 0)
