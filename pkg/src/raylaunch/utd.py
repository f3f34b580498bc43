"""Uniform-theory-of-diffraction coefficients for perfectly conducting wedges.

Implements the Kouyoumjian-Pathak four-cotangent coefficient with the
Fresnel transition function, under the package-wide e^{+j w t} / e^{-j k s}
convention. Azimuths ``phi`` (observation) and ``phi_p`` (incidence) are
measured from the wedge o-face into the exterior region, which spans
[0, n * pi]; ``beta0`` is the angle between the incident ray and the edge
tangent, and diffracted rays leave on the Keller cone sharing that angle.

Soft (Dirichlet) coefficients act on the field component along the edge,
hard (Neumann) on the component perpendicular to it; the edge-fixed frames
returned by :func:`diffraction_frames` make that decomposition explicit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import fresnel

from .geometry import Vec3, cross3, unit
from .scene import Wedge

KELLER_TOL = 1e-3

_SQRT_HALF_PI = np.sqrt(np.pi / 2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_TAIL_AT_ZERO = 0.5 * np.sqrt(np.pi) * np.exp(-1j * np.pi / 4.0)
_EXP_J_PI_4 = np.exp(1j * np.pi / 4.0)
_BOUNDARY_EPS = 1e-9

# The four Kouyoumjian-Pathak cotangent terms, stacked along a leading axis:
# rows 0 and 1 take beta = phi - phi_p, rows 2 and 3 take beta = phi + phi_p,
# with the cotangent argument signs alternating +, -, +, -.
_TERM_PLUS = np.array([True, False, True, False])
_TERM_SIGN = np.where(_TERM_PLUS, 1.0, -1.0)


def transition_function(x):
    """Fresnel transition function F(x) for x >= 0.

    F(x) = 2j sqrt(x) e^{jx} * integral_{sqrt(x)}^inf e^{-j tau^2} d tau,
    evaluated exactly through the scipy Fresnel integrals. F(0) = 0 and
    F -> 1 for large arguments; beyond x = 1e6 the limit value is returned
    directly (the residual is below 1e-6 there and the oscillatory factors
    lose accuracy).
    """
    x = np.asarray(x, dtype=np.float64)
    big = x > 1e6
    any_big = bool(big.any())
    xs = np.where(big, 0.0, x) if any_big else x
    root = np.sqrt(xs)
    s, c = fresnel(root * _SQRT_2_OVER_PI)
    tail = _TAIL_AT_ZERO - _SQRT_HALF_PI * (c - 1j * s)
    out = 2j * root * np.exp(1j * xs) * tail
    return np.where(big, 1.0 + 0.0j, out) if any_big else out


def wedge_coefficients(k: float, n: float, phi, phi_p: float, beta0: float, L):
    """Soft and hard diffraction coefficients D_s, D_h.

    All four cotangent * F(kLa) products are evaluated in one stacked pass;
    where a cotangent pole sits on a shadow boundary the Kouyoumjian-Pathak
    limit n * [sqrt(2 pi kL) * sgn(eps) - 2 kL eps e^{j pi/4}] e^{j pi/4}
    replaces the indeterminate product, taking the shadow-side value of
    sgn to pair with the strict geometrical optics indicators.

    Parameters
    ----------
    k:
        Free-space wavenumber, rad/m.
    n:
        Wedge parameter; exterior angle is n * pi (1.5 for a box edge,
        2 for a half-plane).
    phi, phi_p:
        Observation and incidence azimuths from the o-face, in [0, n*pi].
        ``phi`` may be an array (angle sweeps around the Keller cone).
    beta0:
        Angle between the incident ray and the edge tangent.
    L:
        Distance parameter (scalar or array); for a spherical wave
        L = s' s sin^2(beta0) / (s' + s). Broadcasts against ``phi``.

    Returns
    -------
    (D_s, D_h), shaped like the broadcast of ``phi`` and ``L``, in units
    of m^{-1/2}.
    """
    phi = np.asarray(phi, dtype=np.float64)
    kl = k * np.asarray(L, dtype=np.float64)
    shape = np.broadcast_shapes(phi.shape, kl.shape)
    lead = (4,) + (1,) * len(shape)
    plus = _TERM_PLUS.reshape(lead)
    sign = _TERM_SIGN.reshape(lead)
    beta = np.empty((4,) + shape, dtype=np.float64)
    beta[0] = beta[1] = phi - phi_p
    beta[2] = beta[3] = phi + phi_p
    two_n_pi = 2.0 * np.pi * n
    big_n = np.round((beta + sign * np.pi) / two_n_pi)
    eps = np.where(
        plus, beta - (two_n_pi * big_n - np.pi), (two_n_pi * big_n + np.pi) - beta
    )
    on_boundary = np.abs(eps) < _BOUNDARY_EPS
    sgn = np.where(eps > 0.0, 1.0, -1.0)
    limit = n * (np.sqrt(2.0 * np.pi * kl) * sgn - 2.0 * kl * eps * _EXP_J_PI_4) * _EXP_J_PI_4
    a = 2.0 * np.cos((two_n_pi * big_n - beta) / 2.0) ** 2
    cot = 1.0 / np.where(on_boundary, 1.0, np.tan((np.pi + sign * beta) / (2.0 * n)))
    terms = np.where(on_boundary, limit, cot * transition_function(kl * a))
    prefactor = -np.exp(-1j * np.pi / 4.0) / (
        2.0 * n * np.sqrt(2.0 * np.pi * k) * np.sin(beta0)
    )
    even = terms[0] + terms[1]
    odd = terms[2] + terms[3]
    return prefactor * (even - odd), prefactor * (even + odd)


def diffraction_frames(
    edge_dir: Vec3, d_in: Vec3, d_out: Vec3
) -> tuple[Vec3, Vec3, Vec3, Vec3]:
    """Edge-fixed polarisation frames (beta_in, phi_in, beta_out, phi_out).

    ``d_in`` points from the source toward the edge point, ``d_out`` away
    from it. The diffracted field follows

        E_d = [-D_s (E_i . beta_in) beta_out - D_h (E_i . phi_in) phi_out]
              * sqrt(s' / (s (s' + s))) * e^{-j k s}
    """
    phi_in = -unit(cross3(edge_dir, d_in))
    beta_in = cross3(phi_in, d_in)
    phi_out = unit(cross3(edge_dir, d_out))
    beta_out = cross3(phi_out, d_out)
    return beta_in, phi_in, beta_out, phi_out


def caustic_spreading(s_edge: float, s):
    """Amplitude spreading sqrt(s' / (s (s' + s))) past an edge at s'."""
    s = np.asarray(s, dtype=np.float64)
    return np.sqrt(s_edge / (s * (s_edge + s)))


def utd_diffraction(
    wedge: Wedge,
    d_in: Vec3,
    d_out: Vec3,
    frequency_hz: float,
    polarization: str,
    s_incident: float,
    s_diffracted: float,
) -> complex:
    """Diffraction coefficient for one wedge and ray geometry.

    ``d_in`` runs from the source to the edge point and ``d_out`` from the
    edge point outward; both must satisfy the Keller-cone condition within
    ``KELLER_TOL`` radians. ``polarization`` selects ``"soft"`` (field
    along the edge) or ``"hard"``.
    """
    from .em import WaveNumbers

    cos_in = float(d_in @ wedge.edge_dir)
    cos_out = float(d_out @ wedge.edge_dir)
    beta_in = float(np.arccos(np.clip(cos_in, -1.0, 1.0)))
    beta_out = float(np.arccos(np.clip(cos_out, -1.0, 1.0)))
    if abs(beta_out - beta_in) > KELLER_TOL:
        raise ValueError(
            f"directions violate the Keller cone: |{beta_out:.6f} - {beta_in:.6f}| > {KELLER_TOL}"
        )
    phi_p = wedge.azimuth_of(-d_in)
    phi = wedge.azimuth_of(d_out)
    n_pi = wedge.n * np.pi
    if not 0.0 <= phi_p <= n_pi or not 0.0 <= phi <= n_pi:
        raise ValueError("incidence or observation direction lies inside the wedge")
    beta0 = beta_in if beta_in <= np.pi / 2 else np.pi - beta_in
    sin_b = np.sin(beta0)
    L = s_incident * s_diffracted * sin_b**2 / (s_incident + s_diffracted)
    k = WaveNumbers(frequency_hz).k
    d_soft, d_hard = wedge_coefficients(k, wedge.n, phi, phi_p, beta0, L)
    if polarization == "soft":
        return complex(d_soft)
    if polarization == "hard":
        return complex(d_hard)
    raise ValueError(f"polarization must be 'soft' or 'hard', got {polarization!r}")
