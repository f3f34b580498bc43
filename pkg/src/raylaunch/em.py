"""Field-level electromagnetics: launch fields, Fresnel interfaces, slabs.

Conventions, fixed once for the whole package:

* time dependence ``e^{+j w t}``, so propagation over a path ``s`` carries
  the phase factor ``e^{-j k s}`` and lossy media have refractive indices
  with negative imaginary part;
* field vectors are RMS, in V/m, stored as complex 3-vectors orthogonal to
  the propagation direction;
* free-space impedance is taken as ``ETA0 = 120 * pi`` ohms, which makes
  the launch amplitude ``|E| = sqrt(30 * P * g) / d`` and the receiver
  aperture ``g * lambda^2 / (4 * pi)`` consistent with the Friis equation
  to machine precision;
* the monopole antenna is vertical (+z) and launches fields polarised
  along the spherical theta unit vector; the isotropic pattern launches
  along the azimuthal (horizontal) unit vector. At the poles, where those
  frames degenerate, theta-hat falls back to +x and phi-hat to +y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import Vec3, cross3, perpendicular_unit
from .scene import AntennaPattern, TransmitterSpec
from .materials import MaterialSpec

C0 = 299_792_458.0  # vacuum speed of light, m/s
ETA0 = 120.0 * np.pi  # free-space impedance convention, ohms

ComplexFieldVec = NDArray[np.complex128]

_POLE_SIN_TOL = 1e-12


@dataclass(frozen=True)
class WaveNumbers:
    """Frequency and its derived wavelength / wavenumber (k * lambda = 2 pi)."""

    frequency_hz: float

    def __post_init__(self) -> None:
        if self.frequency_hz <= 0.0:
            raise ValueError("frequency must be positive")

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency_hz

    @property
    def k(self) -> float:
        return 2.0 * np.pi * self.frequency_hz / C0


def spherical_frames(direction: Vec3) -> tuple[Vec3, Vec3]:
    """Unit vectors (theta_hat, phi_hat) of the launch sphere at ``direction``."""
    sin_theta = float(np.hypot(direction[0], direction[1]))
    if sin_theta < _POLE_SIN_TOL:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    cos_phi = direction[0] / sin_theta
    sin_phi = direction[1] / sin_theta
    cos_theta = direction[2]
    theta_hat = np.array([cos_theta * cos_phi, cos_theta * sin_phi, -sin_theta])
    phi_hat = np.array([-sin_phi, cos_phi, 0.0])
    return theta_hat, phi_hat


def antenna_gain(pattern: AntennaPattern, direction: Vec3) -> float:
    """Linear gain toward ``direction`` (a unit vector).

    Isotropic patterns return their peak gain everywhere (1.0 for the
    default 0 dBi); the vertical monopole follows g_peak * sin^2(theta)
    and is exactly zero along its axis.
    """
    if pattern.kind == "monopole":
        sin2 = 1.0 - float(direction[2]) ** 2
        return pattern.peak_gain_linear * max(sin2, 0.0)
    return pattern.peak_gain_linear


def launch_polarization(pattern: AntennaPattern, direction: Vec3) -> Vec3:
    theta_hat, phi_hat = spherical_frames(direction)
    return theta_hat if pattern.kind == "monopole" else phi_hat


def initial_field(tx: TransmitterSpec, direction: Vec3, distance: float) -> ComplexFieldVec:
    """Radiated RMS field at ``distance`` metres along ``direction``.

    Amplitude sqrt(30 * P_watts * gain) / distance with phase -k*distance.
    """
    if distance <= 0.0:
        raise ValueError("field evaluation distance must be positive")
    gain = antenna_gain(tx.antenna, direction)
    amplitude = np.sqrt(30.0 * tx.power_watts * gain) / distance
    k = WaveNumbers(tx.frequency_hz).k
    pol = launch_polarization(tx.antenna, direction)
    return amplitude * np.exp(-1j * k * distance) * pol.astype(np.complex128)


# ---------------------------------------------------------------------------
# interfaces


@dataclass(frozen=True)
class FresnelCoefficients:
    """Field reflection/transmission coefficients at an air-material face.

    ``gamma_p`` uses the reflected-frame convention in which a perfect
    conductor gives +1 (and gamma_s gives -1); both conventions produce the
    same reflected vector once the s/p frames are applied in
    :func:`reflect`.
    """

    gamma_s: complex
    gamma_p: complex
    t_s: complex
    t_p: complex


def fresnel_coefficients(
    material: MaterialSpec, frequency_hz: float, theta_i: float
) -> FresnelCoefficients:
    """Coefficients for a plane wave in air hitting the material at ``theta_i``.

    ``theta_i`` is measured from the surface normal and must lie in
    [0, pi/2).
    """
    if not 0.0 <= theta_i < np.pi / 2.0:
        raise ValueError(f"incidence angle must be in [0, pi/2), got {theta_i}")
    if material.is_pec:
        return FresnelCoefficients(gamma_s=-1.0 + 0j, gamma_p=1.0 + 0j, t_s=0j, t_p=0j)
    eps_c = material.complex_permittivity(frequency_hz)
    a = np.cos(theta_i)
    b = np.sqrt(eps_c - np.sin(theta_i) ** 2)
    n_c = np.sqrt(eps_c)
    return FresnelCoefficients(
        gamma_s=(a - b) / (a + b),
        gamma_p=(eps_c * a - b) / (eps_c * a + b),
        t_s=2.0 * a / (a + b),
        t_p=2.0 * n_c * a / (eps_c * a + b),
    )


def slab_coefficients(
    material: MaterialSpec, frequency_hz: float, theta_i: float, thickness: float
) -> tuple[complex, complex]:
    """Single-pass field factors through a thin slab, per polarisation.

    Combines the entry and exit interface transmissions with absorption and
    material phase exp(-j k n_c t_path) over the refracted in-material
    chord t_path = thickness / cos(theta_t); internal multiple reflections
    are ignored. Perfect conductors transmit nothing.
    """
    if thickness < 0.0:
        raise ValueError("slab thickness must be non-negative")
    if material.is_pec:
        return 0j, 0j
    eps_c = material.complex_permittivity(frequency_hz)
    a = np.cos(theta_i)
    b = np.sqrt(eps_c - np.sin(theta_i) ** 2)
    n_c = np.sqrt(eps_c)
    sin_t = np.sin(theta_i) / n_c.real
    cos_t = np.sqrt(1.0 - sin_t**2)
    t_path = thickness / cos_t
    k = WaveNumbers(frequency_hz).k
    propagation = np.exp(-1j * k * n_c * t_path)
    slab_s = 4.0 * a * b / (a + b) ** 2 * propagation
    slab_p = 4.0 * eps_c * a * b / (eps_c * a + b) ** 2 * propagation
    return complex(slab_s), complex(slab_p)


def _sp_frame(direction: Vec3, normal: Vec3) -> Vec3:
    """Unit vector perpendicular to the incidence plane (s direction).

    At normal incidence the plane is undefined and any vector orthogonal to
    the normal serves; both polarisations then act identically.
    """
    s = cross3(direction, normal)
    s_norm = float(np.linalg.norm(s))
    if s_norm < 1e-9:
        return perpendicular_unit(normal)
    return s / s_norm


def reflect(
    field: ComplexFieldVec,
    direction: Vec3,
    normal: Vec3,
    material: MaterialSpec,
    frequency_hz: float,
) -> tuple[ComplexFieldVec, Vec3]:
    """Specular reflection of a field off a planar face.

    ``normal`` is the outward surface normal facing the ray
    (direction . normal < 0). Returns the reflected field in the reflected
    ray's own s/p frame together with the mirrored direction.
    """
    cos_i = float(direction @ normal)
    if cos_i >= 0.0:
        raise ValueError("reflect called with a normal not facing the ray")
    theta_i = float(np.arccos(np.clip(-cos_i, -1.0, 1.0)))
    theta_i = min(theta_i, np.pi / 2 - 1e-12)
    coeffs = fresnel_coefficients(material, frequency_hz, theta_i)
    d_r = direction - 2.0 * cos_i * normal
    s_hat = _sp_frame(direction, normal)
    p_in = cross3(s_hat, direction)
    p_out = cross3(s_hat, d_r)
    e_s = field @ s_hat
    e_p = field @ p_in
    reflected = coeffs.gamma_s * e_s * s_hat + coeffs.gamma_p * e_p * p_out
    return reflected.astype(np.complex128), d_r


def transmit(
    field: ComplexFieldVec,
    direction: Vec3,
    normal: Vec3,
    thickness: float,
    material: MaterialSpec,
    frequency_hz: float,
) -> ComplexFieldVec:
    """Field after crossing a thin slab, propagation direction unchanged.

    ``thickness`` is the slab depth along its normal; lateral offset of the
    refracted path is ignored (thin-slab model).
    """
    cos_i = float(direction @ normal)
    if cos_i >= 0.0:
        raise ValueError("transmit called with a normal not facing the ray")
    theta_i = float(np.arccos(np.clip(-cos_i, -1.0, 1.0)))
    theta_i = min(theta_i, np.pi / 2 - 1e-12)
    slab_s, slab_p = slab_coefficients(material, frequency_hz, theta_i, thickness)
    s_hat = _sp_frame(direction, normal)
    p_in = cross3(s_hat, direction)
    e_s = field @ s_hat
    e_p = field @ p_in
    out = slab_s * e_s * s_hat + slab_p * e_p * p_in
    return out.astype(np.complex128)
