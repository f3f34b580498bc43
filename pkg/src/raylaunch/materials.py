"""Material descriptions and their electromagnetic constants.

A material is a real relative permittivity plus a conductivity; lossy
behaviour enters through the complex permittivity

    eps_c(f) = eps_r - j * sigma / (2 * pi * f * EPS0)

under the e^{+j w t} time convention used across the package. Perfect
conductors are modelled explicitly: either set ``pec=True`` or give a
conductivity at or above ``PEC_SIGMA_THRESHOLD`` and the reflection code
short-circuits to the ideal-metal coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

EPS0 = 8.8541878128e-12  # vacuum permittivity, F/m

#: Conductivities at or above this value (S/m) are treated as perfect metal.
PEC_SIGMA_THRESHOLD = 1.0e7


@dataclass(frozen=True)
class MaterialSpec:
    """Electromagnetic description of an obstacle surface.

    Parameters
    ----------
    name:
        Label used in scene files and reports.
    eps_r:
        Real relative permittivity, >= 1.
    sigma:
        Conductivity in S/m, >= 0.
    pec:
        Treat the material as a perfect electric conductor regardless of
        ``eps_r``/``sigma``.
    """

    name: str
    eps_r: float
    sigma: float = 0.0
    pec: bool = False

    def __post_init__(self) -> None:
        if self.eps_r < 1.0:
            raise ValueError(f"material {self.name!r}: eps_r must be >= 1, got {self.eps_r}")
        if self.sigma < 0.0:
            raise ValueError(f"material {self.name!r}: sigma must be >= 0, got {self.sigma}")

    @property
    def is_pec(self) -> bool:
        return self.pec or self.sigma >= PEC_SIGMA_THRESHOLD

    def complex_permittivity(self, frequency_hz: float) -> complex:
        """Relative complex permittivity at the given frequency."""
        if frequency_hz <= 0.0:
            raise ValueError("frequency must be positive")
        omega = 2.0 * 3.141592653589793 * frequency_hz
        return self.eps_r - 1j * self.sigma / (omega * EPS0)


def default_materials() -> dict[str, MaterialSpec]:
    """Built-in material library.

    Concrete follows common 2-3 GHz survey values; wood and glass are
    stand-ins in the same range and every entry can be overridden per scene
    file. The human preset approximates muscle tissue around 2.4 GHz.
    """
    return {
        "metal": MaterialSpec("metal", eps_r=1.0, sigma=1.0e7, pec=True),
        "concrete": MaterialSpec("concrete", eps_r=5.31, sigma=0.0662),
        "wood": MaterialSpec("wood", eps_r=1.99, sigma=0.012),
        "glass": MaterialSpec("glass", eps_r=6.27, sigma=0.012),
        "human": MaterialSpec("human", eps_r=53.0, sigma=1.8),
    }
