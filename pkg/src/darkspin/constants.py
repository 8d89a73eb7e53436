"""Physical constants, unit conventions, and the dipolar coupling evaluator.

Internal unit system: time in us, angular frequencies and rates in rad/us,
distances in nm, densities in nm^-2 (2D) or nm^-3 (3D).  All public
interfaces speak MHz, um^-2/um^-3, and us; the helpers below convert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# interface <-> internal conversions
MHZ_TO_RAD_PER_US = TWO_PI          # 1 MHz = 2*pi rad/us
PER_UM2_TO_PER_NM2 = 1e-6
PER_NM2_TO_PER_UM2 = 1e6
PER_UM3_TO_PER_NM3 = 1e-9
PER_NM3_TO_PER_UM3 = 1e9
PER_CM2_TO_PER_UM2 = 1e-8

# nuclear gyromagnetic ratios, kHz per gauss (linear frequency)
NUCLEAR_GYROMAGNETIC_KHZ_PER_G = {
    "13C": 1.0705,
    "14N": 0.30777,
    "15N": 0.43156,
}


def mhz_to_rad_us(f_mhz):
    return np.asarray(f_mhz, dtype=float) * MHZ_TO_RAD_PER_US


def rad_us_to_mhz(w):
    return np.asarray(w, dtype=float) / MHZ_TO_RAD_PER_US


def density_to_internal(density, dimensionality="2d"):
    """Areal um^-2 -> nm^-2, or volumetric um^-3 -> nm^-3."""
    if dimensionality == "2d":
        return density * PER_UM2_TO_PER_NM2
    if dimensionality == "3d":
        return density * PER_UM3_TO_PER_NM3
    raise ValueError(f"unknown dimensionality {dimensionality!r}")


def density_from_internal(density, dimensionality="2d"):
    if dimensionality == "2d":
        return density * PER_NM2_TO_PER_UM2
    if dimensionality == "3d":
        return density * PER_NM3_TO_PER_UM3
    raise ValueError(f"unknown dimensionality {dimensionality!r}")


@dataclass(frozen=True)
class PhysicalConstants:
    """Base electromagnetic constants and the derived dipolar prefactor.

    ``dipolar_prefactor`` is mu0*gamma_e^2*hbar/(4*pi) expressed in
    rad/us * nm^3, so that a coupling in rad/us is prefactor/r_nm^3 times
    the angular factor.
    """

    mu0_over_4pi: float = 1e-7                 # T m / A
    hbar: float = 1.055e-34                    # J s
    gamma_electron: float = TWO_PI * 28.0e9    # rad/s/T
    gamma_electron_linear_mhz_per_g: float = 2.8024
    mu_bohr: float = 9.2740100783e-24          # J/T
    dipolar_prefactor: float = field(init=False)

    def __post_init__(self):
        si = self.mu0_over_4pi * self.gamma_electron**2 * self.hbar  # rad/s m^3
        object.__setattr__(self, "dipolar_prefactor", si * 1e21)     # rad/us nm^3

    @property
    def dipolar_prefactor_mhz_nm3(self) -> float:
        return self.dipolar_prefactor / TWO_PI


CONSTANTS = PhysicalConstants()

# Quantization axis tilt used by default: arccos(1/sqrt(3)) from the surface
# normal, a <111> axis in a (100)-cut sample.  The bath integrals depend on
# this choice, so it stays configurable everywhere.
DEFAULT_AXIS_POLAR_RAD = math.acos(1.0 / math.sqrt(3.0))


def axis_from_polar(polar_rad: float, azimuth_rad: float = 0.0) -> np.ndarray:
    s = math.sin(polar_rad)
    return np.array(
        [s * math.cos(azimuth_rad), s * math.sin(azimuth_rad), math.cos(polar_rad)]
    )


DEFAULT_NV_AXIS = axis_from_polar(DEFAULT_AXIS_POLAR_RAD)


@dataclass(frozen=True)
class Geometry:
    """NV-to-spin geometry: depth of the NV below the bath plane, the
    quantization axis (unit vector, z = surface normal), and the spin
    position relative to the NV (nm)."""

    nv_depth_nm: float
    nv_axis: np.ndarray = field(default_factory=lambda: DEFAULT_NV_AXIS.copy())
    spin_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        axis = np.asarray(self.nv_axis, dtype=float)
        pos = np.asarray(self.spin_position, dtype=float)
        if self.nv_depth_nm <= 0:
            raise ValueError("nv_depth_nm must be positive")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("nv_axis must have unit norm (within 1e-12)")
        object.__setattr__(self, "nv_axis", axis)
        object.__setattr__(self, "spin_position", pos)


def dipolar_coupling(geom: Geometry, constants: PhysicalConstants = CONSTANTS) -> float:
    """Signed secular dipolar coupling, rad/us, for the given geometry.

    V = prefactor / r^3 * (1 - 3 cos^2 theta) with theta the angle between
    the quantization axis and the NV-to-spin direction.
    """
    r_vec = np.asarray(geom.spin_position, dtype=float)
    r = float(np.linalg.norm(r_vec))
    if r <= 0.0:
        raise ValueError("spin position coincides with the NV (|r| = 0)")
    cos_t = float(np.dot(r_vec, geom.nv_axis)) / r
    return constants.dipolar_prefactor * (1.0 - 3.0 * cos_t**2) / r**3


def coupling_field(
    x, y, z, nv_axis=DEFAULT_NV_AXIS, constants: PhysicalConstants = CONSTANTS
):
    """Vectorized dipolar coupling (rad/us) over arrays of spin offsets (nm)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r2 = x * x + y * y + z * z
    r = np.sqrt(r2)
    cos_t = (x * nv_axis[0] + y * nv_axis[1] + z * nv_axis[2]) / r
    return constants.dipolar_prefactor * (1.0 - 3.0 * cos_t**2) / (r2 * r)


def coupling_at_frequency(
    f_target_mhz: float, theta_rad: float, constants: PhysicalConstants = CONSTANTS
) -> float:
    """Separation (nm) at which |V|/2pi equals ``f_target_mhz`` at angle theta.

    Inverts the r^-3 law; undefined at the magic angle where the angular
    factor vanishes.
    """
    if f_target_mhz <= 0:
        raise ValueError("target frequency must be positive")
    ang = abs(1.0 - 3.0 * math.cos(theta_rad) ** 2)
    if ang < 1e-12:
        raise ValueError("magic-angle geometry: no finite separation at this angle")
    return (constants.dipolar_prefactor * ang / (TWO_PI * f_target_mhz)) ** (1.0 / 3.0)
