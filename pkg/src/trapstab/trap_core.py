"""Secular frequencies of a linear Paul trap in the pseudopotential limit.

All quantities are SI (angular frequencies in rad/s). Formula functions accept
numpy arrays for the drive voltages so that whole time series can be mapped
in one call.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

from .errors import DivergenceError, InstabilityError, InvalidParameterError, UncalibratableError

TWO_PI = 2.0 * math.pi

#: Geometry factors of the rod trap from numerical field simulation.
C22_DEFAULT = 0.889
C20_DEFAULT = 0.0106
#: Half the tip-to-tip distance of the end-cap needles (2.5 mm apart).
Z0_DEFAULT = 1.25e-3


@dataclass(frozen=True)
class IonSpecies:
    mass: float
    charge: float
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidParameterError(f"ion mass must be positive, got {self.mass}")
        if not self.charge > 0:
            raise InvalidParameterError(f"ion charge must be positive, got {self.charge}")


def _ion_mass(isotope_mass_u):
    return isotope_mass_u * constants.atomic_mass - constants.electron_mass


YB171 = IonSpecies(mass=_ion_mass(170.9363258), charge=constants.e, label="171Yb+")

SPECIES = {YB171.label: YB171}


@dataclass(frozen=True)
class TrapGeometry:
    effective_radius: float
    half_endcap_distance: float = Z0_DEFAULT
    c22: float = C22_DEFAULT
    c20: float = C20_DEFAULT
    kappa: float = 1.0

    def __post_init__(self):
        if not self.effective_radius > 0:
            raise InvalidParameterError("effective radius R must be positive")
        if not self.half_endcap_distance > 0:
            raise InvalidParameterError("half end-cap distance z0 must be positive")
        if not 0 < self.c22 <= 1:
            raise InvalidParameterError(f"c22 must lie in (0, 1], got {self.c22}")
        if not 0 <= self.c20 < self.c22:
            raise InvalidParameterError(f"c20 must satisfy 0 <= c20 < c22, got {self.c20}")
        if not self.kappa > 0:
            raise InvalidParameterError("kappa must be positive")


@dataclass(frozen=True)
class DriveParams:
    """RF amplitude ``rf_amplitude`` (V0), drive ``rf_angular_frequency``
    (rad/s), static rod voltage ``rod_dc`` and end-cap voltage ``endcap_dc``.

    ``rf_amplitude`` and ``endcap_dc`` may be arrays.
    """

    rf_amplitude: float
    rf_angular_frequency: float
    rod_dc: float = 0.0
    endcap_dc: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.rf_amplitude) < 0):
            raise InvalidParameterError("RF amplitude V0 must be >= 0")
        if not self.rf_angular_frequency > 0:
            raise InvalidParameterError("RF angular frequency must be positive")
        if np.any(np.asarray(self.endcap_dc) < 0):
            raise InvalidParameterError(f"end-cap voltage U0 must be >= 0, got {self.endcap_dc}")


@dataclass(frozen=True)
class SecularFrequencies:
    omega_x: float
    omega_y: float
    omega_z: float

    def in_hz(self):
        return (self.omega_x / TWO_PI, self.omega_y / TWO_PI, self.omega_z / TWO_PI)


@dataclass(frozen=True)
class TrapConfig:
    geometry: TrapGeometry
    drive: DriveParams
    ion: IonSpecies = field(default=YB171)

    def secular_frequencies(self, include_c20=False) -> SecularFrequencies:
        wx, wy = transverse_frequencies_with_dc(self.drive, self.geometry, self.ion)
        wz = axial_secular_frequency(self.drive, self.geometry, self.ion, include_c20=include_c20)
        return SecularFrequencies(float(wx), float(wy), float(wz))

    def with_drive(self, **changes) -> "TrapConfig":
        return replace(self, drive=replace(self.drive, **changes))


def radial_secular_frequency(drive: DriveParams, geom: TrapGeometry, ion: IonSpecies):
    """Pseudopotential radial frequency ``e V0 / (sqrt(2) m Omega R^2)``."""
    v0 = np.asarray(drive.rf_amplitude, dtype=float)
    omega = ion.charge * v0 / (math.sqrt(2.0) * ion.mass * drive.rf_angular_frequency
                               * geom.effective_radius ** 2)
    if np.any(omega > drive.rf_angular_frequency / 10):
        warnings.warn("secular frequency exceeds Omega_T/10; pseudopotential approximation is poor",
                      RuntimeWarning, stacklevel=2)
    return omega if omega.ndim else float(omega)


def axial_secular_frequency(drive: DriveParams, geom: TrapGeometry, ion: IonSpecies,
                            include_c20=False):
    """End-cap frequency ``sqrt(2 kappa e U0 / m) / z0``.

    With ``include_c20`` the static rod voltage leaking into the axis through
    the C20 term adds ``-2 e U_rod C20 / (m R^2)`` to omega_z^2.
    """
    u0 = np.asarray(drive.endcap_dc, dtype=float)
    if np.any(u0 < 0):
        raise InvalidParameterError(f"end-cap voltage must be >= 0, got {drive.endcap_dc}")
    wz2 = 2.0 * geom.kappa * ion.charge * u0 / ion.mass / geom.half_endcap_distance ** 2
    if include_c20:
        wz2 = wz2 - 2.0 * ion.charge * drive.rod_dc * geom.c20 / (ion.mass * geom.effective_radius ** 2)
        if np.any(wz2 < 0):
            raise InstabilityError("axial confinement lost through C20 leakage", rod_dc=drive.rod_dc)
    wz = np.sqrt(wz2)
    return wz if wz.ndim else float(wz)


def rod_dc_shift(rod_dc, geom: TrapGeometry, ion: IonSpecies):
    """Change of omega_x^2 (and minus the change of omega_y^2) per static rod voltage."""
    return ion.charge * np.asarray(rod_dc, dtype=float) * geom.c22 / (ion.mass * geom.effective_radius ** 2)


def transverse_frequencies_with_dc(drive: DriveParams, geom: TrapGeometry, ion: IonSpecies):
    """Return ``(omega_x, omega_y)``; positive ``rod_dc`` stiffens x and softens y."""
    wr = np.asarray(radial_secular_frequency(drive, geom, ion))
    shift = rod_dc_shift(drive.rod_dc, geom, ion)
    wx2 = wr ** 2 + shift
    wy2 = wr ** 2 - shift
    if np.any(wy2 <= 0) or np.any(wx2 <= 0):
        raise InstabilityError(f"rod voltage U_rod={drive.rod_dc!r} V removes transverse confinement",
                               rod_dc=drive.rod_dc)
    wx, wy = np.sqrt(wx2), np.sqrt(wy2)
    if wx.ndim == 0:
        return float(wx), float(wy)
    return wx, wy


def rod_dc_for_omega_y(target_omega_y, drive: DriveParams, geom: TrapGeometry, ion: IonSpecies):
    """Static rod voltage that places omega_y at ``target_omega_y``."""
    wr = radial_secular_frequency(drive, geom, ion)
    if not 0 < target_omega_y:
        raise InvalidParameterError("target omega_y must be positive")
    return (wr ** 2 - target_omega_y ** 2) * ion.mass * geom.effective_radius ** 2 / (ion.charge * geom.c22)


def calibrate_effective_radius(measured_omega_r, drive: DriveParams, ion: IonSpecies):
    if not measured_omega_r > 0:
        raise InvalidParameterError("measured radial frequency must be positive")
    if not drive.rf_amplitude > 0:
        raise UncalibratableError("cannot calibrate R with zero RF amplitude")
    return math.sqrt(ion.charge * drive.rf_amplitude
                     / (math.sqrt(2.0) * ion.mass * drive.rf_angular_frequency * measured_omega_r))


def calibrate_kappa(measured_omega_z, endcap_dc, geom: TrapGeometry, ion: IonSpecies):
    if not measured_omega_z > 0:
        raise InvalidParameterError("measured axial frequency must be positive")
    if not endcap_dc > 0:
        raise UncalibratableError("cannot calibrate kappa with zero end-cap voltage")
    return measured_omega_z ** 2 * ion.mass * geom.half_endcap_distance ** 2 / (2.0 * ion.charge * endcap_dc)


def anisotropy(omega_y, omega_z):
    if omega_z == 0:
        raise DivergenceError("axial frequency is zero; anisotropy undefined")
    if omega_z < 0:
        raise InvalidParameterError("axial frequency must be positive")
    return omega_y / omega_z


def calibrated_trap(radial_hz=0.85e6, axial_hz=0.325e6, rf_hz=16.9e6, rf_amplitude=500.0,
                    endcap_dc=78.0, rod_dc=0.0, ion: IonSpecies = YB171,
                    half_endcap_distance=Z0_DEFAULT, c22=C22_DEFAULT, c20=C20_DEFAULT) -> TrapConfig:
    """Trap whose R and kappa are fitted to the given single-ion frequencies.

    Defaults are the measured operating point: 0.85 MHz radial and 0.325 MHz
    axial at 78 V on the end caps with a 16.9 MHz drive. The absolute RF
    amplitude is not known, so R absorbs the choice of ``rf_amplitude``.
    """
    drive = DriveParams(rf_amplitude=rf_amplitude, rf_angular_frequency=TWO_PI * rf_hz,
                        rod_dc=rod_dc, endcap_dc=endcap_dc)
    radius = calibrate_effective_radius(TWO_PI * radial_hz, drive, ion)
    geom = TrapGeometry(effective_radius=radius, half_endcap_distance=half_endcap_distance,
                        c22=c22, c20=c20)
    kappa = calibrate_kappa(TWO_PI * axial_hz, endcap_dc, geom, ion)
    return TrapConfig(geometry=replace(geom, kappa=kappa), drive=drive, ion=ion)
