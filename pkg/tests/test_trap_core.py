import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapstab.errors import (DivergenceError, InstabilityError, InvalidParameterError,
                             UncalibratableError)
from trapstab.trap_core import (TWO_PI, YB171, DriveParams, TrapGeometry, anisotropy,
                                axial_secular_frequency, calibrate_effective_radius, calibrate_kappa,
                                calibrated_trap, radial_secular_frequency, rod_dc_for_omega_y,
                                transverse_frequencies_with_dc)

# frozen from an independent evaluation of the closed-form inversions
R_DEFAULT = 5.932107083062618e-4
KAPPA_DEFAULT = 0.07399349848268102


@pytest.fixture(scope="module")
def trap():
    return calibrated_trap()


def test_zero_drive_gives_zero_radial(trap):
    assert radial_secular_frequency(trap.drive.__class__(0.0, trap.drive.rf_angular_frequency),
                                    trap.geometry, trap.ion) == 0.0


def test_calibrated_operating_point(trap):
    fx, fy, fz = trap.secular_frequencies().in_hz()
    assert fx == pytest.approx(0.85e6, rel=1e-12)
    assert fy == pytest.approx(0.85e6, rel=1e-12)
    assert fz == pytest.approx(0.325e6, rel=1e-12)


def test_frozen_calibration_constants(trap):
    assert trap.geometry.effective_radius == pytest.approx(R_DEFAULT, rel=1e-9)
    assert trap.geometry.kappa == pytest.approx(KAPPA_DEFAULT, rel=1e-9)
    assert trap.geometry.half_endcap_distance == 1.25e-3


def test_doubling_v0_doubles_radial(trap):
    w1 = radial_secular_frequency(trap.drive, trap.geometry, trap.ion)
    with pytest.warns(RuntimeWarning):
        w2 = radial_secular_frequency(trap.with_drive(rf_amplitude=1000.0).drive, trap.geometry, trap.ion)
    assert w2 == pytest.approx(2 * w1, rel=1e-14)


def test_quadrupling_endcap_doubles_axial(trap):
    w1 = axial_secular_frequency(trap.drive, trap.geometry, trap.ion)
    w2 = axial_secular_frequency(trap.with_drive(endcap_dc=4 * 78.0).drive, trap.geometry, trap.ion)
    assert w2 == pytest.approx(2 * w1, rel=1e-14)


def test_zero_endcap_gives_zero_axial(trap):
    assert axial_secular_frequency(trap.with_drive(endcap_dc=0.0).drive, trap.geometry, trap.ion) == 0.0


def test_negative_endcap_rejected(trap):
    with pytest.raises(InvalidParameterError):
        DriveParams(500.0, TWO_PI * 16.9e6, endcap_dc=-1.0)


def test_invalid_geometry_rejected():
    with pytest.raises(InvalidParameterError):
        TrapGeometry(effective_radius=0.0)
    with pytest.raises(InvalidParameterError):
        TrapGeometry(effective_radius=1e-3, c22=1.5)


def test_pseudopotential_warning(trap):
    with pytest.warns(RuntimeWarning):
        radial_secular_frequency(trap.with_drive(rf_amplitude=5000.0).drive, trap.geometry, trap.ion)


def test_c20_correction_is_optional(trap):
    drive = trap.with_drive(rod_dc=2.0).drive
    off = axial_secular_frequency(drive, trap.geometry, trap.ion)
    on = axial_secular_frequency(drive, trap.geometry, trap.ion, include_c20=True)
    assert off == pytest.approx(TWO_PI * 0.325e6, rel=1e-12)
    assert on < off


def test_rod_dc_degenerate_at_zero(trap):
    wx, wy = transverse_frequencies_with_dc(trap.drive, trap.geometry, trap.ion)
    assert wx == wy


def test_rod_dc_softens_y(trap):
    wr = radial_secular_frequency(trap.drive, trap.geometry, trap.ion)
    wx, wy = transverse_frequencies_with_dc(trap.with_drive(rod_dc=1.0).drive, trap.geometry, trap.ion)
    assert wy < wr < wx
    assert (wx ** 2 + wy ** 2) / (2 * wr ** 2) == pytest.approx(1.0, abs=1e-14)


def test_rod_dc_instability_reports_voltage(trap):
    u = rod_dc_for_omega_y(TWO_PI * 1.0, trap.drive, trap.geometry, trap.ion) * 1.01
    with pytest.raises(InstabilityError) as exc:
        transverse_frequencies_with_dc(trap.with_drive(rod_dc=u).drive, trap.geometry, trap.ion)
    assert exc.value.rod_dc == u


def test_rod_dc_for_omega_y_round_trip(trap):
    target = TWO_PI * 0.6648e6
    u = rod_dc_for_omega_y(target, trap.drive, trap.geometry, trap.ion)
    _, wy = transverse_frequencies_with_dc(trap.with_drive(rod_dc=u).drive, trap.geometry, trap.ion)
    assert wy == pytest.approx(target, rel=1e-12)


def test_calibration_round_trip_and_scaling(trap):
    r1 = calibrate_effective_radius(TWO_PI * 0.85e6, trap.drive, trap.ion)
    r2 = calibrate_effective_radius(TWO_PI * 1.70e6, trap.drive, trap.ion)
    assert r2 / r1 == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    k1 = calibrate_kappa(TWO_PI * 0.325e6, 78.0, trap.geometry, trap.ion)
    k2 = calibrate_kappa(TWO_PI * 0.650e6, 78.0, trap.geometry, trap.ion)
    assert k2 / k1 == pytest.approx(4.0, rel=1e-14)


def test_calibration_errors(trap):
    with pytest.raises(UncalibratableError):
        calibrate_effective_radius(TWO_PI * 0.85e6, trap.with_drive(rf_amplitude=0.0).drive, trap.ion)
    with pytest.raises(UncalibratableError):
        calibrate_kappa(TWO_PI * 0.325e6, 0.0, trap.geometry, trap.ion)
    with pytest.raises(InvalidParameterError):
        calibrate_effective_radius(0.0, trap.drive, trap.ion)


def test_anisotropy():
    assert anisotropy(3.0, 3.0) == 1.0
    assert anisotropy(0.85, 0.325) == pytest.approx(2.6153846153846154, rel=1e-15)
    assert anisotropy(6.8, 1.0) == 6.8
    with pytest.raises(DivergenceError):
        anisotropy(1.0, 0.0)


def test_drive_accepts_arrays(trap):
    v = np.array([400.0, 500.0, 600.0])
    w = radial_secular_frequency(trap.with_drive(rf_amplitude=v).drive, trap.geometry, trap.ion)
    assert np.allclose(w / w[1], v / 500.0, rtol=1e-14)


# --- properties --------------------------------------------------------------

positive = st.floats(min_value=1e-2, max_value=1e2, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(v0=st.floats(1.0, 2000.0), rf_mhz=st.floats(5.0, 50.0), scale=positive)
def test_radial_linear_in_v0_and_inverse_in_omega(v0, rf_mhz, scale):
    geom = TrapGeometry(effective_radius=6e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = radial_secular_frequency(DriveParams(v0, TWO_PI * rf_mhz * 1e6), geom, YB171)
        sv = radial_secular_frequency(DriveParams(v0 * scale, TWO_PI * rf_mhz * 1e6), geom, YB171)
        so = radial_secular_frequency(DriveParams(v0, TWO_PI * rf_mhz * 1e6 * scale), geom, YB171)
    assert sv == pytest.approx(base * scale, rel=1e-12)
    assert so == pytest.approx(base / scale, rel=1e-12)
    assert base >= 0 and math.isfinite(base)


@settings(max_examples=60, deadline=None)
@given(u0=st.just(0.0) | st.floats(1e-6, 500.0), scale=positive)
def test_axial_sqrt_in_endcap(u0, scale):
    geom = TrapGeometry(effective_radius=6e-4, kappa=0.074)
    a = axial_secular_frequency(DriveParams(500.0, TWO_PI * 16.9e6, endcap_dc=u0), geom, YB171)
    b = axial_secular_frequency(DriveParams(500.0, TWO_PI * 16.9e6, endcap_dc=u0 * scale), geom, YB171)
    assert b == pytest.approx(a * math.sqrt(scale), rel=1e-12, abs=1e-300)
    assert a >= 0 and not math.isnan(a)


@settings(max_examples=100, deadline=None)
@given(frac=st.floats(-0.999, 0.999))
def test_sum_rule_for_valid_rod_voltages(frac):
    trap = calibrated_trap()
    wr = radial_secular_frequency(trap.drive, trap.geometry, trap.ion)
    u_max = rod_dc_for_omega_y(1e-9 * wr, trap.drive, trap.geometry, trap.ion)
    wx, wy = transverse_frequencies_with_dc(trap.with_drive(rod_dc=frac * u_max).drive,
                                            trap.geometry, trap.ion)
    assert (wx ** 2 + wy ** 2) == pytest.approx(2 * wr ** 2, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(f_r=st.floats(0.1e6, 2e6), f_z=st.floats(0.05e6, 1e6), u0=st.floats(1.0, 300.0))
def test_calibrations_are_exact_inverses(f_r, f_z, u0):
    drive = DriveParams(500.0, TWO_PI * 16.9e6, endcap_dc=u0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = calibrate_effective_radius(TWO_PI * f_r, drive, YB171)
        geom = TrapGeometry(effective_radius=r)
        kappa = calibrate_kappa(TWO_PI * f_z, u0, geom, YB171)
        geom = TrapGeometry(effective_radius=r, kappa=kappa)
        assert radial_secular_frequency(drive, geom, YB171) / (TWO_PI * f_r) - 1 == pytest.approx(0, abs=1e-12)
        assert axial_secular_frequency(drive, geom, YB171) / (TWO_PI * f_z) - 1 == pytest.approx(0, abs=1e-12)
