import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from trapstab.chain_modes import (Phase, critical_com_frequency, equilibrium_positions, length_scale,
                                  sensitivity_amplification, transverse_mode_spectrum, zigzag_frequency)
from trapstab.errors import DivergenceError, DomainError, InvalidParameterError, PhaseMisclassificationError
from trapstab.trap_core import TWO_PI

WZ = TWO_PI * 0.325e6
# frozen from an independent Newton solve of the axial balance plus dense eigensolve
ALPHA_C = {2: 1.0, 3: 1.5491933384829668, 4: 2.038179365239343, 5: 2.497482454238539,
           6: 2.938171991629049, 7: 3.3656968377765812, 8: 3.7832118335194966}


def brute_positions(n, alpha):
    """Independent oracle: BFGS on the planar energy from a zigzag seed."""
    def energy(x):
        y, z = x[:n], x[n:]
        i, j = np.triu_indices(n, 1)
        d = np.hypot(y[i] - y[j], z[i] - z[j])
        return 0.5 * np.sum(z ** 2 + alpha ** 2 * y ** 2) + np.sum(1 / d)
    x0 = np.concatenate([0.3 * (-1.0) ** np.arange(n), np.linspace(-1, 1, n) * n ** 0.6])
    res = minimize(energy, x0, method="BFGS", options={"gtol": 1e-12})
    return res.x, res.fun


def energy_of(state):
    x = state.dimensionless_positions
    alpha = state.omega_y / state.omega_z
    y, z = x[:, 0], x[:, 1]
    i, j = np.triu_indices(len(y), 1)
    return 0.5 * np.sum(z ** 2 + alpha ** 2 * y ** 2) + np.sum(1 / np.hypot(y[i] - y[j], z[i] - z[j]))


def test_single_ion_at_origin():
    s = equilibrium_positions(1, TWO_PI * 1e6, WZ)
    assert np.all(s.positions == 0)
    modes = transverse_mode_spectrum(s)
    assert len(modes) == 1 and modes[0].frequency == pytest.approx(TWO_PI * 1e6, rel=1e-12)


def test_two_ion_spacing_closed_form():
    s = equilibrium_positions(2, 3 * WZ, WZ)
    z = np.sort(s.dimensionless_positions[:, 1])
    assert z == pytest.approx([-(0.5 ** (2 / 3)), 0.5 ** (2 / 3)], rel=1e-12)
    assert s.phase_label == Phase.LINEAR


def test_two_ion_transverse_modes_closed_form():
    wy = 3 * WZ
    f = [m.frequency for m in transverse_mode_spectrum(equilibrium_positions(2, wy, WZ))]
    assert f == pytest.approx([math.sqrt(wy ** 2 - WZ ** 2), wy], rel=1e-12)


def test_three_ion_zigzag_branch_closed_form():
    wy = 2.2 * WZ
    modes = transverse_mode_spectrum(equilibrium_positions(3, wy, WZ))
    assert modes[0].frequency == pytest.approx(math.sqrt(wy ** 2 - 12 / 5 * WZ ** 2), rel=1e-12)
    assert modes[0].is_zigzag


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7, 8])
def test_critical_anisotropy_matches_oracle(n):
    cp = critical_com_frequency(n, WZ)
    assert cp.alpha_c == pytest.approx(ALPHA_C[n], rel=1e-11)
    assert cp.omega_yc == pytest.approx(cp.alpha_c * WZ, rel=1e-15)


def test_critical_anisotropy_increasing():
    a = [critical_com_frequency(n, WZ).alpha_c for n in range(2, 9)]
    assert np.all(np.diff(a) > 0)


def test_zigzag_mode_vanishes_at_critical_point():
    cp = critical_com_frequency(4, WZ)
    modes = transverse_mode_spectrum(equilibrium_positions(4, cp.omega_yc * (1 + 1e-9), WZ))
    assert modes[0].frequency / cp.omega_yc < 1e-4


def test_six_ions_linear_at_large_anisotropy():
    s = equilibrium_positions(6, 6.8 * WZ, WZ)
    assert s.phase_label == Phase.LINEAR
    assert s.gradient_norm < 1e-12


def test_six_ions_zigzag_below_critical_anisotropy():
    s = equilibrium_positions(6, 2.5 * WZ, WZ)
    assert s.phase_label == Phase.ZIGZAG
    y = s.dimensionless_positions[:, 0]
    order = np.argsort(s.dimensionless_positions[:, 1])
    assert np.all(np.sign(y[order][1:]) == -np.sign(y[order][:-1]))


@pytest.mark.parametrize("n,alpha", [(4, 1.5), (5, 2.0), (6, 2.5)])
def test_zigzag_solution_is_global_minimum(n, alpha):
    s = equilibrium_positions(n, alpha * WZ, WZ)
    _, e_ref = brute_positions(n, alpha)
    assert energy_of(s) <= e_ref + 1e-9
    assert s.gradient_norm < 1e-12
    modes = transverse_mode_spectrum(s)
    assert len(modes) == 2 * n
    assert min(m.frequency for m in modes) >= 0


def test_linear_chain_is_symmetric_and_translational_modes_exact():
    s = equilibrium_positions(5, 4 * WZ, WZ)
    z = np.sort(s.dimensionless_positions[:, 1])
    assert z == pytest.approx(-z[::-1], abs=1e-12)
    assert np.allclose(s.mode_vectors.T @ s.mode_vectors, np.eye(10), atol=1e-10)
    freqs = s.mode_frequencies
    assert np.min(np.abs(freqs - WZ)) / WZ < 1e-10
    top = max(m.frequency for m in transverse_mode_spectrum(s))
    assert top == pytest.approx(4 * WZ, rel=1e-10)


def test_misclassified_linear_state_raises():
    lin = equilibrium_positions(4, 3.0 * WZ, WZ)
    with pytest.raises(PhaseMisclassificationError):
        transverse_mode_spectrum(lin, omega_y=1.5 * WZ)


def test_length_scale_and_errors():
    m = 170.9363258 * 1.66053906660e-27 - 9.1093837015e-31
    assert length_scale(WZ) == pytest.approx(
        (1.602176634e-19 ** 2 / (4 * math.pi * 8.8541878128e-12 * m * WZ ** 2)) ** (1 / 3), rel=1e-8)
    with pytest.raises(InvalidParameterError):
        equilibrium_positions(0, WZ, WZ)
    with pytest.raises(InvalidParameterError):
        critical_com_frequency(1, WZ)


def test_zigzag_frequency_law():
    assert zigzag_frequency(5.0, 5.0) == 0.0
    assert zigzag_frequency(math.sqrt(2) * 3.0, 3.0) == pytest.approx(3.0, rel=1e-15)
    with pytest.raises(DomainError):
        zigzag_frequency(2.0, 3.0)


def test_sensitivity_amplification_values():
    assert sensitivity_amplification(1.0, 1.0) == 1.0
    assert sensitivity_amplification(TWO_PI * 500e3, TWO_PI * 56e3) == pytest.approx(8.928571, rel=1e-6)
    with pytest.raises(DivergenceError):
        sensitivity_amplification(1.0, 0.0)


def test_sensitivity_matches_finite_difference_to_second_order():
    wyc = TWO_PI * 662.4e3
    wy = TWO_PI * 664.8e3
    wzz = zigzag_frequency(wy, wyc)
    exact = sensitivity_amplification(wy, wzz)
    errs = []
    for d in (TWO_PI * 40.0, TWO_PI * 20.0, TWO_PI * 10.0):
        fd = (zigzag_frequency(wy + d, wyc) - zigzag_frequency(wy - d, wyc)) / (2 * d)
        errs.append(abs(fd - exact))
    # halving delta quarters the error
    assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.02)
    assert errs[2] / errs[1] == pytest.approx(0.25, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 8), excess=st.floats(1e-3, 3.0))
def test_soft_mode_law_matches_hessian(n, excess):
    cp = critical_com_frequency(n, WZ)
    wy = cp.omega_yc * (1 + excess)
    lowest = transverse_mode_spectrum(equilibrium_positions(n, wy, WZ))[0].frequency
    assert abs(zigzag_frequency(wy, cp.omega_yc) - lowest) / wy < 1e-9


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 6), excess=st.floats(0.01, 1.0), rel=st.floats(1e-7, 1e-5))
def test_first_order_drift_propagation(n, excess, rel):
    cp = critical_com_frequency(n, WZ)
    wy = cp.omega_yc * (1 + excess)
    wzz = zigzag_frequency(wy, cp.omega_yc)
    d = rel * wy
    shift = zigzag_frequency(wy + d, cp.omega_yc) - wzz
    predicted = sensitivity_amplification(wy, wzz) * d
    assert shift == pytest.approx(predicted, rel=5 * rel * (wy / wzz) ** 2 + 1e-9)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 8), alpha=st.floats(0.5, 8.0))
def test_equilibrium_is_stationary_and_labelled(n, alpha):
    s = equilibrium_positions(n, alpha * WZ, WZ)
    assert s.gradient_norm < 1e-12
    linear = np.all(np.abs(s.dimensionless_positions[:, 0]) < 1e-8)
    assert (s.phase_label == Phase.LINEAR) == linear
    if n >= 2:
        assert linear == (alpha > critical_com_frequency(n, WZ).alpha_c)
    assert np.allclose(s.mode_vectors.T @ s.mode_vectors, np.eye(2 * n), atol=1e-10)
