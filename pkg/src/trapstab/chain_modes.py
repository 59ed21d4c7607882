"""Planar (y, z) mechanics of an N-ion Coulomb chain.

Internally everything is dimensionless: lengths in units of
``l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3)``, frequencies in units of omega_z
and energies in ``m omega_z^2 l^2``. In these units the potential is::

    U = sum_i (z_i^2 + alpha^2 y_i^2) / 2 + sum_{i<j} 1 / |r_i - r_j|

with ``alpha = omega_y / omega_z``. The x direction is not modelled; it stays
far above the transition throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import constants
from scipy.optimize import brentq

from .errors import (BracketError, ConvergenceError, DivergenceError, DomainError,
                     InvalidParameterError, PhaseMisclassificationError)
from .trap_core import YB171, IonSpecies

LINEAR_TOLERANCE = 1e-8
GRADIENT_TOLERANCE = 1e-12
MAX_SADDLE_ESCAPES = 20


class Phase(str, Enum):
    LINEAR = "Linear"
    ZIGZAG = "Zigzag"


@dataclass(frozen=True)
class NormalMode:
    frequency: float
    vector: np.ndarray
    is_zigzag: bool = False


@dataclass(frozen=True)
class ChainState:
    """Equilibrium of an N-ion chain.

    ``positions`` is an ``(n, 2)`` array of (y, z) in metres; ``mode_vectors``
    columns are ordered like ``mode_frequencies`` (ascending) over the
    coordinates ``[y_1..y_n, z_1..z_n]``.
    """

    n_ions: int
    positions: np.ndarray
    mode_frequencies: np.ndarray
    mode_vectors: np.ndarray
    phase_label: Phase
    omega_y: float
    omega_z: float
    length_scale: float
    gradient_norm: float

    @property
    def dimensionless_positions(self):
        return self.positions / self.length_scale


@dataclass(frozen=True)
class CriticalPoint:
    omega_yc: float
    alpha_c: float
    n_ions: int
    omega_z: float


def length_scale(omega_z, ion: IonSpecies = YB171):
    """Characteristic ion spacing ``l`` in metres."""
    if not omega_z > 0:
        raise InvalidParameterError("omega_z must be positive")
    k = ion.charge ** 2 / (4 * math.pi * constants.epsilon_0)
    return (k / (ion.mass * omega_z ** 2)) ** (1.0 / 3.0)


def _pair_terms(r):
    d = r[:, None, :] - r[None, :, :]
    dist = np.sqrt(np.sum(d ** 2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return d, dist


def _energy(r, alpha):
    _, dist = _pair_terms(r)
    harmonic = 0.5 * np.sum(r[:, 1] ** 2 + alpha ** 2 * r[:, 0] ** 2)
    return harmonic + 0.5 * np.sum(1.0 / dist)


def _gradient(r, alpha):
    d, dist = _pair_terms(r)
    coulomb = -np.sum(d / dist[:, :, None] ** 3, axis=1)
    grad = coulomb + r * np.array([alpha ** 2, 1.0])
    # flatten to [y_1..y_n, z_1..z_n]
    return np.concatenate([grad[:, 0], grad[:, 1]])


def _hessian(r, alpha):
    n = len(r)
    d, dist = _pair_terms(r)
    inv3 = 1.0 / dist ** 3
    inv5 = 1.0 / dist ** 5
    hess = np.zeros((2 * n, 2 * n))
    for a in range(2):
        for b in range(2):
            # second derivative of 1/|d| with respect to d_a, d_b
            block = 3.0 * d[:, :, a] * d[:, :, b] * inv5 - (a == b) * inv3
            off = -block
            np.fill_diagonal(off, np.sum(block, axis=1))
            hess[a * n:(a + 1) * n, b * n:(b + 1) * n] = off
    hess[:n, :n] += alpha ** 2 * np.eye(n)
    hess[n:, n:] += np.eye(n)
    return hess


def _as_points(x):
    n = len(x) // 2
    return np.column_stack([x[:n], x[n:]])


def _axial_chain(n, max_iter=200):
    """Dimensionless axial positions of the linear chain (Newton on z only)."""
    if n == 1:
        return np.zeros(1)
    # quasi-uniform seed with the known n^(1/3)-ish extent
    z = np.linspace(-1.0, 1.0, n) * (0.5 * n) ** 0.6
    for _ in range(max_iter):
        r = np.column_stack([np.zeros(n), z])
        g = _gradient(r, 1.0)[n:]
        g_norm = np.linalg.norm(g)
        if g_norm < 1e-3 * GRADIENT_TOLERANCE:
            break
        h = _hessian(r, 1.0)[n:, n:]
        step = np.linalg.solve(h, g)
        t = 1.0
        e0 = _energy(r, 1.0)
        while t > 1e-6:
            trial = np.sort(z - t * step)
            if np.all(np.diff(trial) > 0):
                rt = np.column_stack([np.zeros(n), trial])
                # near convergence the energy is flat to rounding; the gradient still decides
                if (_energy(rt, 1.0) <= e0 + 1e-15
                        or np.linalg.norm(_gradient(rt, 1.0)[n:]) < g_norm):
                    break
            t *= 0.5
        else:
            break
        z = trial
    z = 0.5 * (z - z[::-1])  # enforce exact z -> -z symmetry
    resid = float(np.linalg.norm(_gradient(np.column_stack([np.zeros(n), z]), 1.0)))
    if resid > GRADIENT_TOLERANCE:
        raise ConvergenceError("axial chain solver did not converge", residual=resid)
    return z


def _interaction_matrix(z):
    """Matrix ``K`` with transverse Hessian ``alpha^2 I - K`` for a linear chain."""
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    k = -1.0 / d ** 3
    np.fill_diagonal(k, -np.sum(k, axis=1))
    return k


def _damped_newton(x, alpha, max_iter=500):
    """Saddle-free damped Newton: |eigenvalues| of the Hessian, energy backtracking."""
    resid = np.inf
    for _ in range(max_iter):
        r = _as_points(x)
        g = _gradient(r, alpha)
        resid = float(np.linalg.norm(g))
        if resid < GRADIENT_TOLERANCE:
            return x, resid
        w, v = np.linalg.eigh(_hessian(r, alpha))
        w = np.maximum(np.abs(w), 1e-8)
        step = v @ ((v.T @ g) / w)
        e0 = _energy(r, alpha)
        t = 1.0
        while t > 1e-10:
            trial = x - t * step
            pt = _as_points(trial)
            if (_energy(pt, alpha) <= e0 + 1e-14 * max(1.0, abs(e0))
                    or np.linalg.norm(_gradient(pt, alpha)) < resid):
                break
            t *= 0.5
        x = trial
    raise ConvergenceError(f"equilibrium search did not converge (|grad|={resid:.3e})", residual=resid)


def _solve_dimensionless(n, alpha):
    z = _axial_chain(n)
    x_lin = np.concatenate([np.zeros(n), z])
    if n == 1:
        return x_lin
    lam = alpha ** 2 - np.linalg.eigvalsh(_interaction_matrix(z))
    if lam.min() > 0:
        return x_lin
    # zigzag side: push along the softest transverse eigenvector, then relax
    w, v = np.linalg.eigh(_interaction_matrix(z))
    soft = v[:, np.argmax(w)]
    soft = soft * np.sign(soft[0]) if soft[0] != 0 else soft
    amp = max(0.3, math.sqrt(-lam.min()))
    x = np.concatenate([amp * soft, z])
    for _ in range(MAX_SADDLE_ESCAPES):
        x, _ = _damped_newton(x, alpha)
        w, v = np.linalg.eigh(_hessian(_as_points(x), alpha))
        if w[0] > -1e-9:
            return x
        # stationary but not a minimum: kick along the unstable direction and relax again
        x = x + 0.3 * v[:, 0] * math.sqrt(len(x))
    raise ConvergenceError("equilibrium search kept landing on saddle points", residual=0.0)


def _modes(x, alpha, transverse_only_linear):
    n = len(x) // 2
    hess = _hessian(_as_points(x), alpha)
    if transverse_only_linear:
        hess = hess[:n, :n]
    w, v = np.linalg.eigh(hess)
    return w, v


def equilibrium_positions(n, omega_y, omega_z, ion: IonSpecies = YB171) -> ChainState:
    """Find the stable (y, z) equilibrium of ``n`` ions and its normal modes."""
    if int(n) != n or n < 1:
        raise InvalidParameterError("n must be a positive integer")
    if not (omega_y > 0 and omega_z > 0):
        raise InvalidParameterError("trap frequencies must be positive")
    n = int(n)
    alpha = omega_y / omega_z
    x = _solve_dimensionless(n, alpha)
    r = _as_points(x)
    resid = float(np.linalg.norm(_gradient(r, alpha)))
    if resid > GRADIENT_TOLERANCE:
        raise ConvergenceError(f"equilibrium residual {resid:.3e} above tolerance", residual=resid)
    phase = Phase.LINEAR if np.all(np.abs(r[:, 0]) < LINEAR_TOLERANCE) else Phase.ZIGZAG
    w, v = _modes(x, alpha, transverse_only_linear=False)
    if w.min() < -1e-9:
        raise PhaseMisclassificationError(f"equilibrium is not a minimum (lowest eigenvalue {w.min():.3e})")
    ell = length_scale(omega_z, ion)
    return ChainState(n_ions=n, positions=r * ell,
                      mode_frequencies=np.sqrt(np.clip(w, 0, None)) * omega_z,
                      mode_vectors=v, phase_label=phase, omega_y=float(omega_y),
                      omega_z=float(omega_z), length_scale=ell, gradient_norm=resid)


def _alternates(vec, tol=1e-9):
    s = np.sign(vec[np.abs(vec) > tol])
    return len(s) > 1 and np.all(s[1:] == -s[:-1])


def transverse_mode_spectrum(state: ChainState, omega_y=None, omega_z=None,
                             ion: IonSpecies = YB171) -> list[NormalMode]:
    """Ascending transverse modes of ``state``.

    For a linear chain only the y block of the Hessian is used and the lowest
    mode (alternating signs) is flagged as the zigzag mode. For a zigzag
    chain y and z couple, so all 2n modes of the planar Hessian are returned.
    """
    omega_y = state.omega_y if omega_y is None else omega_y
    omega_z = state.omega_z if omega_z is None else omega_z
    if state.gradient_norm > GRADIENT_TOLERANCE:
        raise ConvergenceError("state is not converged", residual=state.gradient_norm)
    n = state.n_ions
    alpha = omega_y / omega_z
    ell = length_scale(omega_z, ion)
    x = np.concatenate([state.positions[:, 0], state.positions[:, 1]]) / ell
    linear = state.phase_label == Phase.LINEAR
    w, v = _modes(x, alpha, transverse_only_linear=linear)
    if linear and w.min() < 0:
        raise PhaseMisclassificationError(
            f"chain labelled linear but transverse eigenvalue {w.min():.3e} < 0; it has buckled")
    freqs = np.sqrt(np.clip(w, 0, None)) * omega_z
    modes = []
    for i in range(len(w)):
        vec = v[:, i] if linear else v[:n, i]
        modes.append(NormalMode(frequency=float(freqs[i]), vector=v[:, i],
                                is_zigzag=bool(linear and i == 0 and (n == 1 or _alternates(vec)))))
    return modes


def zigzag_frequency(omega_y, omega_yc):
    """Soft zigzag-mode frequency ``sqrt(omega_y^2 - omega_yc^2)`` on the linear side."""
    wy = np.asarray(omega_y, dtype=float)
    if np.any(wy < omega_yc):
        raise DomainError("omega_y below the critical value: chain is zigzag, use the full spectrum")
    out = np.sqrt(wy ** 2 - np.asarray(omega_yc, dtype=float) ** 2)
    return out if out.ndim else float(out)


def _lowest_transverse_eigenvalue(alpha, k):
    return alpha ** 2 - np.linalg.eigvalsh(k).max()


def critical_com_frequency(n, omega_z, ion: IonSpecies = YB171) -> CriticalPoint:
    """Locate the transverse COM frequency at which the zigzag mode vanishes."""
    if int(n) != n or n < 2:
        raise InvalidParameterError("critical point needs at least two ions")
    if not omega_z > 0:
        raise InvalidParameterError("omega_z must be positive")
    k = _interaction_matrix(_axial_chain(int(n)))
    lo, hi = 1e-3, 2.0 * float(n)
    f_lo, f_hi = _lowest_transverse_eigenvalue(lo, k), _lowest_transverse_eigenvalue(hi, k)
    if f_lo * f_hi > 0:
        raise BracketError(f"no sign change of the zigzag eigenvalue on alpha in [{lo}, {hi}]",
                           bracket=(lo, hi))
    alpha_c = brentq(_lowest_transverse_eigenvalue, lo, hi, args=(k,), xtol=1e-15, rtol=1e-14)
    return CriticalPoint(omega_yc=alpha_c * omega_z, alpha_c=alpha_c, n_ions=int(n), omega_z=float(omega_z))


def sensitivity_amplification(omega_y, omega_yzz):
    """Ratio by which zigzag-mode drift exceeds COM drift (``d omega_yzz / d omega_y``)."""
    if omega_yzz == 0:
        raise DivergenceError("zigzag frequency is zero: sensitivity diverges at the critical point")
    if omega_yzz < 0:
        raise InvalidParameterError("zigzag frequency must be positive")
    return omega_y / omega_yzz
