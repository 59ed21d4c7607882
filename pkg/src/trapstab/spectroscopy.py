"""Ramsey phenomenology on a motional sideband.

The fringe model is ``P_up = A cos(Delta T_r + phi) + offset`` with
``Delta = omega_laser - omega_resonance``. A positive frequency drift of the
resonance therefore moves the fringe towards positive laser detuning, and all
estimators here report drifts with that sign (positive = resonance moved up).

The monitored resonance is taken to be free of light shifts, so the fringe
centre does not depend on the Ramsey delay.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

from .errors import FitQualityError, InvalidParameterError
from .trap_core import TWO_PI

LINEAR_RANGE_RAD = 0.5


@dataclass(frozen=True)
class QubitReference:
    hyperfine_splitting: float = TWO_PI * 12.642815e9


@dataclass(frozen=True)
class RamseyConfig:
    delay: float
    contrast: float = 0.5
    phase_offset: float = 0.0
    offset: float = 0.5
    shots_per_point: int = 100
    detection_error: float = 0.0

    def __post_init__(self):
        if not self.delay > 0:
            raise InvalidParameterError("Ramsey delay must be positive")
        if not 0 <= self.contrast <= 0.5:
            raise InvalidParameterError(f"contrast must lie in [0, 0.5], got {self.contrast}")
        if self.offset - self.contrast < -1e-12 or self.offset + self.contrast > 1 + 1e-12:
            raise InvalidParameterError("offset +/- contrast must stay inside [0, 1]")
        if int(self.shots_per_point) != self.shots_per_point or self.shots_per_point < 1:
            raise InvalidParameterError("shots_per_point must be a positive integer")
        if not 0 <= self.detection_error < 0.5:
            raise InvalidParameterError("detection error must lie in [0, 0.5)")

    @property
    def fringe_period(self):
        """Fringe period in detuning, rad/s."""
        return TWO_PI / self.delay

    @property
    def protocol_duration(self):
        """Interrogation time of one two-point measurement (dead time excluded)."""
        return 2 * self.shots_per_point * self.delay


def ramsey_probability(detuning, cfg: RamseyConfig):
    p = cfg.contrast * np.cos(np.asarray(detuning, dtype=float) * cfg.delay + cfg.phase_offset) + cfg.offset
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
        warnings.warn("Ramsey probability outside [0, 1]; clamped", RuntimeWarning, stacklevel=2)
    p = np.clip(p, 0.0, 1.0)
    return p if p.ndim else float(p)


def detected_probability(p, cfg: RamseyConfig):
    """Bright-state probability after a symmetric detection error."""
    e = cfg.detection_error
    return np.asarray(p) * (1 - 2 * e) + e


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_fringe_point(p, shots, seed):
    """Binomial number of bright outcomes in ``shots`` repetitions."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise InvalidParameterError("probability must lie in [0, 1]")
    counts = _rng(seed).binomial(int(shots), p)
    return counts if np.ndim(counts) else int(counts)


def point_stream(seed, index):
    """Per-point generator so reordering a scan does not change its outcomes."""
    return np.random.default_rng([int(seed), int(index)])


# ---------------------------------------------------------------------------
# fringe fitting

@dataclass(frozen=True)
class FringeFit:
    contrast: float
    center: float
    phase: float
    offset: float
    delay: float
    covariance: np.ndarray
    contrast_stderr: float
    center_stderr: float

    @property
    def period_hz(self):
        """Fringe period in Hz of detuning."""
        return 1.0 / self.delay


@dataclass
class FringeDataset:
    detunings: np.ndarray
    up_counts: np.ndarray
    shots: int
    delay: float
    fit: FringeFit | None = None

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.up_counts = np.asarray(self.up_counts, dtype=int)
        if np.any(self.up_counts > self.shots) or np.any(self.up_counts < 0):
            raise InvalidParameterError("up counts must lie in [0, shots]")

    @property
    def probabilities(self):
        return self.up_counts / self.shots

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_hz", "up_counts", "shots"])
            for d, c in zip(self.detunings, self.up_counts):
                w.writerow([repr(float(d / TWO_PI)), int(c), int(self.shots)])

    @classmethod
    def from_csv(cls, path, delay):
        rows = list(csv.DictReader(open(path)))
        shots = {int(r["shots"]) for r in rows}
        if len(shots) != 1:
            raise InvalidParameterError("fringe file mixes different shot numbers")
        return cls(detunings=[TWO_PI * float(r["detuning_hz"]) for r in rows],
                   up_counts=[int(r["up_counts"]) for r in rows], shots=shots.pop(), delay=delay)


def _fringe_model(detuning, contrast, center, delay, offset, phase):
    return contrast * np.cos((detuning - center) * delay + phase) + offset


class RamseyFringeFit(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``A cos((Delta - center) T + phase) + offset``.

    With the delay fixed the model is linear in ``(A cos, A sin, offset)`` and
    is solved in closed form; the centre is taken on the fringe nearest zero
    detuning. ``fit_period=True`` additionally refines the delay (and so the
    fringe period) by nonlinear least squares.

    Uncertainties use binomial variance when ``shots`` is given, otherwise the
    residual variance.
    """

    def __init__(self, delay=1e-3, phase=0.0, fit_period=False, shots=None):
        self.delay = delay
        self.phase = phase
        self.fit_period = fit_period
        self.shots = shots

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = column_or_1d(X)
        n = len(x)
        if n < 4:
            raise FitQualityError("need at least 4 points to fit a fringe")
        arg = x * self.delay + self.phase
        design = np.column_stack([np.cos(arg), np.sin(arg), np.ones(n)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        a, b, c = coef
        contrast = math.hypot(a, b)
        center = math.atan2(b, a) / self.delay
        delay = self.delay
        if self.fit_period:
            popt, _ = curve_fit(lambda d, A, ctr, T, off: _fringe_model(d, A, ctr, T, off, self.phase),
                                x, y, p0=[contrast, center, delay, c], maxfev=20000)
            contrast, center, delay, c = popt
            if contrast < 0:
                contrast, center = -contrast, center + math.pi / delay
            half = math.pi / delay
            center = (center + half) % (2 * half) - half

        resid = y - _fringe_model(x, contrast, center, delay, c, self.phase)
        if self.shots:
            pm = np.clip(_fringe_model(x, contrast, center, delay, c, self.phase), 0, 1)
            sigma2 = float(np.mean(pm * (1 - pm))) / self.shots
        else:
            sigma2 = float(resid @ resid) / max(n - 3 - int(self.fit_period), 1)
        # Jacobian of the model at the optimum: (A, center, delay, offset)
        ph = (x - center) * delay + self.phase
        jac = np.column_stack([np.cos(ph), contrast * delay * np.sin(ph),
                               -contrast * (x - center) * np.sin(ph), np.ones(n)])
        if not self.fit_period:
            jac = jac[:, [0, 1, 3]]
        cov = sigma2 * np.linalg.pinv(jac.T @ jac)
        if not self.fit_period:
            full = np.zeros((4, 4))
            idx = [0, 1, 3]
            full[np.ix_(idx, idx)] = cov
            cov = full
        self.contrast_ = float(contrast)
        self.center_ = float(center)
        self.delay_ = float(delay)
        self.offset_ = float(c)
        self.covariance_ = cov
        self.contrast_stderr_ = float(math.sqrt(max(cov[0, 0], 0.0)))
        self.center_stderr_ = float(math.sqrt(max(cov[1, 1], 0.0)))
        self.n_points_ = n
        return self

    def predict(self, X):
        check_is_fitted(self, "contrast_")
        x = column_or_1d(np.asarray(X, dtype=float))
        return _fringe_model(x, self.contrast_, self.center_, self.delay_, self.offset_, self.phase)

    def result(self) -> FringeFit:
        check_is_fitted(self, "contrast_")
        return FringeFit(contrast=self.contrast_, center=self.center_, phase=self.phase,
                         offset=self.offset_, delay=self.delay_, covariance=self.covariance_,
                         contrast_stderr=self.contrast_stderr_, center_stderr=self.center_stderr_)


def contrast_shot_noise(shots, n_points):
    """Worst-case (p = 1/2) standard error of a fitted contrast."""
    return 0.5 / math.sqrt(shots) * math.sqrt(2.0 / n_points)


def fit_fringe(data: FringeDataset, phase=0.0, fit_period=False, check_quality=True) -> FringeFit:
    n = len(data.detunings)
    if n < 8:
        raise FitQualityError(f"need at least 8 detuning points, got {n}")
    spacing = np.ptp(data.detunings) / (n - 1)
    if (np.ptp(data.detunings) + spacing) * data.delay < TWO_PI * (1 - 1e-9):
        raise FitQualityError("detuning scan does not cover one fringe period")
    est = RamseyFringeFit(delay=data.delay, phase=phase, fit_period=fit_period, shots=data.shots)
    try:
        est.fit(data.detunings, data.probabilities)
    except RuntimeError as exc:
        raise FitQualityError(f"fringe fit did not converge: {exc}") from exc
    fit = est.result()
    if check_quality and fit.contrast < 3 * contrast_shot_noise(data.shots, n):
        raise FitQualityError(f"contrast {fit.contrast:.3f} below three times projection noise")
    data.fit = fit
    return fit


def scan_detunings(delay, n_points=16, center=0.0, periods=1):
    """``n_points`` detunings evenly covering ``periods`` fringe periods around ``center``."""
    return center + (np.arange(n_points) - n_points // 2) * (periods * TWO_PI / delay / n_points)


def scan_fringe(detunings, cfg: RamseyConfig, seed, resonance_shift=0.0) -> FringeDataset:
    """Simulated fringe scan with projection noise, one substream per point."""
    detunings = np.asarray(detunings, dtype=float)
    p = detected_probability(ramsey_probability(detunings - resonance_shift, cfg), cfg)
    counts = [sample_fringe_point(float(pi), cfg.shots_per_point, point_stream(seed, i))
              for i, pi in enumerate(np.atleast_1d(p))]
    return FringeDataset(detunings=detunings, up_counts=counts, shots=cfg.shots_per_point, delay=cfg.delay)


# ---------------------------------------------------------------------------
# two-point tracking

@dataclass(frozen=True)
class TwoPointEstimate:
    drift: float
    in_range: bool


def two_point_detunings(cfg: RamseyConfig):
    """Laser detunings of points A and B (half contrast either side of the centre)."""
    return ((-math.pi / 2 - cfg.phase_offset) / cfg.delay, (math.pi / 2 - cfg.phase_offset) / cfg.delay)


def two_point_probabilities(shift, cfg: RamseyConfig):
    da, db = two_point_detunings(cfg)
    shift = np.asarray(shift, dtype=float)
    return ramsey_probability(da - shift, cfg), ramsey_probability(db - shift, cfg)


def two_point_drift_estimate(pA_hat, pB_hat, cfg: RamseyConfig, linear=False):
    """Resonance shift (rad/s) from the populations measured at points A and B.

    ``pB - pA = 2 A sin(shift T)``; the exact inverse is the default, the
    small-signal ``(pB - pA) / (2 A T)`` is available with ``linear=True``.
    Estimates beyond +/-0.5 rad of accumulated phase are flagged out of range.
    """
    if cfg.contrast <= 0:
        raise InvalidParameterError("two-point estimate needs a nonzero contrast")
    x = (np.asarray(pB_hat, dtype=float) - np.asarray(pA_hat, dtype=float)) / (2 * cfg.contrast)
    if linear:
        drift = x / cfg.delay
    else:
        drift = np.arcsin(np.clip(x, -1.0, 1.0)) / cfg.delay
    in_range = (np.abs(drift) * cfg.delay <= LINEAR_RANGE_RAD) & (np.abs(x) <= 1.0)
    if np.ndim(drift) == 0:
        return TwoPointEstimate(float(drift), bool(in_range))
    return TwoPointEstimate(drift, in_range)


@dataclass
class TrackerResult:
    time: np.ndarray
    estimate: np.ndarray
    in_range: np.ndarray
    truth: np.ndarray
    qubit: QubitReference = QubitReference()

    @property
    def bsbt_center(self):
        """Blue-sideband resonance ``omega_HF + omega`` in rad/s."""
        return self.qubit.hyperfine_splitting + self.estimate

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "f_est_hz", "in_range"])
            for t, f, ok in zip(self.time, self.estimate / TWO_PI, self.in_range):
                w.writerow([repr(float(t)), repr(float(f)), int(ok)])


def track_frequency(times, true_frequency, protocol: RamseyConfig, cadence, seed,
                    reference=None, recenter=True, qubit=QubitReference()) -> TrackerResult:
    """Follow a drifting motional frequency with the two-point method.

    At each tick the true frequency (interpolated from ``times``) is probed
    at points A and B around the current reference. The reference follows
    the estimates when ``recenter`` is set; an out-of-range reading triggers
    a full fringe rescan to re-acquire the centre.
    """
    times = np.asarray(times, dtype=float)
    true_frequency = np.asarray(true_frequency, dtype=float)
    if cadence < protocol.protocol_duration:
        raise InvalidParameterError(
            f"cadence {cadence} s shorter than one measurement ({protocol.protocol_duration} s)")
    ticks = np.arange(times[0], times[-1] + 1e-12 * max(1.0, abs(times[-1])), cadence)
    truth = np.interp(ticks, times, true_frequency)
    ref = truth[0] if reference is None else reference
    da, db = two_point_detunings(protocol)
    est = np.empty(len(ticks))
    flags = np.empty(len(ticks), dtype=bool)
    shots = protocol.shots_per_point
    for k, true in enumerate(truth):
        rng = np.random.default_rng([int(seed), k])
        shift = true - ref
        pa = detected_probability(ramsey_probability(da - shift, protocol), protocol)
        pb = detected_probability(ramsey_probability(db - shift, protocol), protocol)
        na, nb = rng.binomial(shots, [pa, pb])
        res = two_point_drift_estimate(na / shots, nb / shots, protocol)
        est[k] = ref + res.drift
        flags[k] = res.in_range
        if not res.in_range:
            scan = scan_fringe(scan_detunings(protocol.delay), protocol,
                               seed=int(rng.integers(2 ** 31)), resonance_shift=shift)
            try:
                ref = ref + fit_fringe(scan, phase=protocol.phase_offset).center
            except FitQualityError:
                pass
        elif recenter:
            ref = est[k]
    return TrackerResult(time=ticks, estimate=est, in_range=flags, truth=truth, qubit=qubit)


# ---------------------------------------------------------------------------
# dephasing and decoherence

def accumulated_phases(deviation, dt, delay, n_shots):
    """Ramsey phase per shot from a frequency-deviation record (rad/s samples).

    Consecutive, non-overlapping windows of length ``delay`` are used; the
    sign matches a resonance shift (``phase = -integral of deviation``).
    """
    w = int(round(delay / dt))
    if w < 1:
        raise InvalidParameterError("delay shorter than the noise sample period")
    need = w * n_shots
    deviation = np.asarray(deviation, dtype=float)
    if len(deviation) < need:
        raise InvalidParameterError(f"deviation record too short: need {need} samples")
    return -deviation[:need].reshape(n_shots, w).sum(axis=1) * dt


def scan_with_phase_noise(detunings, cfg: RamseyConfig, phases, seed) -> FringeDataset:
    """Fringe scan where every shot carries its own extra phase.

    Shots are interleaved: repetition ``j`` of point ``i`` uses
    ``phases[j * n_points + i]``, as when the whole scan is repeated.
    """
    detunings = np.asarray(detunings, dtype=float)
    n = len(detunings)
    shots = cfg.shots_per_point
    ph = np.asarray(phases, dtype=float)[:n * shots].reshape(shots, n)
    counts = []
    for i in range(n):
        p = cfg.contrast * np.cos(detunings[i] * cfg.delay + cfg.phase_offset + ph[:, i]) + cfg.offset
        p = detected_probability(np.clip(p, 0.0, 1.0), cfg)
        counts.append(int(point_stream(seed, i).binomial(1, p).sum()))
    return FringeDataset(detunings=detunings, up_counts=counts, shots=shots, delay=cfg.delay)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    rate_stderr: float
    amplitude: float
    upper_bound: float
    decaying: bool


class ExponentialDecayFit(RegressorMixin, BaseEstimator):
    """Weighted least-squares fit of ``A0 exp(-rate * t)``."""

    def __init__(self, min_points=3):
        self.min_points = min_points

    def fit(self, X, y, sigma=None):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        t = column_or_1d(X)
        if len(t) < self.min_points:
            raise InvalidParameterError(f"need at least {self.min_points} delays")
        if np.any(y <= 0):
            raise FitQualityError("contrasts must be positive")
        sig = None if sigma is None else np.asarray(sigma, dtype=float)
        # log-linear start, then nonlinear polish
        slope, icpt = np.polyfit(t, np.log(y), 1)
        p0 = [math.exp(icpt), -slope]
        popt, pcov = curve_fit(lambda x, a, g: a * np.exp(-g * x), t, y, p0=p0, sigma=sig,
                               absolute_sigma=sig is not None, maxfev=20000)
        self.amplitude_, self.rate_ = float(popt[0]), float(popt[1])
        self.rate_stderr_ = float(math.sqrt(max(pcov[1, 1], 0.0))) if np.all(np.isfinite(pcov)) else 0.0
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        return self.amplitude_ * np.exp(-self.rate_ * column_or_1d(np.asarray(X, dtype=float)))


def decoherence_rate(contrasts) -> DecayFit:
    """Decay rate (1/s) of Ramsey contrast versus delay.

    ``contrasts`` holds ``(delay, contrast)`` or ``(delay, contrast, stderr)``
    tuples. Data that do not decay give ``rate = 0`` and a two-sigma upper
    bound.
    """
    arr = np.asarray(contrasts, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise InvalidParameterError("need at least three (delay, contrast) pairs")
    sigma = arr[:, 2] if arr.shape[1] > 2 and np.all(arr[:, 2] > 0) else None
    est = ExponentialDecayFit().fit(arr[:, 0], arr[:, 1], sigma=sigma)
    rate, err = est.rate_, est.rate_stderr_
    if rate * np.max(arr[:, 0]) < 1e-9:
        return DecayFit(rate=0.0, rate_stderr=err, amplitude=est.amplitude_,
                        upper_bound=max(rate, 0.0) + 2 * err, decaying=False)
    return DecayFit(rate=rate, rate_stderr=err, amplitude=est.amplitude_,
                    upper_bound=rate + 2 * err, decaying=True)


def measure_contrast(deviation, dt, delay, cfg: RamseyConfig, seed, n_points=8):
    """Contrast (and its standard error) of a fringe scanned under frequency noise."""
    scan_cfg = RamseyConfig(delay=delay, contrast=cfg.contrast, phase_offset=cfg.phase_offset,
                            offset=cfg.offset, shots_per_point=cfg.shots_per_point,
                            detection_error=cfg.detection_error)
    phases = accumulated_phases(deviation, dt, delay, n_points * cfg.shots_per_point)
    data = scan_with_phase_noise(scan_detunings(delay, n_points), scan_cfg, phases, seed)
    fit = fit_fringe(data, phase=cfg.phase_offset)
    return fit.contrast, fit.contrast_stderr
