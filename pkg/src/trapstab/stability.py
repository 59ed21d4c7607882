"""Allan-deviation analysis of frequency records."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, InvalidParameterError

GAP_WARNING_FRACTION = 0.05


@dataclass(frozen=True)
class DecadeSlope:
    tau_start: float
    tau_stop: float
    slope: float | None
    label: str


@dataclass(frozen=True)
class DriftFit:
    rate: float
    stderr: float


@dataclass
class StabilityReport:
    taus: np.ndarray
    adev: np.ndarray
    mode: str
    counts: np.ndarray
    mean: float
    slopes: list = field(default_factory=list)
    drift: DriftFit | None = None

    def __post_init__(self):
        if np.any(np.diff(self.taus) <= 0):
            raise InvalidParameterError("taus must be strictly increasing")

    def at(self, tau):
        """ADEV at the grid point closest to ``tau`` (log distance)."""
        i = int(np.argmin(np.abs(np.log(self.taus / tau))))
        return float(self.adev[i])

    def fractional(self):
        return self.adev if self.mode == "fractional" else self.adev / abs(self.mean)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s", "adev", "mode"])
            for t, a in zip(self.taus, self.adev):
                w.writerow([repr(float(t)), repr(float(a)), self.mode])

    def summary(self, tau, unit="Hz"):
        """Sentence like ``"3.9 Hz, i.e., 4.6 ppm at tau = 200 s"``."""
        i = int(np.argmin(np.abs(np.log(self.taus / tau))))
        frac = self.fractional()[i]
        if self.mode == "fractional":
            return f"{frac * 1e6:.2f} ppm at tau = {self.taus[i]:g} s"
        return f"{self.adev[i]:.3g} {unit}, i.e., {frac * 1e6:.2f} ppm at tau = {self.taus[i]:g} s"


def default_taus(n, sample_period, per_decade=10):
    """Log grid, ``per_decade`` points per decade, up to a quarter of the record."""
    m_max = n // 4
    if m_max < 1:
        raise InsufficientDataError("record too short for any averaging time")
    k = np.arange(0, int(math.floor(per_decade * math.log10(m_max))) + 1)
    m = np.unique(np.round(10 ** (k / per_decade)).astype(int))
    return m[m <= m_max] * sample_period


def _window_counts(taus, sample_period):
    m = np.rint(np.asarray(taus, dtype=float) / sample_period).astype(int)
    if np.any(m < 1):
        raise InvalidParameterError("tau shorter than the sample period")
    off = np.abs(m * sample_period - taus) > 1e-9 * np.maximum(taus, sample_period)
    if np.any(off):
        warnings.warn("tau values rounded to multiples of the sample period", RuntimeWarning, stacklevel=3)
    return m


def overlapping_avar(y, m):
    """Overlapping Allan variance of frequency samples ``y`` at window ``m``."""
    c = np.concatenate([[0.0], np.cumsum(y)])
    means = (c[m:] - c[:-m]) / m
    d = means[m:] - means[:-m]
    return 0.5 * float(np.mean(d * d))


def allan_deviation(series, sample_period, taus=None, mode="absolute") -> StabilityReport:
    """Overlapping Allan deviation of an evenly sampled frequency record.

    ``mode="fractional"`` normalises by the record mean first.
    """
    if mode not in ("absolute", "fractional"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise InvalidParameterError("series must be a finite 1-D array")
    n = len(y)
    mean = float(np.mean(y)) if n else 0.0
    if mode == "fractional":
        if mean == 0:
            raise InvalidParameterError("fractional mode needs a nonzero mean")
        y = y / mean
    if taus is None:
        taus = default_taus(n, sample_period)
    m = np.unique(_window_counts(taus, sample_period))
    if n < 3 * m.max():
        raise InsufficientDataError(f"need at least {3 * m.max()} samples for tau = {m.max() * sample_period} s")
    # remove the common offset before cumulative sums; y[0] keeps constants exact
    y = y - y[0]
    avar = np.array([overlapping_avar(y, int(k)) for k in m])
    return StabilityReport(taus=m * sample_period, adev=np.sqrt(avar), mode=mode, counts=n - 2 * m + 1,
                           mean=mean)


def _label(slope):
    if slope < -0.75:
        return "white-phase"
    if slope < -0.25:
        return "white"
    if slope < 0.25:
        return "flicker"
    return "random-walk/drift"


def classify_noise_slope(report: StabilityReport) -> list[DecadeSlope]:
    """Log-log slope of ADEV per decade of tau, with a noise-type label."""
    taus, adev = np.asarray(report.taus), np.asarray(report.adev)
    if len(taus) < 2 or taus[-1] / taus[0] < 10 * (1 - 1e-9):
        raise InsufficientDataError("slope classification needs at least one decade of tau")
    out = []
    lo = taus[0]
    while lo * 10 <= taus[-1] * (1 + 1e-9):
        hi = lo * 10
        sel = (taus >= lo * (1 - 1e-9)) & (taus <= hi * (1 + 1e-9))
        t, a = taus[sel], adev[sel]
        if np.any(a <= 0) or len(t) < 2:
            out.append(DecadeSlope(float(lo), float(hi), None, "undefined"))
        else:
            slope = float(np.polyfit(np.log10(t), np.log10(a), 1)[0])
            out.append(DecadeSlope(float(lo), float(hi), slope, _label(slope)))
        lo = hi
    report.slopes = out
    return out


def overall_slope(report: StabilityReport):
    a = np.asarray(report.adev)
    if np.any(a <= 0):
        return None
    return float(np.polyfit(np.log10(report.taus), np.log10(a), 1)[0])


def drift_rate(series, sample_period) -> DriftFit:
    """Least-squares linear slope (units per second) with its standard error."""
    y = np.asarray(series, dtype=float)
    if len(y) < 2:
        raise InsufficientDataError("need at least two samples")
    t = np.arange(len(y)) * sample_period
    if len(y) == 2:
        return DriftFit(rate=float((y[1] - y[0]) / sample_period), stderr=0.0)
    res = stats.linregress(t, y)
    return DriftFit(rate=float(res.slope), stderr=float(res.stderr))


def fill_gaps(values, valid):
    """Linearly interpolate samples where ``valid`` is False."""
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise InsufficientDataError("no valid samples")
    frac = 1 - valid.mean()
    if frac > GAP_WARNING_FRACTION:
        warnings.warn(f"{100 * frac:.1f}% of samples interpolated", RuntimeWarning, stacklevel=2)
    if frac == 0:
        return values.copy()
    idx = np.arange(len(values))
    return np.interp(idx, idx[valid], values[valid])
