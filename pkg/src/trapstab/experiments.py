"""Compositions of the loop, chain and spectroscopy models used by scenarios.

Everything here is deterministic given the noise-suite seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chain_modes import critical_com_frequency, zigzag_frequency
from .errors import InvalidParameterError
from .noise_servo import (ComponentChain, NoiseSuite, ResonatorModel, ServoConfig, simulate_loop)
from .spectroscopy import RamseyConfig, decoherence_rate, measure_contrast
from .trap_core import TWO_PI, TrapConfig, radial_secular_frequency, rod_dc_for_omega_y, rod_dc_shift


def block_means(x, dt, window):
    """Non-overlapping averages of ``x`` over ``window`` seconds (trailing partial block dropped)."""
    m = max(int(round(window / dt)), 1)
    n = len(x) // m
    if n < 2:
        raise InvalidParameterError("record shorter than two averaging windows")
    return np.asarray(x[:n * m], dtype=float).reshape(n, m).mean(axis=1)


# ---------------------------------------------------------------------------
# loop suppression

@dataclass(frozen=True)
class SuppressionResult:
    suppression_db: float
    locked_ppm: float
    unlocked_ppm: float


def drift_suppression_db(trap: TrapConfig, chain: ComponentChain, resonator: ResonatorModel,
                         servo: ServoConfig, noise: NoiseSuite, duration, window=10.0,
                         record_every=1) -> SuppressionResult:
    """Ratio of slow V0 wander without and with the lock, in dB.

    Both runs share the noise suite. The wander is the rms of
    ``window``-second means of the fractional V0 deviation, mean removed.
    """
    spread = {}
    for locked in (True, False):
        tr = simulate_loop(trap, chain, resonator, servo, noise, duration, locked=locked,
                           record_every=record_every)
        dt = servo.sample_period * record_every
        frac = tr.v0 / float(trap.drive.rf_amplitude) - 1.0
        spread[locked] = float(np.std(block_means(frac, dt, window)))
    db = 20 * math.log10(spread[False] / spread[True]) if spread[True] > 0 else math.inf
    return SuppressionResult(db, spread[True] * 1e6, spread[False] * 1e6)


def _tone_amplitude(x, t, freq):
    """Amplitude of the ``freq`` component of ``x`` by lock-in demodulation."""
    x = x - np.mean(x)
    c = np.mean(x * np.cos(TWO_PI * freq * t))
    s = np.mean(x * np.sin(TWO_PI * freq * t))
    return 2 * math.hypot(c, s)


def disturbance_rejection_db(trap: TrapConfig, chain: ComponentChain, resonator: ResonatorModel,
                             servo: ServoConfig, frequency_hz, amplitude_ppm=10.0, periods=20,
                             settle=None):
    """Rejection of a sinusoidal source-amplitude tone by the lock, in dB.

    The tone in V0 is demodulated over an integer number of periods after a
    settling time, with and without the lock.
    """
    dt = servo.sample_period
    if frequency_hz * dt >= 0.5:
        raise InvalidParameterError("tone above the Nyquist frequency of the loop")
    # integer samples per period keeps the demodulation window exact
    spp = max(int(round(1.0 / (frequency_hz * dt))), 2)
    freq = 1.0 / (spp * dt)
    settle = max(10.0 / freq, 0.1) if settle is None else settle
    n_settle = int(math.ceil(settle / dt / spp)) * spp
    n = n_settle + periods * spp
    noise = NoiseSuite(source_tones=((amplitude_ppm, freq),))
    amp = {}
    for locked in (True, False):
        tr = simulate_loop(trap, chain, resonator, replace(servo, setpoint_stability_ppm=0.0), noise,
                           n * dt, locked=locked)
        amp[locked] = _tone_amplitude(tr.v0[n_settle:], tr.time[n_settle:], freq)
    return 20 * math.log10(amp[False] / amp[True]), freq


# ---------------------------------------------------------------------------
# temperature coupling

@dataclass(frozen=True)
class TemperatureCoupling:
    coefficients_ppm_per_c: dict
    intercept_ppm: float


def temperature_coupling(omega, temperatures: dict, nominal=None) -> TemperatureCoupling:
    """Multiple linear regression of fractional frequency on component temperatures."""
    omega = np.asarray(omega, dtype=float)
    nominal = omega[0] if nominal is None else nominal
    y = (omega / nominal - 1.0) * 1e6
    names = [k for k, v in temperatures.items() if np.ptp(v) > 0]
    design = np.column_stack([np.asarray(temperatures[k]) - temperatures[k][0] for k in names]
                             + [np.ones(len(y))])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return TemperatureCoupling(dict(zip(names, map(float, coef[:-1]))), float(coef[-1]))


# ---------------------------------------------------------------------------
# zigzag mode

@dataclass(frozen=True)
class ZigzagOperatingPoint:
    n_ions: int
    rod_dc: float
    alpha_c: float
    omega_y: float
    omega_zz: float
    omega_z: float

    @property
    def amplification(self):
        return self.omega_y / self.omega_zz


def zigzag_operating_point(trap: TrapConfig, n_ions, target_zz) -> ZigzagOperatingPoint:
    """Rod DC voltage that tunes the zigzag mode of ``n_ions`` to ``target_zz`` (rad/s)."""
    wz = trap.secular_frequencies().omega_z
    cp = critical_com_frequency(n_ions, wz, trap.ion)
    wy = math.hypot(target_zz, cp.omega_yc)
    u = float(rod_dc_for_omega_y(wy, trap.drive, trap.geometry, trap.ion))
    return ZigzagOperatingPoint(n_ions=int(n_ions), rod_dc=u, alpha_c=cp.alpha_c, omega_y=wy,
                                omega_zz=float(target_zz), omega_z=wz)


def transverse_y_series(trap: TrapConfig, omega_r, rod_dc):
    """omega_y from a radial-frequency record and a (possibly noisy) rod voltage."""
    wy2 = np.asarray(omega_r, dtype=float) ** 2 - rod_dc_shift(rod_dc, trap.geometry, trap.ion)
    return np.sqrt(wy2)


def zigzag_series(omega_y, omega_z, alpha_c):
    """Zigzag-mode frequency of a linear chain following the COM records."""
    return zigzag_frequency(omega_y, alpha_c * np.asarray(omega_z, dtype=float))


# ---------------------------------------------------------------------------
# decoherence

@dataclass(frozen=True)
class DecoherencePoint:
    zz_frequency_hz: float
    amplification: float
    locked: bool
    rate: float
    rate_stderr: float
    upper_bound: float
    contrasts: tuple


def decay_delays(rate_guess, factors=(0.2, 0.5, 1.0), dt=None):
    """Ramsey delays at ``factors`` decay times, rounded to whole samples of ``dt``."""
    delays = [f / rate_guess for f in factors]
    if dt is not None:
        delays = [max(round(d / dt), 1) * dt for d in delays]
    return tuple(delays)


def predicted_white_rate(density, amplification=1.0):
    """Contrast decay rate for white frequency noise of ``density`` rad/s*sqrt(s)."""
    return 0.5 * (amplification * density) ** 2


def contrast_decay(deviation, dt, delays, cfg: RamseyConfig, seed, n_points=8):
    """Fit a decay rate to fringe contrasts measured on consecutive record segments."""
    deviation = np.asarray(deviation, dtype=float)
    rows, start = [], 0
    for i, delay in enumerate(delays):
        need = int(round(delay / dt)) * n_points * cfg.shots_per_point
        seg = deviation[start:start + need]
        start += need
        c, err = measure_contrast(seg, dt, delay, cfg, seed=int(seed) * 131 + i, n_points=n_points)
        rows.append((delay, c, err))
    return decoherence_rate(rows), tuple(rows)


def record_length(delays, cfg: RamseyConfig, dt, n_points=8):
    return sum(int(round(d / dt)) * n_points * cfg.shots_per_point for d in delays)


def decoherence_sweep(trap: TrapConfig, chain: ComponentChain, resonator: ResonatorModel,
                      servo: ServoConfig, noise: NoiseSuite, n_ions, zz_frequencies_hz,
                      cfg: RamseyConfig, delay_factors=(0.2, 0.5, 1.0), n_points=8, seed=0,
                      max_duration=None):
    """Zigzag decoherence rate at several mode frequencies, locked and unlocked.

    One loop record per lock state is shared by all frequencies; only the map
    from omega_r to the zigzag frequency changes. Delays are placed at
    ``delay_factors`` times the decay time expected from the source white
    noise without the lock. ``max_duration`` caps the simulated record.
    """
    dt = servo.sample_period
    wr0 = float(radial_secular_frequency(trap.drive, trap.geometry, trap.ion))
    density = noise.source_white_ppm * 1e-6 * wr0
    if density <= 0:
        raise InvalidParameterError("decoherence sweep needs white source noise")
    ops = [zigzag_operating_point(trap, n_ions, TWO_PI * f) for f in zz_frequencies_hz]
    plan = []
    for op in ops:
        gain = wr0 / op.omega_zz
        delays = decay_delays(predicted_white_rate(density, gain), delay_factors, dt)
        plan.append((op, gain, delays))
    n_need = max(record_length(d, cfg, dt, n_points) for *_, d in plan)
    duration = n_need * dt
    if max_duration is not None and duration > max_duration * (1 + 1e-9):
        raise InvalidParameterError(f"decay scans need {duration:.1f} s of record, above {max_duration} s")
    out = []
    for locked in (False, True):
        tr = simulate_loop(trap, chain, resonator, servo, noise, duration, locked=locked)
        for k, (op, gain, delays) in enumerate(plan):
            wy = transverse_y_series(trap, tr.omega_r, op.rod_dc)
            wzz = zigzag_series(wy, op.omega_z, op.alpha_c)
            fit, rows = contrast_decay(wzz - op.omega_zz, dt, delays, cfg, seed=seed * 1000 + k,
                                       n_points=n_points)
            out.append(DecoherencePoint(zz_frequency_hz=op.omega_zz / TWO_PI, amplification=gain,
                                        locked=locked, rate=fit.rate, rate_stderr=fit.rate_stderr,
                                        upper_bound=fit.upper_bound, contrasts=rows))
    return out


def synthetic_zz_decoherence(omega_y, zz_frequencies, com_density, cfg: RamseyConfig, seed,
                             delay_factors=(0.2, 0.5, 1.0), n_points=8, dt=None):
    """Decay rates of zigzag modes driven by white COM-frequency noise.

    ``omega_y`` fluctuates with white noise of ``com_density`` (rad/s*sqrt(s));
    the zigzag frequency follows through the exact soft-mode law with
    omega_yc chosen to give each nominal ``zz_frequencies`` value (rad/s).
    Returns ``(amplification, fit)`` pairs.
    """
    out = []
    for k, wzz in enumerate(zz_frequencies):
        wyc = math.sqrt(omega_y ** 2 - wzz ** 2)
        gain = omega_y / wzz
        rate = predicted_white_rate(com_density, gain)
        step = dt if dt is not None else min(delay_factors) / rate / 50
        delays = decay_delays(rate, delay_factors, step)
        n = record_length(delays, cfg, step, n_points)
        rng = np.random.default_rng([int(seed), k])
        wy = omega_y + rng.standard_normal(n) * (com_density / math.sqrt(step))
        dev = zigzag_frequency(wy, wyc) - wzz
        fit, _ = contrast_decay(dev, step, delays, cfg, seed=int(seed) * 1000 + k, n_points=n_points)
        out.append((gain, fit))
    return out
