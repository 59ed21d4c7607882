"""Seeded noise processes and scripted temperature records."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named process; stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def white_noise(n, density, dt, rng):
    """White noise with per-sample std ``density / sqrt(dt)``.

    ``density`` is in units of value * sqrt(s), so an average over a window
    ``tau`` has std ``density / sqrt(tau)``.
    """
    if density == 0:
        return np.zeros(n)
    return rng.standard_normal(n) * (density / math.sqrt(dt))


def random_walk(n, diffusion, dt, rng):
    """Brownian motion starting at 0; std after time t is ``diffusion * sqrt(t)``."""
    if diffusion == 0:
        return np.zeros(n)
    steps = rng.standard_normal(n) * (diffusion * math.sqrt(dt))
    steps[0] = 0.0
    return np.cumsum(steps)


def ou_process(n, sigma, correlation_time, dt, rng):
    """Stationary Ornstein-Uhlenbeck process (exact AR(1) discretisation)."""
    if sigma == 0:
        return np.zeros(n)
    a = math.exp(-dt / correlation_time)
    xi = rng.standard_normal(n) * (sigma * math.sqrt(1.0 - a * a))
    x0 = rng.standard_normal() * sigma
    out, _ = lfilter([1.0], [1.0, -a], xi, zi=[a * x0])
    return out


@dataclass(frozen=True)
class TemperatureProfile:
    """Base temperature plus smooth random wander plus a scripted offset.

    ``ramp`` is a list of ``(t_s, offset_C)`` knots, linearly interpolated
    and held constant outside the knots.
    """

    base: float = 22.0
    wander_rms: float = 0.0
    wander_time: float = 600.0
    ramp: tuple = ()

    def sample(self, t, rng):
        t = np.asarray(t, dtype=float)
        dt = t[1] - t[0] if len(t) > 1 else 1.0
        out = np.full(t.shape, self.base)
        if self.wander_rms:
            out += ou_process(len(t), self.wander_rms, self.wander_time, dt, rng)
        if self.ramp:
            knots = np.asarray(self.ramp, dtype=float)
            out += np.interp(t, knots[:, 0], knots[:, 1])
        return out


@dataclass(frozen=True)
class DCSupplyNoise:
    """Fractional noise of a DC supply, in ppm (white in ppm*sqrt(s))."""

    white_ppm: float = 0.0
    wander_ppm: float = 0.0
    wander_time: float = 600.0
    random_walk_ppm: float = 0.0
    tempco_ppm_per_c: float = 0.0


@dataclass(frozen=True)
class NoiseSuite:
    """All stochastic inputs of a run.

    Source amplitude noise is fractional: ``source_white_ppm`` in ppm*sqrt(s),
    ``source_random_walk_ppm`` in ppm/sqrt(s), ``source_wander_ppm`` an
    OU component. ``detector_white_ppm``/``monitor_white_ppm`` are read-out
    noise of the in-loop and monitor rectifiers. ``source_tones`` adds
    ``(amplitude_ppm, frequency_hz)`` sinusoids for transfer measurements.
    """

    source_white_ppm: float = 0.0
    source_random_walk_ppm: float = 0.0
    source_wander_ppm: float = 0.0
    source_wander_time: float = 600.0
    source_tones: tuple = ()
    detector_white_ppm: float = 0.0
    monitor_white_ppm: float = 0.0
    temperatures: dict = field(default_factory=dict)
    endcap: DCSupplyNoise = field(default_factory=DCSupplyNoise)
    rod: DCSupplyNoise = field(default_factory=DCSupplyNoise)
    seed: int = 0

    def temperature(self, name, t):
        profile = self.temperatures.get(name, TemperatureProfile())
        return profile.sample(t, substream(self.seed, "temperature/" + name))

    def source_fraction(self, n, dt):
        """Fractional deviation of the RF generator amplitude at each sample."""
        out = white_noise(n, self.source_white_ppm * 1e-6, dt, substream(self.seed, "source/white"))
        out += random_walk(n, self.source_random_walk_ppm * 1e-6, dt, substream(self.seed, "source/walk"))
        out += ou_process(n, self.source_wander_ppm * 1e-6, self.source_wander_time, dt,
                          substream(self.seed, "source/wander"))
        if self.source_tones:
            t = np.arange(n) * dt
            for amp, freq in self.source_tones:
                out += amp * 1e-6 * np.sin(2 * math.pi * freq * t)
        return out

    def readout_fraction(self, which, n, dt):
        level = {"detector": self.detector_white_ppm, "monitor": self.monitor_white_ppm}[which]
        return white_noise(n, level * 1e-6, dt, substream(self.seed, "readout/" + which))

    def dc_fraction(self, which, n, dt, supply_temperature):
        spec = {"endcap": self.endcap, "rod": self.rod}[which]
        out = white_noise(n, spec.white_ppm * 1e-6, dt, substream(self.seed, which + "/white"))
        out += ou_process(n, spec.wander_ppm * 1e-6, spec.wander_time, dt, substream(self.seed, which + "/wander"))
        out += random_walk(n, spec.random_walk_ppm * 1e-6, dt, substream(self.seed, which + "/walk"))
        if spec.tempco_ppm_per_c:
            temp = np.asarray(supply_temperature, dtype=float)
            out += spec.tempco_ppm_per_c * 1e-6 * (temp - temp[0])
        return out
