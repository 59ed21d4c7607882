"""Elements of the RF amplitude lock: detector chain, resonator, PI servo, setpoint."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import InvalidParameterError, SetpointRangeError


@dataclass(frozen=True)
class ComponentChain:
    """Capacitive divider followed by an RF rectifier.

    ``chain_ratio`` is the rectified DC volts per RF volt of the whole chain
    (divider included). Tempcos are fractional gain change per degree C.
    """

    divider_fraction: float = 0.02
    chain_ratio: float = 1.0 / 250.0
    detector_tempco: float = 1400e-6
    divider_tempco: float = 16.8e-6
    reference_temperature: float = 22.0

    def __post_init__(self):
        if not 0 < self.divider_fraction < 1:
            raise InvalidParameterError("divider fraction must lie in (0, 1)")
        if not self.chain_ratio > 0:
            raise InvalidParameterError("chain ratio must be positive")

    def gain(self, detector_T, divider_T):
        return (self.chain_ratio
                * (1.0 + self.detector_tempco * (detector_T - self.reference_temperature))
                * (1.0 + self.divider_tempco * (divider_T - self.reference_temperature)))


def detector_chain_output(v_rf, detector_T, divider_T, chain: ComponentChain):
    if v_rf < 0:
        raise InvalidParameterError("RF amplitude must be >= 0")
    return v_rf * chain.gain(detector_T, divider_T)


@dataclass(frozen=True)
class ResonatorModel:
    """Envelope response of the helical resonator: one pole at Omega/(2Q).

    ``gain_tempco`` is the fractional change of the step-up gain per degree C
    of resonator temperature; it acts before the sampling point.
    """

    loaded_q: float = 180.0
    center_frequency: float = 2 * math.pi * 16.9e6
    step_gain: float = 50.0
    gain_tempco: float = 0.0
    reference_temperature: float = 22.0

    def __post_init__(self):
        if not self.loaded_q > 0:
            raise InvalidParameterError("loaded Q must be positive")

    @property
    def envelope_bandwidth(self):
        """Envelope pole in rad/s."""
        return self.center_frequency / (2.0 * self.loaded_q)

    def dc_gain(self, temperature=None):
        if temperature is None:
            return self.step_gain
        return self.step_gain * (1.0 + self.gain_tempco * (temperature - self.reference_temperature))


def resonator_step(state, input_amplitude, dt, model: ResonatorModel, temperature=None):
    """Advance the envelope by ``dt`` with the input held constant (exact ZOH)."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    c = -math.expm1(-dt * model.envelope_bandwidth)
    return state + c * (model.dc_gain(temperature) * input_amplitude - state)


@dataclass(frozen=True)
class ServoConfig:
    proportional_gain: float = 0.05
    integrator_gain: float = 30.0
    setpoint: float | None = None
    setpoint_resolution_bits: int = 20
    setpoint_span: float = 5.0
    setpoint_stability_ppm: float = 0.25
    setpoint_drift_period: float = 3600.0
    actuator_limits: tuple = (0.0, 1.0)
    nominal_actuation: float = 0.5
    sample_period: float = 1e-3

    def __post_init__(self):
        if not self.sample_period > 0:
            raise InvalidParameterError("sample period must be positive")
        if not (math.isfinite(self.proportional_gain) and math.isfinite(self.integrator_gain)):
            raise InvalidParameterError("servo gains must be finite")
        lo, hi = self.actuator_limits
        if not lo < hi:
            raise InvalidParameterError("actuator limits must satisfy min < max")
        if not lo <= self.nominal_actuation <= hi:
            raise InvalidParameterError("nominal actuation outside actuator limits")

    @property
    def setpoint_step(self):
        return self.setpoint_span / 2 ** self.setpoint_resolution_bits


@dataclass(frozen=True)
class ServoState:
    integrator: float = 0.0
    saturated: bool = False


def servo_step(state: ServoState, error, config: ServoConfig):
    """One PI update; returns ``(actuation, new_state)``.

    The integrator is frozen whenever the output is clamped and the error
    would push it further into the limit.
    """
    lo, hi = config.actuator_limits
    integ = state.integrator + config.integrator_gain * error * config.sample_period
    u = config.proportional_gain * error + integ
    saturated = False
    if u > hi:
        u, saturated = hi, True
        if error > 0:
            integ = state.integrator
    elif u < lo:
        u, saturated = lo, True
        if error < 0:
            integ = state.integrator
    return u, ServoState(integrator=integ, saturated=saturated)


def setpoint_drift(t, config: ServoConfig):
    """Slow reference drift whose peak-to-peak excursion equals the stated stability of the span."""
    amp = 0.5 * config.setpoint_stability_ppm * 1e-6 * config.setpoint_span
    return amp * math.sin(2 * math.pi * t / config.setpoint_drift_period)


def quantize_setpoint(value, config: ServoConfig, t=0.0):
    """Nearest DAC level over ``[0, span]`` plus the reference drift at time ``t``."""
    if not 0 <= value <= config.setpoint_span:
        raise SetpointRangeError(f"setpoint {value} V outside the 0..{config.setpoint_span} V span")
    step = config.setpoint_step
    level = min(round(value / step), 2 ** config.setpoint_resolution_bits - 1)
    return level * step + setpoint_drift(t, config)


def with_bandwidth(config: ServoConfig, bandwidth_hz, plant_gain, sample_period=None):
    """Integrator gain giving a unity-gain crossover near ``bandwidth_hz``."""
    dt = config.sample_period if sample_period is None else sample_period
    ki = 2 * math.pi * bandwidth_hz / plant_gain
    if ki * plant_gain * dt > 0.5:
        raise InvalidParameterError("requested bandwidth too close to the sampling rate")
    return replace(config, integrator_gain=ki, sample_period=dt)
