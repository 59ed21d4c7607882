"""Envelope-level simulation of the locked RF drive and of the end-cap supply.

Signal path per sample: generator amplitude (with source noise) x mixer
actuation -> amplifier -> resonator envelope -> V0 at the rods. V0 is sampled
by the in-loop divider/rectifier chain (read by the PI servo) and by an
independent monitor chain. The servo output drives the mixer IF port on the
next sample.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from ..errors import InvalidParameterError
from ..trap_core import TWO_PI, TrapConfig, axial_secular_frequency, radial_secular_frequency
from .components import (ComponentChain, ResonatorModel, ServoConfig, ServoState,
                         quantize_setpoint, resonator_step, servo_step, setpoint_drift)
from .processes import NoiseSuite, TemperatureProfile

TRACE_COLUMNS = ("t_s", "v0_V", "omega_r_hz", "v_lock_V", "v_monitor_V",
                 "T_supply_C", "T_resonator_C", "locked")
LOCK_FAILURE_FRACTION = 0.01
#: 100 kOhm / (10 MOhm + 100 kOhm) resistive divider on the end-cap line.
ENDCAP_MONITOR_RATIO = 100e3 / (10e6 + 100e3)


@dataclass
class LoopTrace:
    time: np.ndarray
    v0: np.ndarray
    omega_r: np.ndarray
    v_lock: np.ndarray
    v_monitor: np.ndarray
    actuation: np.ndarray
    temperatures: dict
    lock_engaged: np.ndarray
    saturated: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.time)
        series = [self.v0, self.omega_r, self.v_lock, self.v_monitor, self.actuation,
                  self.lock_engaged, self.saturated, *self.temperatures.values()]
        if any(len(s) != n for s in series):
            raise InvalidParameterError("trace series must have equal length")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in zip(self.time, self.v0, self.omega_r / TWO_PI, self.v_lock, self.v_monitor,
                           self.temperatures["supply"], self.temperatures["resonator"], self.lock_engaged):
                w.writerow([repr(float(x)) for x in row[:-1]] + [int(row[-1])])


@dataclass
class DCTrace:
    time: np.ndarray
    voltage: np.ndarray
    v_monitor: np.ndarray
    temperature: np.ndarray

    def to_csv(self, path, omega=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "u_V", "v_monitor_V", "T_supply_C"] + (["omega_hz"] if omega is not None else []))
            cols = [self.time, self.voltage, self.v_monitor, self.temperature]
            if omega is not None:
                cols.append(np.asarray(omega) / TWO_PI)
            for row in zip(*cols):
                w.writerow([repr(float(x)) for x in row])


@njit(cache=True)
def _loop_kernel(n, dt, record_every, locked, lock_start,
                 source, t_res, t_det, det_noise, mon_noise,
                 amp_per_volt, res_c, res_gain, res_tc, res_tref,
                 cr, det_tc, div_tc, chain_tref,
                 mcr, mdet_tc, mdiv_tc, mchain_tref,
                 kp, ki, u_lo, u_hi, u_nom, sp0, sp_amp, sp_period):
    m = (n + record_every - 1) // record_every
    out_v0 = np.empty(m)
    out_lock = np.empty(m)
    out_mon = np.empty(m)
    out_u = np.empty(m)
    out_eng = np.zeros(m, dtype=np.bool_)
    out_sat = np.zeros(m, dtype=np.bool_)
    n_sat = 0
    u = u_nom
    integ = 0.0
    engaged_prev = False
    tr0 = t_res[0]
    v0 = res_gain * (1.0 + res_tc * (tr0 - res_tref)) * amp_per_volt * (1.0 + source[0]) * u_nom
    j = 0
    for k in range(n):
        t = k * dt
        tr = t_res[k] if t_res.shape[0] > 1 else t_res[0]
        td = t_det[k] if t_det.shape[0] > 1 else t_det[0]
        dn = det_noise[k] if det_noise.shape[0] > 1 else det_noise[0]
        mn = mon_noise[k] if mon_noise.shape[0] > 1 else mon_noise[0]
        drive = amp_per_volt * (1.0 + source[k]) * u
        gain = res_gain * (1.0 + res_tc * (tr - res_tref))
        v0 = v0 + res_c * (gain * drive - v0)
        v_lock = v0 * cr * (1.0 + det_tc * (td - chain_tref)) * (1.0 + div_tc * (tr - chain_tref)) * (1.0 + dn)
        v_mon = v0 * mcr * (1.0 + mdet_tc * (td - mchain_tref)) * (1.0 + mdiv_tc * (tr - mchain_tref)) * (1.0 + mn)
        engaged = locked and t >= lock_start
        sat = False
        if engaged:
            if not engaged_prev:
                integ = u
            err = sp0 + sp_amp * math.sin(2.0 * math.pi * t / sp_period) - v_lock
            new_integ = integ + ki * err * dt
            u = kp * err + new_integ
            if u > u_hi:
                u = u_hi
                sat = True
                if err > 0:
                    new_integ = integ
            elif u < u_lo:
                u = u_lo
                sat = True
                if err < 0:
                    new_integ = integ
            integ = new_integ
        else:
            u = u_nom
        if sat:
            n_sat += 1
        engaged_prev = engaged
        if k % record_every == 0:
            out_v0[j] = v0
            out_lock[j] = v_lock
            out_mon[j] = v_mon
            out_u[j] = u
            out_eng[j] = engaged
            out_sat[j] = sat
            j += 1
    return out_v0, out_lock, out_mon, out_u, out_eng, out_sat, n_sat


def _n_samples(duration, dt):
    if not duration > 0:
        raise InvalidParameterError("duration must be positive")
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(duration, dt):
        raise InvalidParameterError(f"sample period {dt} s does not divide duration {duration} s")
    return n


def _static(profile: TemperatureProfile):
    return not profile.wander_rms and not profile.ramp


def _temperature_input(noise: NoiseSuite, name, t):
    profile = noise.temperatures.get(name, TemperatureProfile())
    if _static(profile):
        return np.array([profile.base])
    return noise.temperature(name, t)


def initial_setpoint(v0_nominal, chain: ComponentChain, servo: ServoConfig, detector_T, divider_T):
    """Setpoint (quantised) that holds the nominal V0 at the starting temperatures."""
    if servo.setpoint is not None:
        return quantize_setpoint(servo.setpoint, servo)
    return quantize_setpoint(v0_nominal * chain.gain(detector_T, divider_T), servo)


def simulate_loop(trap: TrapConfig, chain: ComponentChain, resonator: ResonatorModel,
                  servo: ServoConfig, noise: NoiseSuite, duration, locked=True, lock_start=0.0,
                  monitor_chain: ComponentChain | None = None, record_every=1,
                  engine="numba") -> LoopTrace:
    """Run the RF amplitude loop for ``duration`` seconds at ``servo.sample_period``.

    ``locked=False`` keeps the mixer at its nominal actuation; with
    ``locked=True`` the servo engages at ``lock_start``. Every
    ``record_every``-th sample is kept in the returned trace.
    """
    dt = servo.sample_period
    n = _n_samples(duration, dt)
    monitor_chain = chain if monitor_chain is None else monitor_chain
    t = np.arange(n) * dt
    t_res = _temperature_input(noise, "resonator", t)
    t_det = _temperature_input(noise, "detector", t)
    t_sup = _temperature_input(noise, "supply", t)
    source = noise.source_fraction(n, dt)
    det_noise = noise.readout_fraction("detector", n, dt) if noise.detector_white_ppm else np.zeros(1)
    mon_noise = noise.readout_fraction("monitor", n, dt) if noise.monitor_white_ppm else np.zeros(1)

    v0_nom = float(trap.drive.rf_amplitude)
    # drive calibrated so nominal actuation gives nominal V0 at the starting temperature
    amp_per_volt = v0_nom / (resonator.dc_gain(t_res[0]) * servo.nominal_actuation)
    sp0 = initial_setpoint(v0_nom, chain, servo, t_det[0], t_res[0])
    sp_amp = 0.5 * servo.setpoint_stability_ppm * 1e-6 * servo.setpoint_span
    res_c = -math.expm1(-dt * resonator.envelope_bandwidth)
    lo, hi = servo.actuator_limits

    if engine == "numba":
        v0, v_lock, v_mon, u, eng, sat, n_sat = _loop_kernel(
            n, dt, int(record_every), bool(locked), float(lock_start),
            source, t_res, t_det, det_noise, mon_noise,
            amp_per_volt, res_c, resonator.step_gain, resonator.gain_tempco, resonator.reference_temperature,
            chain.chain_ratio, chain.detector_tempco, chain.divider_tempco, chain.reference_temperature,
            monitor_chain.chain_ratio, monitor_chain.detector_tempco, monitor_chain.divider_tempco,
            monitor_chain.reference_temperature,
            servo.proportional_gain, servo.integrator_gain, lo, hi, servo.nominal_actuation,
            sp0, sp_amp, servo.setpoint_drift_period)
    elif engine == "python":
        v0, v_lock, v_mon, u, eng, sat, n_sat = _reference_loop(
            n, dt, int(record_every), locked, lock_start, source, t_res, t_det, det_noise, mon_noise,
            amp_per_volt, resonator, chain, monitor_chain, servo, sp0)
    else:
        raise InvalidParameterError(f"unknown engine {engine!r}")

    idx = np.arange(0, n, int(record_every))
    temps = {name: (arr[idx] if len(arr) > 1 else np.full(len(idx), arr[0]))
             for name, arr in (("supply", t_sup), ("resonator", t_res), ("detector", t_det))}
    omega_r = radial_secular_frequency(replace(trap.drive, rf_amplitude=v0), trap.geometry, trap.ion)
    metadata = {"sample_period": dt, "record_every": int(record_every), "setpoint": sp0,
                "saturated_fraction": n_sat / n, "warnings": []}
    if n_sat > LOCK_FAILURE_FRACTION * n:
        msg = f"actuator saturated on {100 * n_sat / n:.1f}% of samples; lock failed"
        metadata["warnings"].append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return LoopTrace(time=t[idx], v0=v0, omega_r=np.asarray(omega_r), v_lock=v_lock, v_monitor=v_mon,
                     actuation=u, temperatures=temps, lock_engaged=eng, saturated=sat, metadata=metadata)


def _reference_loop(n, dt, record_every, locked, lock_start, source, t_res, t_det, det_noise, mon_noise,
                    amp_per_volt, resonator, chain, monitor_chain, servo, sp0):
    """Slow scalar implementation built from the public component steps."""
    pick = (lambda a, k: a[k] if len(a) > 1 else a[0])
    rec = {key: [] for key in ("v0", "lock", "mon", "u", "eng", "sat")}
    u = servo.nominal_actuation
    state = ServoState()
    engaged_prev = False
    n_sat = 0
    v0 = resonator.dc_gain(t_res[0]) * amp_per_volt * (1.0 + source[0]) * u
    quantised = sp0 - setpoint_drift(0.0, servo)
    for k in range(n):
        t = k * dt
        tr, td = pick(t_res, k), pick(t_det, k)
        v0 = resonator_step(v0, amp_per_volt * (1.0 + source[k]) * u, dt, resonator, tr)
        v_lock = v0 * chain.gain(td, tr) * (1.0 + pick(det_noise, k))
        v_mon = v0 * monitor_chain.gain(td, tr) * (1.0 + pick(mon_noise, k))
        engaged = bool(locked) and t >= lock_start
        sat = False
        if engaged:
            if not engaged_prev:
                state = ServoState(integrator=u)
            u, state = servo_step(state, quantised + setpoint_drift(t, servo) - v_lock, servo)
            sat = state.saturated
        else:
            u = servo.nominal_actuation
        n_sat += sat
        engaged_prev = engaged
        if k % record_every == 0:
            for key, val in zip(rec, (v0, v_lock, v_mon, u, engaged, sat)):
                rec[key].append(val)
    return (np.array(rec["v0"]), np.array(rec["lock"]), np.array(rec["mon"]), np.array(rec["u"]),
            np.array(rec["eng"], dtype=bool), np.array(rec["sat"], dtype=bool), n_sat)


def simulate_dc_supply(nominal_voltage, which, noise: NoiseSuite, duration, sample_period,
                       monitor_ratio=ENDCAP_MONITOR_RATIO) -> DCTrace:
    """Unlocked DC electrode voltage with its resistive-divider monitor."""
    n = _n_samples(duration, sample_period)
    t = np.arange(n) * sample_period
    temp = noise.temperature("supply", t)
    frac = noise.dc_fraction(which, n, sample_period, temp)
    voltage = nominal_voltage * (1.0 + frac)
    return DCTrace(time=t, voltage=voltage, v_monitor=voltage * monitor_ratio, temperature=temp)


def axial_frequency_series(trap: TrapConfig, endcap_voltage):
    return axial_secular_frequency(replace(trap.drive, endcap_dc=np.asarray(endcap_voltage)),
                                   trap.geometry, trap.ion)


def plant_gain(trap: TrapConfig, chain: ComponentChain, servo: ServoConfig):
    """d(v_lock)/d(actuation) at the operating point, in V/V."""
    return float(trap.drive.rf_amplitude) * chain.chain_ratio / servo.nominal_actuation
