"""Turn a validated scenario into simulation runs and an output bundle.

A bundle is a directory holding the CSV outputs, ``summary.txt`` and
``manifest.json`` (config hash, seed, package versions, output hashes,
metrics and acceptance checks). Nothing time-dependent is written, so a
re-run with the same scenario reproduces the bundle byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import operator
import platform
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, scenario_from_dict
from .errors import InsufficientDataError
from .experiments import (block_means, decoherence_sweep, temperature_coupling, transverse_y_series,
                          zigzag_operating_point, zigzag_series)
from .noise_servo import (ComponentChain, DCSupplyNoise, NoiseSuite, ResonatorModel, ServoConfig,
                          TemperatureProfile, axial_frequency_series, simulate_dc_supply, simulate_loop)
from .spectroscopy import RamseyConfig, fit_fringe, scan_detunings, scan_fringe, track_frequency
from .stability import allan_deviation, classify_noise_slope, default_taus, drift_rate, fill_gaps
from .trap_core import SPECIES, TWO_PI, calibrated_trap

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


def derived_seed(seed, name):
    """Integer seed of a named sub-experiment."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# building model objects from sections

def build_trap(s: Scenario):
    t = s.trap
    return calibrated_trap(radial_hz=t.radial_frequency_hz, axial_hz=t.axial_frequency_hz,
                           rf_hz=t.rf_frequency_hz, rf_amplitude=t.rf_amplitude_v,
                           endcap_dc=t.endcap_voltage_v, rod_dc=t.rod_dc_v, ion=SPECIES[t.species],
                           half_endcap_distance=t.half_endcap_distance_m, c22=t.c22, c20=t.c20)


def build_chain(s: Scenario):
    lp = s.loop
    return ComponentChain(divider_fraction=lp.divider_fraction, chain_ratio=lp.chain_ratio,
                          detector_tempco=lp.detector_tempco_ppm_per_c * 1e-6,
                          divider_tempco=lp.divider_tempco_ppm_per_c * 1e-6,
                          reference_temperature=lp.reference_temperature_c)


def build_resonator(s: Scenario):
    lp = s.loop
    return ResonatorModel(loaded_q=lp.loaded_q, center_frequency=TWO_PI * s.trap.rf_frequency_hz,
                          step_gain=lp.resonator_step_gain,
                          gain_tempco=lp.resonator_gain_tempco_ppm_per_c * 1e-6,
                          reference_temperature=lp.reference_temperature_c)


def build_servo(s: Scenario):
    lp = s.loop
    return ServoConfig(proportional_gain=lp.proportional_gain, integrator_gain=lp.integrator_gain,
                       setpoint_resolution_bits=lp.setpoint_bits, setpoint_span=lp.setpoint_span_v,
                       setpoint_stability_ppm=lp.setpoint_stability_ppm,
                       setpoint_drift_period=lp.setpoint_drift_period_s,
                       actuator_limits=(lp.actuator_min_v, lp.actuator_max_v),
                       nominal_actuation=lp.nominal_actuation_v, sample_period=lp.sample_period_s)


def _profile(sec):
    return TemperatureProfile(base=sec.base_c, wander_rms=sec.wander_rms_c, wander_time=sec.wander_time_s,
                              ramp=tuple(tuple(float(v) for v in k) for k in sec.ramp))


def _dc(sec):
    return DCSupplyNoise(white_ppm=sec.white_ppm, wander_ppm=sec.wander_ppm, wander_time=sec.wander_time_s,
                         random_walk_ppm=sec.random_walk_ppm, tempco_ppm_per_c=sec.tempco_ppm_per_c)


def build_noise(s: Scenario):
    n = s.noise
    return NoiseSuite(source_white_ppm=n.source_white_ppm, source_random_walk_ppm=n.source_random_walk_ppm,
                      source_wander_ppm=n.source_wander_ppm, source_wander_time=n.source_wander_time_s,
                      detector_white_ppm=n.detector_white_ppm, monitor_white_ppm=n.monitor_white_ppm,
                      temperatures={k: _profile(getattr(n, k)) for k in ("supply", "resonator", "detector")},
                      endcap=_dc(n.endcap), rod=_dc(n.rod), seed=s.seed)


def build_protocol(s: Scenario, axial=False):
    m = s.measurement
    return RamseyConfig(delay=m.axial_delay_s if axial else m.delay_s, contrast=m.contrast,
                        phase_offset=m.phase_offset_rad, offset=m.offset, shots_per_point=m.shots_per_point,
                        detection_error=m.detection_error)


# ---------------------------------------------------------------------------
# bundle

@dataclass
class Bundle:
    scenario: Scenario
    out_dir: Path
    metrics: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    complete: bool = False

    def path(self, name):
        return self.out_dir / name

    def add_output(self, name):
        self.outputs[name] = hashlib.sha256(self.path(name).read_bytes()).hexdigest()

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)


def _versions():
    import numba
    import scipy
    import sklearn
    return {"trapstab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "numba": numba.__version__}


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_manifest(b: Bundle):
    s = b.scenario
    manifest = {"name": s.name, "kind": s.kind, "seed": s.seed, "config_hash": s.config_hash(),
                "config": s.to_dict(), "versions": _versions(), "complete": b.complete,
                "outputs": dict(sorted(b.outputs.items())), "metrics": b.metrics, "checks": b.checks,
                "warnings": b.warnings}
    b.path("manifest.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")


def evaluate_checks(s: Scenario, metrics):
    out = []
    for chk in s.acceptance:
        value = metrics.get(chk.metric)
        passed = value is not None and bool(_OPS[chk.op](value, chk.value))
        out.append({"metric": chk.metric, "op": chk.op, "threshold": chk.value,
                    "value": value, "passed": passed})
    return out


# ---------------------------------------------------------------------------
# shared analysis steps

def _adev_block(b: Bundle, label, series_hz, period, report_taus, nominal_hz=None):
    a = b.scenario.analysis
    n = len(series_hz)
    taus = a.taus_s if a.taus_s else default_taus(n, period, a.per_decade)
    rep = allan_deviation(series_hz, period, taus=taus)
    try:
        classify_noise_slope(rep)
    except InsufficientDataError:
        rep.slopes = []
    rep.drift = drift_rate(series_hz, period)
    name = f"adev_{label}.csv"
    rep.to_csv(b.path(name))
    b.add_output(name)
    ref = nominal_hz if nominal_hz is not None else rep.mean
    for tau in report_taus:
        if tau <= rep.taus[-1] * (1 + 1e-9):
            key = f"{label}_adev_hz_at_{tau:g}s"
            val = rep.at(tau)
            b.metrics[key] = val
            b.metrics[f"{label}_adev_ppm_at_{tau:g}s"] = val / abs(ref) * 1e6
            b.summary.append(f"{label}: Allan deviation {val:.3g} Hz, i.e., {val / abs(ref) * 1e6:.2f} ppm "
                             f"at tau = {rep.taus[np.argmin(np.abs(np.log(rep.taus / tau)))]:g} s")
    b.metrics[f"{label}_drift_hz_per_s"] = rep.drift.rate
    return rep


def _track(b: Bundle, label, times, omega, protocol, cadence):
    tr = track_frequency(times, omega, protocol, cadence, seed=derived_seed(b.scenario.seed, "track/" + label))
    name = f"tracker_{label}.csv"
    tr.to_csv(b.path(name))
    b.add_output(name)
    frac = float(np.mean(tr.in_range))
    b.metrics[f"{label}_in_range_fraction"] = frac
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = fill_gaps(tr.estimate, tr.in_range)
    b.warnings.extend(f"{label}: {w.message}" for w in caught)
    return tr, est / TWO_PI


def _fringe(b: Bundle, label, protocol):
    m = b.scenario.measurement
    data = scan_fringe(scan_detunings(protocol.delay, m.fringe_points, periods=m.fringe_periods), protocol,
                       seed=derived_seed(b.scenario.seed, "fringe/" + label))
    fit = fit_fringe(data, phase=protocol.phase_offset, fit_period=True)
    name = f"fringe_{label}.csv"
    data.to_csv(b.path(name))
    b.add_output(name)
    b.metrics[f"{label}_fringe_period_hz"] = fit.period_hz
    b.metrics[f"{label}_fringe_contrast"] = fit.contrast


def _loop(b: Bundle, trap, locked=None):
    s = b.scenario
    lp = s.loop
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tr = simulate_loop(trap, build_chain(s), build_resonator(s), build_servo(s), build_noise(s),
                           s.duration_s, locked=lp.locked if locked is None else locked,
                           lock_start=lp.lock_start_s, record_every=lp.record_every)
    b.warnings.extend(str(w.message) for w in caught)
    tr.to_csv(b.path("loop_trace.csv"))
    b.add_output("loop_trace.csv")
    b.metrics["saturated_fraction"] = tr.metadata["saturated_fraction"]
    return tr


# ---------------------------------------------------------------------------
# scenario kinds

def _run_transverse(b: Bundle):
    s = b.scenario
    trap = build_trap(s)
    tr = _loop(b, trap)
    proto = build_protocol(s)
    _fringe(b, "transverse", proto)
    wr0 = trap.with_drive(rod_dc=0.0).secular_frequencies().omega_x
    frac = tr.omega_r / wr0 - 1.0
    b.metrics["omega_r_pp_ppm"] = float(np.ptp(frac)) * 1e6
    _, est_hz = _track(b, "transverse", tr.time, tr.omega_r, proto, s.measurement.cadence_s)
    _adev_block(b, "transverse", est_hz, s.measurement.cadence_s, s.analysis.report_taus_s, wr0 / TWO_PI)


def _run_axial(b: Bundle):
    s = b.scenario
    trap = build_trap(s)
    period = s.loop.sample_period_s * s.loop.record_every
    dc = simulate_dc_supply(s.trap.endcap_voltage_v, "endcap", build_noise(s), s.duration_s, period)
    wz = axial_frequency_series(trap, dc.voltage)
    dc.to_csv(b.path("endcap_trace.csv"), omega=wz)
    b.add_output("endcap_trace.csv")
    proto = build_protocol(s, axial=True)
    _fringe(b, "axial", proto)
    wz0 = trap.secular_frequencies().omega_z
    _, est_hz = _track(b, "axial", dc.time, wz, proto, s.measurement.axial_cadence_s)
    _adev_block(b, "axial", est_hz, s.measurement.axial_cadence_s, s.analysis.report_taus_s, wz0 / TWO_PI)


def _run_zz(b: Bundle):
    s = b.scenario
    m = s.measurement
    base = build_trap(s)
    op = zigzag_operating_point(base, s.chain.n_ions, TWO_PI * s.chain.target_zz_frequency_hz)
    trap = base.with_drive(rod_dc=op.rod_dc)
    b.metrics.update(rod_dc_v=op.rod_dc, alpha_c=op.alpha_c, amplification=op.amplification,
                     omega_y_hz=op.omega_y / TWO_PI)
    tr = _loop(b, trap)
    noise = build_noise(s)
    period = s.loop.sample_period_s * s.loop.record_every
    endcap = simulate_dc_supply(s.trap.endcap_voltage_v, "endcap", noise, s.duration_s, period)
    rod = simulate_dc_supply(op.rod_dc, "rod", noise, s.duration_s, period)
    wz = axial_frequency_series(trap, endcap.voltage)
    wy = transverse_y_series(trap, tr.omega_r, rod.voltage)
    wzz = zigzag_series(wy, wz, op.alpha_c)
    with open(b.path("modes_trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "omega_y_hz", "omega_z_hz", "omega_zz_hz", "u_endcap_V", "u_rod_V"])
        for row in zip(tr.time, wy / TWO_PI, wz / TWO_PI, wzz / TWO_PI, endcap.voltage, rod.voltage):
            w.writerow([repr(float(x)) for x in row])
    b.add_output("modes_trace.csv")
    proto, proto_z = build_protocol(s), build_protocol(s, axial=True)
    _fringe(b, "zz", proto)
    reps = {}
    for label, omega, p, cad, nominal in (("zz", wzz, proto, m.cadence_s, op.omega_zz),
                                          ("com_y", wy, proto, m.cadence_s, op.omega_y),
                                          ("com_z", wz, proto_z, m.axial_cadence_s, op.omega_z)):
        _, est_hz = _track(b, label, tr.time, omega, p, cad)
        reps[label] = _adev_block(b, label, est_hz, cad, s.analysis.report_taus_s, nominal / TWO_PI)
        if label == "zz":
            means = block_means(est_hz, cad, 100.0)
            b.metrics["zz_drift_pp_hz"] = float(np.ptp(means))
            b.metrics["zz_drift_linear_hz"] = abs(reps[label].drift.rate) * s.duration_s
    for tau in s.analysis.report_taus_s:
        key = f"_adev_hz_at_{tau:g}s"
        if all(lab + key in b.metrics for lab in reps):
            b.metrics[f"zz_over_com_at_{tau:g}s"] = b.metrics["zz" + key] / max(b.metrics["com_y" + key],
                                                                                  b.metrics["com_z" + key])


def _run_temperature_ramp(b: Bundle):
    s = b.scenario
    trap = build_trap(s)
    tr = _loop(b, trap)
    wr0 = trap.with_drive(rod_dc=0.0).secular_frequencies().omega_x
    temps = {k: tr.temperatures[k] for k in ("resonator", "detector")}
    cp = temperature_coupling(tr.omega_r, temps, nominal=wr0)
    for name, coef in cp.coefficients_ppm_per_c.items():
        b.metrics[f"{name}_ppm_per_c"] = coef
        b.summary.append(f"{name} temperature coupling of the locked trap frequency: {coef:.1f} ppm/C")
    if "resonator" in cp.coefficients_ppm_per_c:
        k = abs(cp.coefficients_ppm_per_c["resonator"])
        b.metrics["resonator_shift_ppm_at_0.3c"] = 0.3 * k
        b.metrics["resonator_stability_c_for_5ppm"] = 5.0 / k if k else math.inf
        b.summary.append(f"resonator temperature stability needed for 5 ppm: {5.0 / k:.2f} C")


def _run_decoherence(b: Bundle):
    s = b.scenario
    m = s.measurement
    trap = build_trap(s)
    proto = build_protocol(s)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pts = decoherence_sweep(trap, build_chain(s), build_resonator(s), build_servo(s), build_noise(s),
                                s.chain.n_ions, s.chain.zz_frequencies_hz, proto,
                                delay_factors=tuple(m.decay_delay_factors), n_points=m.decay_points,
                                seed=derived_seed(s.seed, "decoherence"), max_duration=s.duration_s)
    b.warnings.extend(str(w.message) for w in caught)
    with open(b.path("decoherence.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zz_frequency_hz", "amplification", "locked", "rate_per_s", "rate_stderr_per_s",
                    "upper_bound_per_s"])
        for p in pts:
            w.writerow([repr(p.zz_frequency_hz), repr(p.amplification), int(p.locked), repr(p.rate),
                        repr(p.rate_stderr), repr(p.upper_bound)])
    b.add_output("decoherence.csv")
    with open(b.path("decoherence_contrasts.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zz_frequency_hz", "locked", "delay_s", "contrast", "contrast_stderr"])
        for p in pts:
            for delay, c, err in p.contrasts:
                w.writerow([repr(p.zz_frequency_hz), int(p.locked), repr(float(delay)), repr(float(c)),
                            repr(float(err))])
    b.add_output("decoherence_contrasts.csv")
    by = {(p.zz_frequency_hz, p.locked): p for p in pts}
    margins = []
    for f in s.chain.zz_frequencies_hz:
        un, lk = by[(float(f), False)], by[(float(f), True)]
        b.metrics[f"rate_unlocked_at_{f / 1e3:g}khz"] = un.rate
        b.metrics[f"rate_locked_at_{f / 1e3:g}khz"] = lk.rate
        margins.append(un.rate - lk.rate)
        b.summary.append(f"ZZ mode at {f / 1e3:g} kHz: decoherence rate {un.rate:.3g} /s unlocked, "
                         f"{lk.rate:.3g} /s locked")
    b.metrics["locked_below_unlocked_everywhere"] = float(all(x > 0 for x in margins))
    b.metrics["min_rate_margin_per_s"] = min(margins)


_RUNNERS = {"transverse": _run_transverse, "axial": _run_axial, "zz_mode": _run_zz,
            "temperature_ramp": _run_temperature_ramp, "decoherence": _run_decoherence}


def override(s: Scenario, seed=None, duration=None) -> Scenario:
    """Copy of ``s`` with CLI overrides applied and re-validated."""
    data = s.to_dict()
    if seed is not None:
        data["seed"] = int(seed)
    if duration is not None:
        data["duration_s"] = float(duration)
    data["acceptance"] = [dict(c) for c in data["acceptance"]]
    return scenario_from_dict(data)


def run_scenario(s: Scenario, out_dir) -> Bundle:
    """Run ``s`` and write its bundle into ``out_dir``.

    Module errors propagate after a manifest marked incomplete is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b = Bundle(scenario=s, out_dir=out)
    try:
        _RUNNERS[s.kind](b)
    except Exception as exc:
        b.warnings.append(f"run aborted: {type(exc).__name__}: {exc}")
        write_manifest(b)
        raise
    b.complete = True
    b.checks = evaluate_checks(s, b.metrics)
    lines = [f"scenario {s.name} ({s.kind}), seed {s.seed}, {s.duration_s:g} s", *b.summary]
    lines += [f"{'PASS' if c['passed'] else 'FAIL'} {c['metric']} {c['op']} {c['threshold']:g} "
              f"(value {c['value']!r})" for c in b.checks]
    lines += [f"warning: {w}" for w in b.warnings]
    b.path("summary.txt").write_text("\n".join(lines) + "\n")
    b.add_output("summary.txt")
    write_manifest(b)
    return b
