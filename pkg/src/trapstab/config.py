"""Scenario files: TOML text mapped strictly onto dataclasses.

Unknown keys and missing mandatory fields are reported together, each with
its dotted field path.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ScenarioValidationError

KINDS = ("transverse", "axial", "zz_mode", "temperature_ramp", "decoherence")


@dataclass
class TrapSection:
    species: str = "171Yb+"
    rf_frequency_hz: float = 16.9e6
    rf_amplitude_v: float = 500.0
    radial_frequency_hz: float = 0.85e6
    axial_frequency_hz: float = 0.325e6
    endcap_voltage_v: float = 78.0
    half_endcap_distance_m: float = 1.25e-3
    c22: float = 0.889
    c20: float = 0.0106
    rod_dc_v: float = 0.0


@dataclass
class ChainSection:
    n_ions: int = 1
    target_zz_frequency_hz: typing.Optional[float] = None
    zz_frequencies_hz: list = field(default_factory=list)


@dataclass
class LoopSection:
    locked: bool = True
    lock_start_s: float = 0.0
    sample_period_s: float = 1e-3
    record_every: int = 1
    proportional_gain: float = 0.05
    integrator_gain: float = 30.0
    nominal_actuation_v: float = 0.5
    actuator_min_v: float = 0.0
    actuator_max_v: float = 1.0
    setpoint_bits: int = 20
    setpoint_span_v: float = 5.0
    setpoint_stability_ppm: float = 0.25
    setpoint_drift_period_s: float = 3600.0
    divider_fraction: float = 0.02
    chain_ratio: float = 0.004
    detector_tempco_ppm_per_c: float = 1400.0
    divider_tempco_ppm_per_c: float = 16.8
    reference_temperature_c: float = 22.0
    loaded_q: float = 180.0
    resonator_step_gain: float = 50.0
    resonator_gain_tempco_ppm_per_c: float = 0.0


@dataclass
class TemperatureSection:
    base_c: float = 22.0
    wander_rms_c: float = 0.0
    wander_time_s: float = 600.0
    ramp: list = field(default_factory=list)


@dataclass
class DCNoiseSection:
    white_ppm: float = 0.0
    wander_ppm: float = 0.0
    wander_time_s: float = 600.0
    random_walk_ppm: float = 0.0
    tempco_ppm_per_c: float = 0.0


@dataclass
class NoiseSection:
    source_white_ppm: float = 0.0
    source_random_walk_ppm: float = 0.0
    source_wander_ppm: float = 0.0
    source_wander_time_s: float = 600.0
    detector_white_ppm: float = 0.0
    monitor_white_ppm: float = 0.0
    supply: TemperatureSection = field(default_factory=TemperatureSection)
    resonator: TemperatureSection = field(default_factory=TemperatureSection)
    detector: TemperatureSection = field(default_factory=TemperatureSection)
    endcap: DCNoiseSection = field(default_factory=DCNoiseSection)
    rod: DCNoiseSection = field(default_factory=DCNoiseSection)


@dataclass
class MeasurementSection:
    delay_s: float = 1e-3
    contrast: float = 0.5
    offset: float = 0.5
    phase_offset_rad: float = 0.0
    shots_per_point: int = 100
    detection_error: float = 0.0
    cadence_s: float = 1.0
    axial_delay_s: float = 10e-3
    axial_cadence_s: float = 2.0
    fringe_points: int = 48
    fringe_periods: int = 3
    decay_points: int = 8
    decay_delay_factors: list = field(default_factory=lambda: [0.2, 0.5, 1.0])


@dataclass
class AnalysisSection:
    taus_s: typing.Optional[list] = None
    per_decade: int = 10
    report_taus_s: list = field(default_factory=lambda: [100.0, 200.0])


@dataclass
class Check:
    metric: str
    op: str
    value: float


@dataclass
class Scenario:
    name: str
    kind: str
    seed: int
    duration_s: float
    description: str = ""
    trap: TrapSection = field(default_factory=TrapSection)
    chain: ChainSection = field(default_factory=ChainSection)
    loop: LoopSection = field(default_factory=LoopSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    acceptance: list = field(default_factory=list)

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_LIST_ITEM_TYPES = {("Scenario", "acceptance"): Check}


def _check_scalar(value, hint, path, problems):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_scalar(value, args[0], path, problems)
    if hint is bool:
        if not isinstance(value, bool):
            problems.append((path, f"expected true/false, got {value!r}"))
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append((path, f"expected an integer, got {value!r}"))
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            problems.append((path, f"expected a finite number, got {value!r}"))
            return value
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            problems.append((path, f"expected a string, got {value!r}"))
        return value
    if hint is list or origin is list:
        if not isinstance(value, list):
            problems.append((path, f"expected a list, got {value!r}"))
        return value
    return value


def _build(cls, data, path, problems):
    if not isinstance(data, dict):
        problems.append((path or "<root>", f"expected a table, got {type(data).__name__}"))
        return None
    before = len(problems)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append((f"{path}.{key}" if path else key, "unknown key"))
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                problems.append((sub, "missing mandatory field"))
            continue
        value = data[f.name]
        hint = hints[f.name]
        item_cls = _LIST_ITEM_TYPES.get((cls.__name__, f.name))
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _build(hint, value, sub, problems)
        elif item_cls is not None:
            if not isinstance(value, list):
                problems.append((sub, "expected an array of tables"))
                continue
            kwargs[f.name] = [_build(item_cls, v, f"{sub}[{i}]", problems) for i, v in enumerate(value)]
        else:
            kwargs[f.name] = _check_scalar(value, hint, sub, problems)
    if len(problems) > before:
        return None
    return cls(**kwargs)


def _semantic_checks(s: Scenario, problems):
    if s.kind not in KINDS:
        problems.append(("kind", f"must be one of {', '.join(KINDS)}"))
    if not s.duration_s > 0:
        problems.append(("duration_s", "must be positive"))
    lp = s.loop
    if not lp.sample_period_s > 0:
        problems.append(("loop.sample_period_s", "must be positive"))
    elif s.kind != "decoherence":
        n = s.duration_s / lp.sample_period_s
        if abs(n - round(n)) > 1e-6 * max(n, 1):
            problems.append(("loop.sample_period_s", "must divide duration_s"))
    if lp.record_every < 1:
        problems.append(("loop.record_every", "must be >= 1"))
    if not lp.actuator_min_v < lp.actuator_max_v:
        problems.append(("loop.actuator_max_v", "must exceed actuator_min_v"))
    if not 0 < lp.divider_fraction < 1:
        problems.append(("loop.divider_fraction", "must lie in (0, 1)"))
    if not lp.chain_ratio > 0:
        problems.append(("loop.chain_ratio", "must be positive"))
    if not lp.loaded_q > 0:
        problems.append(("loop.loaded_q", "must be positive"))
    m = s.measurement
    if not 0 <= m.contrast <= 0.5:
        problems.append(("measurement.contrast", "must lie in [0, 0.5]"))
    if m.fringe_periods < 1 or m.fringe_points < 8:
        problems.append(("measurement.fringe_points", "need at least 8 points over at least one period"))
    if m.shots_per_point < 1:
        problems.append(("measurement.shots_per_point", "must be >= 1"))
    for name in ("delay_s", "cadence_s", "axial_delay_s", "axial_cadence_s"):
        if not getattr(m, name) > 0:
            problems.append((f"measurement.{name}", "must be positive"))
    if s.chain.n_ions < 1:
        problems.append(("chain.n_ions", "must be >= 1"))
    if s.kind == "zz_mode":
        if s.chain.n_ions < 2:
            problems.append(("chain.n_ions", "zigzag scenarios need at least two ions"))
        if s.chain.target_zz_frequency_hz is None:
            problems.append(("chain.target_zz_frequency_hz", "required for kind zz_mode"))
    if s.kind == "decoherence" and not s.chain.zz_frequencies_hz:
        problems.append(("chain.zz_frequencies_hz", "required for kind decoherence"))
    if s.trap.species not in ("171Yb+",):
        problems.append(("trap.species", f"unknown species {s.trap.species!r}"))
    for i, chk in enumerate(s.acceptance):
        if chk is not None and chk.op not in ("<", "<=", ">", ">=", "=="):
            problems.append((f"acceptance[{i}].op", f"unsupported operator {chk.op!r}"))
    for name in ("supply", "resonator", "detector"):
        ramp = getattr(s.noise, name).ramp
        if any(not isinstance(k, list) or len(k) != 2 for k in ramp):
            problems.append((f"noise.{name}.ramp", "knots must be [t_s, offset_C] pairs"))


def scenario_from_dict(data) -> Scenario:
    problems = []
    s = _build(Scenario, data, "", problems)
    if s is not None and not problems:
        _semantic_checks(s, problems)
    if problems:
        raise ScenarioValidationError(problems)
    return s


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        shipped = shipped_scenario_path(str(path))
        if shipped is None:
            raise ScenarioValidationError([(str(path), "file not found")])
        path = shipped
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioValidationError([(str(path), f"parse error: {exc}")]) from exc
    return scenario_from_dict(data)


def list_scenarios():
    root = resources.files("trapstab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def shipped_scenario_path(name):
    name = name[:-5] if name.endswith(".toml") else name
    candidate = resources.files("trapstab") / "scenarios" / f"{name}.toml"
    return Path(str(candidate)) if candidate.is_file() else None
