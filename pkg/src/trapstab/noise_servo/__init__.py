from .components import (ComponentChain, ResonatorModel, ServoConfig, ServoState,
                         detector_chain_output, quantize_setpoint, resonator_step,
                         servo_step, setpoint_drift, with_bandwidth)
from .loop import (ENDCAP_MONITOR_RATIO, TRACE_COLUMNS, DCTrace, LoopTrace, axial_frequency_series,
                   initial_setpoint, plant_gain, simulate_dc_supply, simulate_loop)
from .processes import (DCSupplyNoise, NoiseSuite, TemperatureProfile, ou_process, random_walk,
                        substream, white_noise)

__all__ = [
    "ComponentChain", "ResonatorModel", "ServoConfig", "ServoState", "detector_chain_output",
    "quantize_setpoint", "resonator_step", "servo_step", "setpoint_drift", "with_bandwidth",
    "ENDCAP_MONITOR_RATIO", "TRACE_COLUMNS", "DCTrace", "LoopTrace", "axial_frequency_series",
    "initial_setpoint", "plant_gain", "simulate_dc_supply", "simulate_loop",
    "DCSupplyNoise", "NoiseSuite", "TemperatureProfile", "ou_process", "random_walk",
    "substream", "white_noise",
]
