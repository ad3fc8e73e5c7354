"""Decentralized collaborative indoor tracking: PDR, peer drift correction, replay.

Submodules:
    geodesy  - great-circle distance, point interpolation, local planar frames
    inertial - IMU streams, step detection, heading integration, calibration
    pdr      - the local dead-reckoning engine
    radio    - simulated BLE channel: path loss, proximity, payload codec
    collab   - the accumulation-of-errors peer correction step
    replay   - deterministic tick-based execution replay and synthetic scenarios
    metrics  - Fréchet distance, error quantiles, CDFs, improvement statistics
    cli      - command-line front end (simulate / sweep / gen / metrics)
"""

from .collab import CollabConfig, DeviceState, accumulate_error, aoe_step
from .errors import CalibrationError, CotrackError, PayloadError, ScenarioError
from .geodesy import GeoPoint, LocalFrame, haversine, intermediate_point, local_frame
from .inertial import (
    InertialSample,
    PeakDetectorConfig,
    StepEvent,
    calibrate_step_length,
    detect_steps,
    integrate_heading,
    magnitude,
)
from .metrics import MetricsReport, cdf, dfd, improvement_summary, localization_errors, third_quantile
from .radio import AdvertisementPayload, PathLossModel, decode, distance_from_rssi, encode, in_proximity, rssi_at
from .replay import (
    DeviceSpec,
    RunRecord,
    Scenario,
    SyntheticParams,
    generate_synthetic,
    load_scenario,
    run,
    run_parallel_pdr,
    save_scenario,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AdvertisementPayload",
    "CalibrationError",
    "CollabConfig",
    "CotrackError",
    "DeviceSpec",
    "DeviceState",
    "GeoPoint",
    "InertialSample",
    "LocalFrame",
    "MetricsReport",
    "PathLossModel",
    "PayloadError",
    "PeakDetectorConfig",
    "RunRecord",
    "Scenario",
    "ScenarioError",
    "StepEvent",
    "SyntheticParams",
    "accumulate_error",
    "aoe_step",
    "calibrate_step_length",
    "cdf",
    "decode",
    "detect_steps",
    "dfd",
    "distance_from_rssi",
    "encode",
    "generate_synthetic",
    "haversine",
    "improvement_summary",
    "in_proximity",
    "integrate_heading",
    "intermediate_point",
    "load_scenario",
    "local_frame",
    "localization_errors",
    "magnitude",
    "rssi_at",
    "run",
    "run_parallel_pdr",
    "save_scenario",
    "sweep",
    "third_quantile",
]
