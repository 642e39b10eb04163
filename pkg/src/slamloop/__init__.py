"""Closed-loop flight simulation with SLAM-like pose feedback.

Pipeline: reference generation -> simulated pose/IMU sensors -> discrete
Kalman fusion -> cascade PID control -> point-mass plant, plus the
step-response and trajectory-tracking metrics used to judge feedback
quality.
"""

from .config import (
    ConfigError,
    ScenarioConfig,
    SuiteConfig,
    load_scenario,
    load_suite,
    scenario_from_dict,
)
from .control import AttitudeCommand, CascadeController, ControlState, PidGains
from .estimator import (
    DkfFilter,
    EstimatorError,
    FilterConfig,
    ObservationModel,
    TransitionModel,
)
from .harness import RunResult, SuiteResult, run_scenario, run_suite
from .metrics import (
    MetricsError,
    MetricsReport,
    ResponseLog,
    hausdorff_max,
    hausdorff_rms,
    integral_criteria,
    landing_error,
    overshoot,
    rise_time,
)
from .pose_sources import (
    AccelMeasurement,
    ImuConfig,
    ImuSource,
    LoopClosureEvent,
    PoseMeasurement,
    SensorProfile,
    SlamPoseSource,
    StepSmoother,
    builtin_profiles,
)
from .reference import (
    HelixSpec,
    InfeasibleTrajectoryError,
    TrajectoryPoint,
    TrajectoryStream,
    helix,
    line_segment,
    step_sequence,
)
from .vehicle import PlantParams, VehicleState

__version__ = "0.1.0"

__all__ = [
    "AccelMeasurement",
    "AttitudeCommand",
    "CascadeController",
    "ConfigError",
    "ControlState",
    "DkfFilter",
    "EstimatorError",
    "FilterConfig",
    "HelixSpec",
    "ImuConfig",
    "ImuSource",
    "InfeasibleTrajectoryError",
    "LoopClosureEvent",
    "MetricsError",
    "MetricsReport",
    "ObservationModel",
    "PidGains",
    "PlantParams",
    "PoseMeasurement",
    "ResponseLog",
    "RunResult",
    "ScenarioConfig",
    "SensorProfile",
    "SlamPoseSource",
    "StepSmoother",
    "SuiteConfig",
    "SuiteResult",
    "TrajectoryPoint",
    "TrajectoryStream",
    "TransitionModel",
    "VehicleState",
    "builtin_profiles",
    "hausdorff_max",
    "hausdorff_rms",
    "helix",
    "integral_criteria",
    "landing_error",
    "line_segment",
    "load_scenario",
    "load_suite",
    "overshoot",
    "rise_time",
    "run_scenario",
    "run_suite",
    "scenario_from_dict",
    "step_sequence",
]
