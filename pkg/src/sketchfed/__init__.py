"""Sketched adaptive federated optimization: sketches, server optimizers,
round simulator, synthetic problems and statistical verification."""
from .errors import ConfigError, DivergenceError
from .sketch import SketchKind, SketchOperator, desk, fwht, make_operator, round_seed, sk
from .optim import AmsGradState, ClipConfig, LrSchedule, adam_step, amsgrad_step, clip_scale, sacfl_schedule, schedule_eta
from .config import ExperimentConfig
from .fedsim import RunResult, comm_bytes, run_experiment

__all__ = [
    "ConfigError", "DivergenceError",
    "SketchKind", "SketchOperator", "make_operator", "round_seed", "sk", "desk", "fwht",
    "AmsGradState", "ClipConfig", "LrSchedule", "amsgrad_step", "adam_step", "clip_scale",
    "sacfl_schedule", "schedule_eta",
    "ExperimentConfig", "RunResult", "comm_bytes", "run_experiment",
]
__version__ = "0.1.0"
