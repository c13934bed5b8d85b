"""Online Markov-gated mixture of multilinear experts.

Layers, bottom up: tensor operations, recursive N-way PLS regression, HMM
state gating, the mixture decoder, wavelet feature extraction, a closed-loop
synthetic reaching simulator, performance metrics, and session IO (configs,
logs, archives, the dual-rate runtime, a CLI).
"""

from .decoder import DecodeResult, MixtureDecoder
from .features import ControlLayout, FeatureConfig
from .gating import HmmGating
from .npls import RecursiveTensorPLS
from .sessionlog import SessionLog
from .simulator import (
    EffectorConfig,
    SessionSettings,
    SyntheticCortex,
    TaskSchedule,
    chance_baseline,
    make_schedule,
    run_session,
    separable_cortex,
)

__all__ = [
    "ControlLayout",
    "DecodeResult",
    "EffectorConfig",
    "FeatureConfig",
    "HmmGating",
    "MixtureDecoder",
    "RecursiveTensorPLS",
    "SessionLog",
    "SessionSettings",
    "SyntheticCortex",
    "TaskSchedule",
    "chance_baseline",
    "make_schedule",
    "run_session",
    "separable_cortex",
]

__version__ = "0.1.0"
