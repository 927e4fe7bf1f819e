"""Cooperative molecular communication: channel model, FC detectors, error analysis and particle simulation."""
__version__ = "0.1.0"

from .config import SystemConfig, default_config, symmetric_rx_positions  # noqa: E402
from .channel import ChannelModel, hitting_probability  # noqa: E402
from .stochastic import SeededStream  # noqa: E402
from .detectors import DetectorVariant, run_fc_detector  # noqa: E402
from .analytics import ErrorQuery, ErrorReport, averaged_error, q_fc_sd, q_fc_sa  # noqa: E402
from .optimizer import AllocationProblem, solve_allocation, symmetric_local_min_check  # noqa: E402
from .particle_sim import estimate_error_rate, run_system  # noqa: E402

__all__ = ["SystemConfig", "default_config", "symmetric_rx_positions", "ChannelModel", "hitting_probability",
           "SeededStream", "DetectorVariant", "run_fc_detector", "ErrorQuery", "ErrorReport", "averaged_error",
           "q_fc_sd", "q_fc_sa", "AllocationProblem", "solve_allocation", "symmetric_local_min_check",
           "estimate_error_rate", "run_system"]
