"""Large-deviations anomaly detection for matrices and time-series panels."""

__version__ = "0.1.0"

from lad.config import LadConfig
from lad.detector import DataMatrix, ScoreState, fit, quantile, rank, score_pass, standardize
from lad.errors import ConfigError, DomainError, FormatError, LadError, StateError
from lad.evaluation import RocCurve, roc_auc, score_file_compare, top_k_labels
from lad.rate import ProjectiveScore, RateFunction, rate_eval, raw_score
from lad.temporal import TemporalScores, TimeSeriesPanel, full_history_mode, run, stack_window, step

__all__ = [
    "ConfigError",
    "DataMatrix",
    "DomainError",
    "FormatError",
    "LadConfig",
    "LadError",
    "ProjectiveScore",
    "RateFunction",
    "RocCurve",
    "ScoreState",
    "StateError",
    "TemporalScores",
    "TimeSeriesPanel",
    "fit",
    "full_history_mode",
    "quantile",
    "rank",
    "rate_eval",
    "raw_score",
    "roc_auc",
    "run",
    "score_file_compare",
    "score_pass",
    "stack_window",
    "standardize",
    "step",
    "top_k_labels",
]
