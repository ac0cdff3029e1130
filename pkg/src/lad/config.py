"""Tunables of the LAD thresholding loop."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from lad.errors import ConfigError


@dataclass(frozen=True)
class LadConfig:
    """Settings shared by the batch and the temporal detector.

    Attributes:
        initial_threshold: Starting cutoff on min-max normalized scores.
        quantile_level: Score quantile used to tighten the cutoff each pass.
        n_iter: Maximum number of standardize/score/relabel passes.
        epsilon: Lower bound on a column's standard deviation.
        min_unflagged_fraction: Smallest share of rows that must stay
            unflagged; a pass that would go below it is discarded.
        early_stop: Stop as soon as the labels stop changing.  Later passes
            would repeat the same labels, so this only saves time.
    """

    initial_threshold: float = 0.95
    quantile_level: float = 0.95
    n_iter: int = 5
    epsilon: float = 1e-12
    min_unflagged_fraction: float = 0.05
    early_stop: bool = True

    def __post_init__(self) -> None:
        _open_unit("initial_threshold", self.initial_threshold)
        _open_unit("quantile_level", self.quantile_level)
        _open_unit("min_unflagged_fraction", self.min_unflagged_fraction)
        if isinstance(self.n_iter, bool) or not isinstance(self.n_iter, int) or self.n_iter < 1:
            raise ConfigError(f"n_iter must be a positive integer, got {self.n_iter!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"epsilon must be a small positive number, got {self.epsilon!r}")

    def as_dict(self) -> dict:
        return asdict(self)


def _open_unit(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and 0.0 < value < 1.0):
        raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
