"""Gaussian rate function and the projective (max over dimensions) score.

For standardized data the rate function of the sample mean is ``p**2 / 2``.
An observation ``x`` shifts the mean of ``n`` samples by about ``x / n``, so its
anomaly score is ``x**2 / (2 n)``.  In ``d`` dimensions the score is the
supremum of the one-dimensional scores over the coordinate projections.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from lad.errors import DomainError


class RateFunction(enum.Enum):
    """Supported rate functions. Only the standard Gaussian is implemented."""

    GAUSSIAN_STANDARD = "gaussian"

    def __call__(self, p: float) -> float:
        return rate_eval(self, p)


def rate_eval(rf: RateFunction, p: float) -> float:
    """Evaluate the rate function ``rf`` at ``p``."""
    p = float(p)
    if not math.isfinite(p):
        raise DomainError(f"rate function argument must be finite, got {p!r}")
    if rf is RateFunction.GAUSSIAN_STANDARD:
        return p * p / 2.0
    raise DomainError(f"unsupported rate function {rf!r}")


@dataclass(frozen=True)
class ProjectiveScore:
    """Per-dimension rate values of one observation and their supremum."""

    per_dimension: np.ndarray
    combined: float
    scale_n: int


def raw_score(z, n: int) -> ProjectiveScore:
    """Score one standardized observation ``z`` against ``n`` samples.

    Args:
        z: Vector of ``d`` standardized values.
        n: Sample-count divisor, ``n >= 1``.

    Returns:
        ProjectiveScore with ``per_dimension[k] = z[k]**2 / (2 n)`` and
        ``combined`` equal to their maximum.

    Raises:
        DomainError: If ``z`` is empty or non-finite, or ``n < 1``.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise DomainError("cannot score an empty vector")
    if not np.all(np.isfinite(z)):
        raise DomainError("standardized vector contains non-finite values")
    n = _check_divisor(n)
    per_dim = z * z / float(2 * n)
    per_dim.flags.writeable = False
    return ProjectiveScore(per_dimension=per_dim, combined=float(per_dim.max()), scale_n=n)


def projective_scores(z: np.ndarray, n: int) -> np.ndarray:
    """Row-wise ``combined`` scores of a standardized ``(N, d)`` matrix.

    Equivalent to ``[raw_score(row, n).combined for row in z]``.  Squaring and
    dividing are monotone in ``|z|`` under IEEE rounding, so the maximum is
    taken on ``|z|`` first and only one value per row is squared.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] == 0:
        raise DomainError(f"expected a non-empty (N, d) matrix, got shape {z.shape}")
    return scaled_rate(np.abs(z).max(axis=1), n)


def scaled_rate(peak: np.ndarray, n: int) -> np.ndarray:
    """Gaussian rate of ``peak`` divided by ``n``: ``peak**2 / (2 n)``."""
    n = _check_divisor(n)
    out = np.multiply(peak, peak)
    out /= float(2 * n)
    return out


def _check_divisor(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"sample-count divisor must be a positive integer, got {n!r}")
    return int(n)
