"""Batch LAD detector.

Each pass standardizes every column against the rows currently labelled
normal, scores rows by the projective Gaussian rate, min-max normalizes the
scores, lowers the threshold to the score quantile if that is smaller, and
relabels rows whose score exceeds the threshold.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lad.config import LadConfig
from lad.errors import DomainError, StateError
from lad.rate import scaled_rate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataMatrix:
    """Dense ``(N, d)`` observation matrix with optional ground truth.

    Attributes:
        values: Finite float64 matrix, at least one row and one column.
        labels: Optional 0/1 ground-truth flags of length ``N``.
        feature_names: Optional column names of length ``d``.
        row_ids: Optional row identifiers of length ``N``.
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    row_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DomainError(f"expected a non-empty (N, d) matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
            raise DomainError(f"non-finite values in rows {bad[:10].tolist()}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        n, d = values.shape
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DomainError(f"labels must have length {n}, got shape {labels.shape}")
            if not np.isin(labels, (0, 1)).all():
                raise DomainError("labels must be 0/1 flags")
            labels = labels.astype(np.int8)
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)
        if self.feature_names is not None:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != d:
                raise DomainError(f"expected {d} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)
        if self.row_ids is not None:
            ids = tuple(str(s) for s in self.row_ids)
            if len(ids) != n:
                raise DomainError(f"expected {n} row ids, got {len(ids)}")
            object.__setattr__(self, "row_ids", ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ScoreState:
    """Scores, labels and threshold after a run of the thresholding loop.

    Attributes:
        scores: Min-max normalized scores in ``[0, 1]``.
        flags: 0/1 anomaly labels; ``flags[i] == 1`` implies
            ``scores[i] > threshold``.
        threshold: Cutoff in effect after the last accepted pass.
        iterations_run: Number of accepted passes.
        threshold_history: Threshold before the first pass followed by the
            value after every accepted pass; non-increasing.
    """

    scores: np.ndarray
    flags: np.ndarray
    threshold: float
    iterations_run: int
    threshold_history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        for name in ("scores", "flags"):
            arr = np.array(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, n: int, threshold: float) -> ScoreState:
        return cls(np.zeros(n), np.zeros(n, dtype=np.int8), float(threshold), 0, (float(threshold),))

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())


def _as_array(data) -> np.ndarray:
    if isinstance(data, DataMatrix):
        return data.values
    return DataMatrix(data).values


def _as_mask(flags, n: int) -> np.ndarray:
    mask = np.asarray(flags).astype(bool)
    if mask.shape != (n,):
        raise DomainError(f"flags must have length {n}, got shape {mask.shape}")
    return mask


# Tile sizes of the scoring kernels.  Temporaries stay cache-sized so cost is
# linear in N * d, and each column is reduced tile by tile in an order that
# does not depend on how many other columns the matrix has.
_SAMPLE_TILE = 4096
_FEATURE_TILE = 16
_BLOCK_ELEMENTS = 65536
_ROUNDOFF = 64 * np.finfo(np.float64).eps
_NOISE = 16 * np.finfo(np.float64).eps


def _blocks(d: int, n: int) -> list[slice]:
    width = max(64, _BLOCK_ELEMENTS // max(d, 1))
    return [slice(a, min(a + width, n)) for a in range(0, n, width)]


def _tiles(d: int, n: int):
    for r in range(0, d, _FEATURE_TILE):
        for c in range(0, n, _SAMPLE_TILE):
            yield slice(r, r + _FEATURE_TILE), slice(c, c + _SAMPLE_TILE)


def _column_stats(xt: np.ndarray, flagged: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    # xt is the (d, N) transpose; subset sums are 0/1-weighted sums over samples.
    weight = (~flagged).astype(np.float64)
    k = int(weight.sum())
    if k == 0:
        raise StateError("every row is flagged; the normal subset is empty")
    d, n = xt.shape
    # shifting by an unflagged sample keeps constant columns exact
    ref = xt[:, int(np.argmax(weight))].copy()
    total = np.zeros(d)
    for rows, cols in _tiles(d, n):
        total[rows] += ((xt[rows, cols] - ref[rows, None]) * weight[cols]).sum(axis=1)
    mean = ref + total / k
    if k < 2:
        return mean, np.full(d, epsilon)
    sq = np.zeros(d)
    for rows, cols in _tiles(d, n):
        dev = xt[rows, cols] - mean[rows, None]
        dev *= dev
        dev *= weight[cols]
        sq[rows] += dev.sum(axis=1)
    return mean, np.maximum(np.sqrt(sq / (k - 1)), epsilon)


def standardize(data, flags, epsilon: float = 1e-12) -> np.ndarray:
    """Z-score every column against the rows with flag 0.

    Subset mean and sample standard deviation (``n - 1`` denominator) are
    computed over unflagged rows only; all rows are transformed.  The
    standard deviation is floored at ``epsilon``.

    Raises:
        StateError: If every row is flagged.
    """
    x = _as_array(data)
    mean, scale = _column_stats(np.ascontiguousarray(x.T), _as_mask(flags, x.shape[0]), epsilon)
    return (x - mean) / scale


def min_max(scores: np.ndarray, tolerance: float | None = None) -> np.ndarray:
    """Rescale to ``[0, 1]``; a constant vector maps to zeros.

    A spread no larger than ``tolerance`` is treated as constant too.  The
    default tolerance is a few ulps of the largest value.
    """
    lo, hi = scores.min(), scores.max()
    span = hi - lo
    if tolerance is None:
        tolerance = _ROUNDOFF * abs(hi)
    if not span > tolerance:
        return np.zeros_like(scores)
    return (scores - lo) / span


def _raw_scores(xt, mean, scale, n_jobs: int) -> np.ndarray:
    d, n = xt.shape
    out = np.empty(n)
    mean, scale = mean[:, None], scale[:, None]

    def block(cols: slice) -> None:
        z = xt[:, cols] - mean
        z /= scale
        np.abs(z, out=z)
        out[cols] = scaled_rate(z.max(axis=0), n)

    blocks = _blocks(d, n)
    if n_jobs <= 1 or len(blocks) < 2:
        for c in blocks:
            block(c)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(block, blocks))
    return out


def _magnitude(xt: np.ndarray) -> np.ndarray:
    # constant columns standardize to exact zeros, so they carry no roundoff
    hi, lo = xt.max(axis=1), xt.min(axis=1)
    return np.where(hi > lo, np.maximum(np.abs(hi), np.abs(lo)), 0.0)


def _score_transposed(xt, flagged, cfg: LadConfig, n_jobs: int, magnitude: np.ndarray | None = None) -> np.ndarray:
    mean, scale = _column_stats(xt, flagged, cfg.epsilon)
    raw = _raw_scores(xt, mean, scale, n_jobs)
    # Cancellation in x - mean costs about eps * (|x| + |mean|) / scale in z,
    # so raw scores closer than that bound are ties in exact arithmetic.
    if magnitude is None:
        magnitude = _magnitude(xt)
    n = xt.shape[1]
    conditioning = float(np.max(np.where(magnitude > 0, (magnitude + np.abs(mean)) / scale, 0.0)))
    peak = math.sqrt(2.0 * n * float(raw.max()))
    return min_max(raw, max(_ROUNDOFF * float(raw.max()), _NOISE * conditioning * peak / n))


def score_pass(data, flags, cfg: LadConfig | None = None, *, n_jobs: int = 1) -> np.ndarray:
    """One scoring pass: standardize, projective rate score, min-max.

    Rows are scored with divisor ``N`` (all rows, flagged or not).  With
    ``n_jobs > 1`` blocks of rows are scored on threads; each row is scored
    by the same arithmetic either way, so results do not depend on ``n_jobs``.
    """
    cfg = cfg or LadConfig()
    x = _as_array(data)
    flagged = _as_mask(flags, x.shape[0])
    return _score_transposed(np.ascontiguousarray(x.T), flagged, cfg, n_jobs)


def quantile(values, q: float) -> float:
    """Linear-interpolation sample quantile.

    With sorted values ``v`` of length ``m`` and ``h = (m - 1) q`` this is
    ``v[floor(h)] + (h - floor(h)) * (v[ceil(h)] - v[floor(h)])``.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise DomainError("quantile of an empty vector")
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
    if not np.all(np.isfinite(v)):
        raise DomainError("quantile input contains non-finite values")
    h = (v.size - 1) * q
    lo = math.floor(h)
    part = np.partition(v, lo)
    low = part[lo]
    frac = h - lo
    if frac == 0.0 or lo + 1 >= v.size:
        return float(low)
    high = part[lo + 1 :].min()
    return float(low + frac * (high - low))


def iterate(x: np.ndarray, flags: np.ndarray, threshold: float, cfg: LadConfig, *, n_jobs: int = 1) -> ScoreState:
    """Run the thresholding loop on ``x`` starting from ``flags`` and ``threshold``.

    Stops after ``cfg.n_iter`` passes, or earlier when the labels reach a
    fixed point and ``cfg.early_stop`` is set.  A pass that would leave fewer than
    ``max(1, min_unflagged_fraction * N)`` rows unflagged is discarded and
    the state before it is returned; when that happens on the first pass the
    starting labels are kept together with that pass's scores.
    """
    n = x.shape[0]
    xt = np.ascontiguousarray(x.T)
    floor = max(1, math.ceil(cfg.min_unflagged_fraction * n - 1e-9))
    flags = np.asarray(flags).astype(bool)
    magnitude = _magnitude(xt)
    history = [float(threshold)]
    scores = None
    accepted = 0
    for _ in range(cfg.n_iter):
        current = _score_transposed(xt, flags, cfg, n_jobs, magnitude)
        th = min(threshold, quantile(current, cfg.quantile_level))
        relabel = current > th
        if n - int(relabel.sum()) < floor:
            logger.debug("pass would leave %d of %d rows unflagged; stopping", n - int(relabel.sum()), n)
            if scores is None:
                scores = current
            break
        scores, threshold = current, th
        history.append(th)
        accepted += 1
        converged = np.array_equal(relabel, flags)
        flags = relabel
        if converged and cfg.early_stop:
            break
    return ScoreState(scores, flags.astype(np.int8), float(threshold), accepted, tuple(history))


def fit(data, cfg: LadConfig | None = None, *, n_jobs: int = 1) -> ScoreState:
    """Score and label every row of ``data`` with the batch LAD loop.

    Args:
        data: DataMatrix or array-like of shape ``(N, d)`` with ``N >= 2``.
        cfg: Loop settings; defaults to ``LadConfig()``.
        n_jobs: Threads used to score column blocks.

    Returns:
        Final ScoreState.

    Raises:
        DomainError: If the matrix has fewer than two rows.
    """
    cfg = cfg or LadConfig()
    x = _as_array(data)
    if x.shape[0] < 2:
        raise DomainError(f"fit needs at least 2 rows, got {x.shape[0]}")
    return iterate(x, np.zeros(x.shape[0], dtype=bool), cfg.initial_threshold, cfg, n_jobs=n_jobs)


def rank(state: ScoreState | Sequence[float] | np.ndarray, k: int) -> list[int]:
    """Indices of the ``k`` largest scores, descending, ties by ascending index."""
    scores = np.asarray(state.scores if isinstance(state, ScoreState) else state, dtype=np.float64).reshape(-1)
    n = scores.size
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k!r}")
    order = np.argsort(-scores, kind="stable")
    return order[: int(k)].tolist()
