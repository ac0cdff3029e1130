"""Online LAD over a panel of multivariate time series.

At every time step the last ``w + 1`` observations of each series are
concatenated into one row, and the batch thresholding loop runs on the
resulting matrix.  Labels from the previous step seed the normal subset and
are then re-evaluated.  A series' aggregate score is the share of its steps
at which it was flagged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from lad.config import LadConfig
from lad.detector import DataMatrix, ScoreState, iterate
from lad.errors import DomainError

logger = logging.getLogger(__name__)

ThresholdCarry = Literal["reset", "carry"]


@dataclass(frozen=True)
class TimeSeriesPanel:
    """``N`` series of length ``T`` with ``d`` features each.

    Attributes:
        values: ``(N, T, d)`` float array.  Cells before a series' start
            offset are ignored.
        series_ids: ``N`` identifiers; defaults to ``"0" .. "N-1"``.
        start_offsets: First recorded step of each series; defaults to 0.
        times: Optional ``T`` time labels.
        feature_names: Optional ``d`` feature names.
        populations: Optional ``N`` population sizes carried from ingestion.
    """

    values: np.ndarray
    series_ids: tuple[str, ...] | None = None
    start_offsets: np.ndarray | None = None
    times: tuple[str, ...] | None = None
    feature_names: tuple[str, ...] | None = None
    populations: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or 0 in values.shape:
            raise DomainError(f"expected a non-empty (N, T, d) array, got shape {values.shape}")
        n, t, d = values.shape
        offsets = np.zeros(n, dtype=np.int64) if self.start_offsets is None else np.array(self.start_offsets, dtype=np.int64)
        if offsets.shape != (n,) or np.any(offsets < 0) or np.any(offsets >= t):
            raise DomainError(f"start_offsets must be {n} integers in [0, {t})")
        present = np.arange(t)[None, :] >= offsets[:, None]
        if not np.all(np.isfinite(values[present])):
            raise DomainError("panel contains non-finite values after the start offsets")
        values.flags.writeable = False
        offsets.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_offsets", offsets)
        ids = tuple(str(i) for i in range(n)) if self.series_ids is None else tuple(str(s) for s in self.series_ids)
        if len(ids) != n:
            raise DomainError(f"expected {n} series ids, got {len(ids)}")
        object.__setattr__(self, "series_ids", ids)
        if self.times is not None:
            times = tuple(str(s) for s in self.times)
            if len(times) != t:
                raise DomainError(f"expected {t} time labels, got {len(times)}")
            object.__setattr__(self, "times", times)
        if self.feature_names is not None:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != d:
                raise DomainError(f"expected {d} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)
        if self.populations is not None:
            pops = np.array(self.populations, dtype=np.float64)
            if pops.shape != (n,):
                raise DomainError(f"expected {n} populations, got shape {pops.shape}")
            pops.flags.writeable = False
            object.__setattr__(self, "populations", pops)

    @property
    def series_count(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def feature_count(self) -> int:
        return self.values.shape[2]

    @property
    def effective_lengths(self) -> np.ndarray:
        return self.length - self.start_offsets

    def replace_values(self, values: np.ndarray) -> TimeSeriesPanel:
        return TimeSeriesPanel(values, self.series_ids, self.start_offsets, self.times, self.feature_names, self.populations)

    def subset(self, rows) -> TimeSeriesPanel:
        rows = np.asarray(rows)
        pops = None if self.populations is None else self.populations[rows]
        ids = tuple(self.series_ids[i] for i in np.arange(self.series_count)[rows])
        return TimeSeriesPanel(self.values[rows], ids, self.start_offsets[rows], self.times, self.feature_names, pops)


@dataclass(frozen=True)
class TemporalScores:
    """Per-step scores and labels of every series plus aggregate scores.

    Attributes:
        scores: ``(N, T)`` scores in ``[0, 1]``.
        flags: ``(N, T)`` 0/1 labels.
        aggregate: Flagged share of each series' effective length.
        thresholds: Threshold in effect at the end of each step.
        series_ids: Identifiers aligned with the rows.
    """

    scores: np.ndarray
    flags: np.ndarray
    aggregate: np.ndarray
    thresholds: np.ndarray
    series_ids: tuple[str, ...]

    def ranking(self) -> list[int]:
        """Series indices by descending aggregate, ties by index."""
        return np.argsort(-self.aggregate, kind="stable").tolist()


def stack_window(panel: TimeSeriesPanel, t: int, w: int) -> tuple[DataMatrix, np.ndarray]:
    """Concatenate steps ``t - w .. t`` of every series into one row.

    Returns the ``(N, d * (w + 1))`` matrix, columns ordered oldest step
    first, and the boolean mask of series that have started by ``t``.
    Cells before a series' start (or before step 0) are zero.
    """
    n, length, d = panel.values.shape
    if isinstance(t, bool) or int(t) != t or not 0 <= t < length:
        raise DomainError(f"time index must lie in [0, {length}), got {t!r}")
    if isinstance(w, bool) or int(w) != w or w < 0:
        raise DomainError(f"window must be a non-negative integer, got {w!r}")
    t, w = int(t), int(w)
    out = np.zeros((n, w + 1, d))
    first = max(0, t - w)
    out[:, first - (t - w) :, :] = panel.values[:, first : t + 1, :]
    steps = np.arange(t - w, t + 1)
    absent = steps[None, :] < panel.start_offsets[:, None]
    out[absent] = 0.0
    active = panel.start_offsets <= t
    return DataMatrix(out.reshape(n, d * (w + 1)), row_ids=panel.series_ids), active


def step(
    panel: TimeSeriesPanel,
    t: int,
    prev: ScoreState | None,
    cfg: LadConfig | None = None,
    w: int = 0,
    *,
    threshold_carry: ThresholdCarry = "reset",
    n_jobs: int = 1,
) -> ScoreState:
    """Score every series at step ``t``, seeding labels from ``prev``.

    The thresholding loop runs on the active (started) series only and uses
    their count as the score divisor.  Inactive series get score 0 and flag 0.
    With ``threshold_carry="carry"`` the loop starts from ``prev.threshold``,
    otherwise from ``cfg.initial_threshold``.
    """
    cfg = cfg or LadConfig()
    if threshold_carry not in ("reset", "carry"):
        raise DomainError(f"threshold_carry must be 'reset' or 'carry', got {threshold_carry!r}")
    matrix, active = stack_window(panel, t, w)
    n = panel.series_count
    seed = np.zeros(n, dtype=bool) if prev is None else np.asarray(prev.flags).astype(bool).copy()
    if seed.shape != (n,):
        raise DomainError(f"previous state has {seed.shape[0]} rows, panel has {n}")
    seed &= active
    start = cfg.initial_threshold
    if prev is not None and threshold_carry == "carry":
        start = prev.threshold
    if not active.any():
        return ScoreState.empty(n, start)
    if active.all():
        return iterate(matrix.values, seed, start, cfg, n_jobs=n_jobs)
    inner = iterate(matrix.values[active], seed[active], start, cfg, n_jobs=n_jobs)
    scores = np.zeros(n)
    flags = np.zeros(n, dtype=np.int8)
    scores[active] = inner.scores
    flags[active] = inner.flags
    return ScoreState(scores, flags, inner.threshold, inner.iterations_run, inner.threshold_history)


def run(
    panel: TimeSeriesPanel,
    cfg: LadConfig | None = None,
    w: int | None = 0,
    *,
    threshold_carry: ThresholdCarry = "reset",
    n_jobs: int = 1,
) -> TemporalScores:
    """Fold :func:`step` over every time step of ``panel``.

    Args:
        panel: Series to score.
        cfg: Loop settings.
        w: Window length; ``None`` grows the window to the full history
            (``w = t`` at step ``t``).
        threshold_carry: ``"reset"`` restarts every step from the initial
            threshold, ``"carry"`` continues from the previous step's.
        n_jobs: Threads used inside each step.

    Returns:
        TemporalScores whose aggregate divides each series' flag count by
        its effective length ``T - start_offset``.
    """
    cfg = cfg or LadConfig()
    n, length, _ = panel.values.shape
    scores = np.zeros((n, length))
    flags = np.zeros((n, length), dtype=np.int8)
    thresholds = np.zeros(length)
    state = None
    for t in range(length):
        state = step(panel, t, state, cfg, t if w is None else w, threshold_carry=threshold_carry, n_jobs=n_jobs)
        scores[:, t] = state.scores
        flags[:, t] = state.flags
        thresholds[t] = state.threshold
    aggregate = flags.sum(axis=1) / panel.effective_lengths
    logger.debug("temporal run: N=%d T=%d, %d series ever flagged", n, length, int((aggregate > 0).sum()))
    return TemporalScores(scores, flags, aggregate, thresholds, panel.series_ids)


def full_history_mode(panel: TimeSeriesPanel, cfg: LadConfig | None = None, **kwargs) -> TemporalScores:
    """Score each step against the complete history up to it."""
    return run(panel, cfg, None, **kwargs)


def one_step_mode(panel: TimeSeriesPanel, cfg: LadConfig | None = None, **kwargs) -> TemporalScores:
    """Score each step from that step's observations alone."""
    return run(panel, cfg, 0, **kwargs)
