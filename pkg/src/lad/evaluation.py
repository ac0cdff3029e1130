"""ROC analysis, top-k labelling and comparison with external score files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from lad.detector import rank
from lad.errors import DomainError, FormatError, LadError


@dataclass(frozen=True)
class RocCurve:
    """ROC points from (0, 0) to (1, 1) and the area under them.

    ``auc`` is the trapezoidal area; ``rank_auc`` is the same quantity from
    the rank-sum (Mann-Whitney) statistic with ties counted as one half.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    rank_auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_pair(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(truth).reshape(-1)
    if s.shape != y.shape:
        raise DomainError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise DomainError("scores contain non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise DomainError("truth must be 0/1 flags")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise DomainError("truth must contain both classes")
    return s, y


def rank_auc(scores, truth) -> float:
    """Probability that a random positive outranks a random negative."""
    s, y = _check_pair(scores, truth)
    pos = int(y.sum())
    neg = y.size - pos
    ranks = rankdata(s)
    u = ranks[y].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def roc_auc(scores, truth) -> RocCurve:
    """ROC curve sweeping every distinct score as a threshold.

    Equal scores form a single threshold step, so tied positive/negative
    pairs contribute half credit.

    Raises:
        DomainError: If ``truth`` has a single class or lengths differ.
    """
    s, y = _check_pair(scores, truth)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.r_[0, np.cumsum(y)[ends]]
    fp = np.r_[0, np.cumsum(~y)[ends]]
    pos, neg = int(tp[-1]), int(fp[-1])
    # integer trapezoid: twice the area in units of one (positive, negative) pair
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2.0 * pos * neg)
    check = rank_auc(scores, truth)
    if abs(auc - check) > 1e-9:
        raise LadError(f"trapezoidal AUC {auc} disagrees with rank AUC {check}")
    return RocCurve(fp / neg, tp / pos, auc, check)


def top_k_labels(scores, k: int) -> np.ndarray:
    """Flag exactly the ``k`` highest-scoring rows (ties by lower index)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    flags = np.zeros(s.size, dtype=np.int8)
    flags[rank(s, k)] = 1
    return flags


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int


def confusion(predicted, truth) -> Confusion:
    p = np.asarray(predicted).astype(bool)
    y = np.asarray(truth).astype(bool)
    return Confusion(int((p & y).sum()), int((p & ~y).sum()), int((~p & ~y).sum()), int((~p & y).sum()))


def read_score_file(path) -> np.ndarray:
    """Read scores from a file.

    Accepts headerless single-column decimal text (one score per row) and
    the tables written by ``lad detect`` (``#`` manifest lines, then a
    header containing a ``score`` column).
    """
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: no scores")
    column = None
    delimiter = next((d for d in ",\t;" if d in lines[0]), None)
    if delimiter is not None:
        header = [c.strip() for c in lines[0].split(delimiter)]
        if "score" not in header:
            raise FormatError(f"{path}: multi-column file without a 'score' header")
        column = header.index("score")
        lines = lines[1:]
    out = np.empty(len(lines))
    for i, ln in enumerate(lines):
        cell = ln if column is None else ln.split(delimiter)[column]
        try:
            out[i] = float(cell)
        except ValueError:
            raise FormatError(f"{path}: unparseable score {cell!r} in data row {i + 1}") from None
    if not np.all(np.isfinite(out)):
        raise FormatError(f"{path}: non-finite scores")
    return out


@dataclass(frozen=True)
class ComparisonReport:
    ours_auc: float
    external_auc: float

    @property
    def difference(self) -> float:
        return self.ours_auc - self.external_auc


def score_file_compare(ours, external, truth) -> ComparisonReport:
    """Compare our ROC-AUC with that of an externally produced score set.

    Args:
        ours: A RocCurve or our raw scores.
        external: Path to a score file, or an array of scores.
        truth: Ground-truth flags aligned with both score sets.

    Raises:
        FormatError: If the external score count differs from ``len(truth)``.
    """
    truth = np.asarray(truth).reshape(-1)
    ours_auc = ours.auc if isinstance(ours, RocCurve) else roc_auc(ours, truth).auc
    ext = read_score_file(external) if isinstance(external, (str, Path)) else np.asarray(external, dtype=np.float64).reshape(-1)
    if ext.size != truth.size:
        raise FormatError(f"external scores have {ext.size} rows, truth has {truth.size}")
    return ComparisonReport(ours_auc, roc_auc(ext, truth).auc)
