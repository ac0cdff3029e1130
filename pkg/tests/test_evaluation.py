import numpy as np
import pytest

from lad.errors import DomainError, FormatError
from lad.evaluation import (
    RocCurve,
    confusion,
    rank_auc,
    read_score_file,
    roc_auc,
    score_file_compare,
    top_k_labels,
)
from oracles import pairwise_auc


class TestRocAuc:
    def test_perfect(self):
        assert roc_auc([0.9, 0.1], [1, 0]).auc == 1.0

    def test_tied(self):
        curve = roc_auc([0.5, 0.5], [1, 0])
        assert curve.auc == 0.5
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]

    def test_matches_pairwise_oracle(self, rng):
        s = rng.random(100)
        y = rng.integers(0, 2, 100)
        assert roc_auc(s, y).auc == pytest.approx(pairwise_auc(s, y), abs=1e-12)

    def test_with_heavy_ties(self, rng):
        s = rng.integers(0, 4, 200).astype(float)
        y = rng.integers(0, 2, 200)
        assert roc_auc(s, y).auc == pytest.approx(pairwise_auc(s, y), abs=1e-12)

    def test_curve_shape(self, rng):
        s = rng.random(60)
        y = (rng.random(60) < 0.3).astype(int)
        curve = roc_auc(s, y)
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
        assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
        trapezoid = float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2))
        assert curve.auc == pytest.approx(trapezoid, abs=1e-12)
        assert curve.rank_auc == pytest.approx(curve.auc, abs=1e-12)

    def test_reversal(self, rng):
        s = rng.random(80)
        y = rng.integers(0, 2, 80)
        assert roc_auc(-s, y).auc == pytest.approx(1 - roc_auc(s, y).auc, abs=1e-12)

    @pytest.mark.parametrize("truth", [[1, 1, 1], [0, 0, 0], [0, 1], [0, 2, 1]])
    def test_domain_errors(self, truth):
        with pytest.raises(DomainError):
            roc_auc([0.1, 0.2, 0.3], truth)

    def test_rank_auc_standalone(self):
        assert rank_auc([3, 2, 1, 2], [1, 0, 0, 1]) == pytest.approx(pairwise_auc([3, 2, 1, 2], [1, 0, 0, 1]))


class TestTopK:
    def test_single(self):
        np.testing.assert_array_equal(top_k_labels([0.2, 0.8, 0.5], 1), [0, 1, 0])

    def test_all(self):
        np.testing.assert_array_equal(top_k_labels([0.2, 0.8, 0.5], 3), [1, 1, 1])

    def test_sort_oracle(self, rng):
        s = rng.random(40)
        flags = top_k_labels(s, 20)
        assert set(np.flatnonzero(flags)) == set(np.argsort(s)[20:])

    @pytest.mark.parametrize("k", [0, 4])
    def test_out_of_range(self, k):
        with pytest.raises(DomainError):
            top_k_labels([0.1, 0.2, 0.3], k)

    def test_confusion(self):
        cm = confusion([1, 1, 0, 0], [1, 0, 1, 0])
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (1, 1, 1, 1)


class TestScoreFiles:
    def test_single_column(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("0.5\n1e-3\n2\n")
        np.testing.assert_array_equal(read_score_file(p), [0.5, 1e-3, 2.0])

    def test_detect_output(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("# command: detect\nid,score,flag\na,0.25,0\nb,1.0,1\n")
        np.testing.assert_array_equal(read_score_file(p), [0.25, 1.0])

    @pytest.mark.parametrize("text", ["", "0.1\nabc\n", "a,b\n1,2\n", "inf\n"])
    def test_bad_files(self, tmp_path, text):
        p = tmp_path / "s.txt"
        p.write_text(text)
        with pytest.raises(FormatError):
            read_score_file(p)

    def test_compare_identical(self, tmp_path, rng):
        s = rng.random(30)
        y = np.r_[np.ones(10), np.zeros(20)].astype(int)
        p = tmp_path / "ext.txt"
        p.write_text("\n".join(repr(float(v)) for v in s))
        report = score_file_compare(roc_auc(s, y), p, y)
        assert report.difference == 0.0

    def test_compare_reversed(self):
        y = np.r_[np.ones(5), np.zeros(5)].astype(int)
        ours = np.r_[np.linspace(0.6, 1, 5), np.linspace(0, 0.4, 5)]
        report = score_file_compare(ours, 1 - ours, y)
        assert report.ours_auc == 1.0
        assert report.external_auc == pytest.approx(1 - report.ours_auc)

    def test_compare_random_is_near_half(self):
        rng = np.random.default_rng(7)
        y = np.r_[np.ones(500), np.zeros(500)].astype(int)
        aucs = [score_file_compare(rng.random(1000), rng.permutation(1000) / 1000, y).external_auc for _ in range(20)]
        assert all(abs(a - 0.5) <= 0.1 for a in aucs)

    def test_compare_row_mismatch(self):
        with pytest.raises(FormatError):
            score_file_compare(RocCurve(np.r_[0, 1.0], np.r_[0, 1.0], 0.5, 0.5), np.zeros(3), [0, 1])
