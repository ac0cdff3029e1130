import subprocess
import sys

import numpy as np
import pytest

from lad.cli import loglog_slope, main
from lad.detector import DataMatrix, fit
from lad.evaluation import read_score_file, roc_auc
from lad.ingest import save_matrix
from lad.synthetic import injection_panel


def body(path):
    lines = path.read_text().splitlines()
    return [ln for ln in lines if not ln.startswith("#")]


def write_panel(path, panel):
    with open(path, "w") as fh:
        fh.write("id,time,a,b\n")
        for n, sid in enumerate(panel.series_ids):
            for t in range(panel.length):
                a, b = panel.values[n, t]
                fh.write(f"{sid},{t},{float(a)!r},{float(b)!r}\n")


@pytest.fixture
def matrix_file(tmp_path, rng):
    x = rng.standard_normal((60, 4))
    x[:3] += 6
    labels = np.zeros(60, int)
    labels[:3] = 1
    path = tmp_path / "m.csv"
    save_matrix(DataMatrix(x, labels), path)
    return path, x, labels


class TestDetect:
    def test_toy(self, tmp_path):
        src = tmp_path / "toy.csv"
        src.write_text("1,2\n3,4\n50,6\n")
        out = tmp_path / "out.csv"
        assert main(["detect", str(src), "-o", str(out)]) == 0
        rows = body(out)
        assert rows[0] == "id,score,flag"
        scores = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(scores) == 3 and all(0 <= s <= 1 for s in scores)

    def test_deterministic(self, tmp_path, matrix_file):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["detect", str(matrix_file[0]), "--label-column", "label", "-o", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert "# input_digest: sha256:" in a.read_text()

    def test_matches_library(self, tmp_path, matrix_file):
        path, x, _ = matrix_file
        out = tmp_path / "o.csv"
        main(["detect", str(path), "--label-column", "label", "-o", str(out), "--n-iter", "3"])
        from lad.config import LadConfig

        state = fit(x, LadConfig(n_iter=3))
        rows = [r.split(",") for r in body(out)[1:]]
        np.testing.assert_array_equal([float(r[1]) for r in rows], state.scores)
        np.testing.assert_array_equal([int(r[2]) for r in rows], state.flags)

    def test_parse_error_exit_2(self, tmp_path, capsys):
        src = tmp_path / "bad.csv"
        src.write_text("a,b\n1,2\n3,x\n")
        assert main(["detect", str(src)]) == 2
        assert "lines [3]" in capsys.readouterr().err

    @pytest.mark.parametrize("flag", [["--n-iter", "0"], ["--quantile-level", "1.5"], ["--threads", "0"], ["--n-iter", "abc"]])
    def test_config_error_exit_3(self, matrix_file, flag, capsys):
        with pytest.raises(SystemExit) as exc:
            code = main(["detect", str(matrix_file[0]), *flag])
            raise SystemExit(code)
        assert exc.value.code == 3
        assert "configuration error" in capsys.readouterr().err


class TestStream:
    def test_injection_ranking(self, tmp_path, capsys):
        inj = injection_panel(seed=1)
        src = tmp_path / "panel.csv"
        write_panel(src, inj.panel)
        out = tmp_path / "out"
        assert main(["stream", str(src), "--value-columns", "a,b", "--output-dir", str(out)]) == 0
        ranked = [r.split(",")[1] for r in body(out / "aggregate.csv")[1:]]
        assert set(ranked[:5]) == {inj.panel.series_ids[i] for i in inj.injected}
        assert len(body(out / "scores.csv")) == 1 + 100 * 60
        assert len(body(out / "thresholds.csv")) == 1 + 60
        printed = capsys.readouterr().out.splitlines()
        assert len(printed) == 10

    def test_step_history_alias(self, tmp_path):
        inj = injection_panel(n=30, length=8, seed=2)
        src = tmp_path / "panel.csv"
        write_panel(src, inj.panel)
        main(["stream", str(src), "--value-columns", "a,b", "--output-dir", str(tmp_path / "x")])
        main(["stream", str(src), "--value-columns", "a,b", "--output-dir", str(tmp_path / "y"), "--history", "step", "--window", "0"])
        for name in ("scores.csv", "aggregate.csv", "thresholds.csv"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()

    def test_single_step_matches_detect(self, tmp_path, rng):
        x = rng.standard_normal((25, 2))
        x[4] += 7
        src = tmp_path / "panel.csv"
        src.write_text("id,time,a,b\n" + "".join(f"s{i:02d},0,{float(a)!r},{float(b)!r}\n" for i, (a, b) in enumerate(x)))
        main(["stream", str(src), "--value-columns", "a,b", "--output-dir", str(tmp_path / "o")])
        agg = {r.split(",")[1]: float(r.split(",")[2]) for r in body(tmp_path / "o" / "aggregate.csv")[1:]}
        mat = tmp_path / "m.csv"
        mat.write_text("a,b\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in x))
        main(["detect", str(mat), "-o", str(tmp_path / "d.csv")])
        flags = [int(r.split(",")[2]) for r in body(tmp_path / "d.csv")[1:]]
        assert [agg[f"s{i:02d}"] for i in range(25)] == flags

    def test_full_history_and_new_counts(self, tmp_path):
        inj = injection_panel(n=40, length=12, seed=4)
        src = tmp_path / "panel.csv"
        write_panel(src, inj.panel)
        out = tmp_path / "o"
        assert main(["stream", str(src), "--value-columns", "a,b", "--output-dir", str(out), "--history", "full", "--mode", "new"]) == 0
        text = (out / "aggregate.csv").read_text()
        assert '"window": "full"' in text and '"mode": "new"' in text

    def test_per_capita_needs_population(self, tmp_path):
        src = tmp_path / "p.csv"
        src.write_text("id,time,a\nx,0,1\n")
        assert main(["stream", str(src), "--value-columns", "a", "--output-dir", str(tmp_path), "--per-capita"]) == 3

    def test_missing_column_exit_2(self, tmp_path):
        src = tmp_path / "p.csv"
        src.write_text("id,time,a\nx,0,1\n")
        assert main(["stream", str(src), "--value-columns", "zz", "--output-dir", str(tmp_path)]) == 2


class TestEval:
    def setup_files(self, tmp_path, scores, truth):
        s, t = tmp_path / "s.txt", tmp_path / "t.txt"
        s.write_text("\n".join(repr(float(v)) for v in scores) + "\n")
        t.write_text("\n".join(str(v) for v in truth) + "\n")
        return s, t

    def metrics(self, capsys):
        out = capsys.readouterr().out
        return dict(ln.split("\t") for ln in out.splitlines() if ln and not ln.startswith("#") and ln.count("\t") == 1)

    def test_perfect_and_inverted(self, tmp_path, capsys):
        s, t = self.setup_files(tmp_path, [0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert main(["eval", str(s), "--truth", str(t)]) == 0
        m = self.metrics(capsys)
        assert float(m["auc"]) == 1.0 and m["top_k_tp"] == "2"
        s, t = self.setup_files(tmp_path, [0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0])
        main(["eval", str(s), "--truth", str(t)])
        assert float(self.metrics(capsys)["auc"]) == 0.0

    def test_agrees_with_library(self, tmp_path, capsys, rng):
        scores, truth = rng.random(200), rng.integers(0, 2, 200)
        s, t = self.setup_files(tmp_path, scores, truth)
        main(["eval", str(s), "--truth", str(t), "--roc", "--compare", str(s)])
        out = capsys.readouterr().out
        m = dict(ln.split("\t") for ln in out.splitlines() if ln and not ln.startswith("#") and ln.count("\t") == 1)
        assert float(m["auc"]) == roc_auc(scores, truth).auc
        assert float(m["auc_difference"]) == 0.0
        assert "fpr\ttpr" in out

    def test_detect_output_with_labeled_input(self, tmp_path, capsys, matrix_file):
        path, _, labels = matrix_file
        out = tmp_path / "o.csv"
        main(["detect", str(path), "--label-column", "label", "-o", str(out)])
        capsys.readouterr()
        assert main(["eval", str(out), "--labeled", str(path), "--label-column", "label"]) == 0
        m = self.metrics(capsys)
        assert float(m["auc"]) == roc_auc(read_score_file(out), labels).auc

    def test_misaligned_exit_2(self, tmp_path):
        s, t = self.setup_files(tmp_path, [0.1, 0.2, 0.3], [1, 0])
        assert main(["eval", str(s), "--truth", str(t)]) == 2

    def test_requires_truth(self, tmp_path):
        s, _ = self.setup_files(tmp_path, [0.1], [1])
        assert main(["eval", str(s)]) == 3


class TestBench:
    def test_rows_sweep_shape(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--rows-sweep", "--rows", "1000,2000,4000,8000", "--repeats", "1", "-o", str(out)]) == 0
        rows = body(out)
        assert rows[0] == "n,d,seconds" and len(rows) == 5
        assert all(r.split(",")[1] == "29" for r in rows[1:])
        assert "# loglog_slope:" in out.read_text()

    def test_dims_sweep_protocol(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--dims-sweep", "--fixed-n", "500", "--repeats", "1", "-o", str(out)]) == 0
        assert [int(r.split(",")[1]) for r in body(out)[1:]] == list(range(1, 30))

    def test_bad_sweep(self):
        assert main(["bench", "--rows-sweep", "--rows", "0,10"]) == 3
        assert main(["bench", "--rows-sweep", "--repeats", "0"]) == 3

    def test_slope_helper(self):
        assert loglog_slope([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)


def test_module_entry_point(tmp_path):
    src = tmp_path / "toy.csv"
    src.write_text("1,2\n3,4\n50,6\n")
    res = subprocess.run([sys.executable, "-m", "lad", "detect", str(src)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "id,score,flag" in res.stdout
