"""Command-line interface: ``lad detect | stream | eval | bench``.

Every output table is UTF-8 delimiter-separated text preceded by a block of
``#`` lines recording the run manifest.  Exit codes: 0 success, 2 input
error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import timeit
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from lad import __version__
from lad.config import LadConfig
from lad.detector import fit
from lad.errors import ConfigError, LadError
from lad.evaluation import confusion, read_score_file, roc_auc, score_file_compare, top_k_labels
from lad.ingest import PanelSpec, diff_to_new_counts, load_matrix, load_panel, per_capita
from lad.synthetic import gaussian_matrix
from lad.temporal import run

logger = logging.getLogger("lad")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    input_digest: str | None = None
    seed: int | None = None
    tool_version: str = __version__
    extra: dict = field(default_factory=dict)

    def header(self) -> str:
        lines = [
            f"# command: {self.command}",
            f"# tool_version: {self.tool_version}",
            f"# input_digest: {self.input_digest or 'none'}",
            f"# seed: {'none' if self.seed is None else self.seed}",
            f"# config: {json.dumps(self.config, sort_keys=True)}",
        ]
        lines += [f"# {k}: {v}" for k, v in self.extra.items()]
        return "\n".join(lines) + "\n"


def file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return "sha256:" + h.hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: configuration error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    out = []
    for part in _csv_list(text):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    defaults = LadConfig()
    g = p.add_argument_group("LAD configuration")
    g.add_argument("--initial-threshold", type=float, default=defaults.initial_threshold)
    g.add_argument("--quantile-level", type=float, default=defaults.quantile_level)
    g.add_argument("--n-iter", type=int, default=defaults.n_iter)
    g.add_argument("--epsilon", type=float, default=defaults.epsilon)
    g.add_argument("--min-unflagged-fraction", type=float, default=defaults.min_unflagged_fraction)
    g.add_argument("--early-stop", action=argparse.BooleanOptionalAction, default=None,
                   help="stop once labels stop changing (default: on, off for bench)")
    g.add_argument("--threads", type=int, default=1, help="worker threads used inside a scoring pass")


def _config(args, early_stop_default: bool = True) -> LadConfig:
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    return LadConfig(
        initial_threshold=args.initial_threshold,
        quantile_level=args.quantile_level,
        n_iter=args.n_iter,
        epsilon=args.epsilon,
        min_unflagged_fraction=args.min_unflagged_fraction,
        early_stop=early_stop_default if args.early_stop is None else args.early_stop,
    )


def _open_out(path: str | None) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8", newline="")


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_detect(args) -> int:
    cfg = _config(args)
    matrix = load_matrix(args.input, args.label_column, id_column=args.id_column, delimiter=args.delimiter)
    state = fit(matrix, cfg, n_jobs=args.threads)
    ids = matrix.row_ids or tuple(str(i) for i in range(matrix.shape[0]))
    manifest = RunManifest("detect", cfg.as_dict(), file_digest(args.input),
                           extra={"threshold": _fmt(state.threshold), "iterations_run": state.iterations_run})
    sep = args.output_delimiter
    out = _open_out(args.output)
    try:
        out.write(manifest.header())
        out.write(sep.join(["id", "score", "flag"]) + "\n")
        for i, s, f in zip(ids, state.scores, state.flags):
            out.write(f"{i}{sep}{_fmt(s)}{sep}{int(f)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_stream(args) -> int:
    cfg = _config(args)
    if args.window < 0:
        raise ConfigError(f"--window must be >= 0, got {args.window}")
    if args.per_capita and not args.population_column:
        raise ConfigError("--per-capita needs --population-column")
    try:
        spec = PanelSpec(
            value_columns=_csv_list(args.value_columns),
            id_column=args.id_column,
            time_column=args.time_column,
            population_column=args.population_column,
            min_population=args.min_population,
            trim_leading=args.trim_leading,
        )
    except LadError as exc:
        raise ConfigError(str(exc)) from exc
    panel = load_panel(args.input, spec, delimiter=args.delimiter)
    clamped = 0
    if args.mode == "new":
        panel, clamped = diff_to_new_counts(panel)
    if args.per_capita:
        panel = per_capita(panel)
    window = None if args.history == "full" else args.window
    result = run(panel, cfg, window, threshold_carry=args.threshold_carry, n_jobs=args.threads)

    manifest = RunManifest(
        "stream",
        {**cfg.as_dict(), "window": "full" if window is None else window, "mode": args.mode,
         "threshold_carry": args.threshold_carry, "per_capita": args.per_capita,
         "min_population": args.min_population if args.population_column else None,
         "trim_leading": args.trim_leading},
        file_digest(args.input),
        extra={"series": panel.series_count, "steps": panel.length, "clamped_differences": clamped},
    )
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    sep = args.output_delimiter
    times = panel.times or tuple(str(t) for t in range(panel.length))
    with open(outdir / "scores.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest.header())
        fh.write(sep.join(["id", "t", "score", "flag"]) + "\n")
        for n, sid in enumerate(result.series_ids):
            for t, label in enumerate(times):
                fh.write(f"{sid}{sep}{label}{sep}{_fmt(result.scores[n, t])}{sep}{int(result.flags[n, t])}\n")
    ranking = result.ranking()
    with open(outdir / "aggregate.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest.header())
        fh.write(sep.join(["rank", "id", "aggregate", "flagged_steps", "effective_length"]) + "\n")
        for r, n in enumerate(ranking, start=1):
            fh.write(sep.join([str(r), result.series_ids[n], _fmt(result.aggregate[n]),
                               str(int(result.flags[n].sum())), str(int(panel.effective_lengths[n]))]) + "\n")
    with open(outdir / "thresholds.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest.header())
        fh.write(sep.join(["t", "threshold"]) + "\n")
        for label, th in zip(times, result.thresholds):
            fh.write(f"{label}{sep}{_fmt(th)}\n")
    for r, n in enumerate(ranking[: args.top], start=1):
        print(f"{r}\t{result.series_ids[n]}\t{result.aggregate[n]:.6f}")
    return EXIT_OK


def _truth_from(args) -> np.ndarray:
    if args.truth:
        truth = read_score_file(args.truth)
        if not np.isin(truth, (0.0, 1.0)).all():
            raise LadError(f"{args.truth}: truth values must be 0 or 1")
        return truth.astype(np.int8)
    matrix = load_matrix(args.labeled, args.label_column, delimiter=args.delimiter)
    if matrix.labels is None:
        raise ConfigError("--labeled needs --label-column")
    return matrix.labels


def cmd_eval(args) -> int:
    if not (args.truth or args.labeled):
        raise ConfigError("one of --truth or --labeled is required")
    scores = read_score_file(args.scores)
    truth = _truth_from(args)
    if scores.size != truth.size:
        raise LadError(f"{scores.size} scores but {truth.size} truth labels")
    curve = roc_auc(scores, truth)
    k = int(truth.sum())
    cm = confusion(top_k_labels(scores, k), truth)
    inputs = [args.scores, args.truth or args.labeled] + ([args.compare] if args.compare else [])
    manifest = RunManifest("eval", {"label_column": args.label_column}, file_digest(*inputs))
    out = sys.stdout
    out.write(manifest.header())
    out.write(f"auc\t{_fmt(curve.auc)}\n")
    out.write(f"rank_auc\t{_fmt(curve.rank_auc)}\n")
    out.write(f"k\t{k}\n")
    out.write(f"top_k_tp\t{cm.tp}\ntop_k_fp\t{cm.fp}\ntop_k_tn\t{cm.tn}\ntop_k_fn\t{cm.fn}\n")
    if args.compare:
        report = score_file_compare(curve, args.compare, truth)
        out.write(f"external_auc\t{_fmt(report.external_auc)}\n")
        out.write(f"auc_difference\t{_fmt(report.difference)}\n")
    if args.roc:
        out.write("fpr\ttpr\n")
        for f, t in curve.points:
            out.write(f"{_fmt(f)}\t{_fmt(t)}\n")
    return EXIT_OK


def loglog_slope(sizes, seconds) -> float:
    """Least-squares slope of log(seconds) against log(size)."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(seconds, float)), 1)[0])


def bench_sweep(points, cfg: LadConfig, repeats: int, seed: int, n_jobs: int = 1,
                min_time: float = 0.05) -> list[float]:
    """Median wall time of one ``fit`` for each ``(n, d)`` point.

    A timed warm-up sizes each point's loop so a repeat lasts at least
    ``min_time`` seconds.  Repeats are interleaved across points, so a
    machine that slows down mid-sweep affects every point alike.
    """
    timers, numbers = [], []
    for i, (n, d) in enumerate(points):
        x = gaussian_matrix(n, d, seed + i)
        timer = timeit.Timer(lambda x=x: fit(x, cfg, n_jobs=n_jobs))
        timers.append(timer)
        numbers.append(max(1, math.ceil(min_time / max(timer.timeit(1), 1e-9))))
    runs = [[] for _ in points]
    for _ in range(repeats):
        for i, timer in enumerate(timers):
            runs[i].append(timer.timeit(numbers[i]) / numbers[i])
    return [float(np.median(r)) for r in runs]


def cmd_bench(args) -> int:
    cfg = _config(args, early_stop_default=False)
    if args.repeats < 1:
        raise ConfigError(f"--repeats must be >= 1, got {args.repeats}")
    if args.dims_sweep:
        sweep = args.dims or list(range(1, 30))
        points = [(args.fixed_n, d) for d in sweep]
    else:
        sweep = args.rows or [1000, 2000, 4000, 8000]
        points = [(n, args.fixed_d) for n in sweep]
    if any(v < 1 for pt in points for v in pt):
        raise ConfigError("sweep bounds must be positive")
    if len(points) < 2:
        raise ConfigError("a sweep needs at least two points")
    timings = bench_sweep(points, cfg, args.repeats, args.seed, args.threads)
    slope = loglog_slope(sweep, timings)
    manifest = RunManifest("bench", cfg.as_dict(), None, args.seed,
                           extra={"sweep": "dims" if args.dims_sweep else "rows", "repeats": args.repeats})
    sep = args.output_delimiter
    out = _open_out(args.output)
    try:
        out.write(manifest.header())
        out.write(sep.join(["n", "d", "seconds"]) + "\n")
        for (n, d), s in zip(points, timings):
            out.write(f"{n}{sep}{d}{sep}{s:.6e}\n")
        out.write(f"# loglog_slope: {slope:.4f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lad", description="Large-deviations anomaly detection")
    parser.add_argument("--version", action="version", version=f"lad {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="score the rows of a matrix file")
    p.add_argument("input")
    p.add_argument("--label-column", help="ground-truth column (name or index), excluded from features")
    p.add_argument("--id-column", help="row identifier column (name or index), excluded from features")
    p.add_argument("--delimiter", help="input delimiter (default: detect)")
    p.add_argument("--output-delimiter", default=",")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("stream", help="score a long-format time-series panel")
    p.add_argument("input")
    p.add_argument("--value-columns", required=True, help="comma-separated feature columns")
    p.add_argument("--id-column", default="id")
    p.add_argument("--time-column", default="time")
    p.add_argument("--population-column")
    p.add_argument("--min-population", type=int, default=50_000)
    p.add_argument("--per-capita", action="store_true", help="divide counts by population")
    p.add_argument("--trim-leading", action="store_true", help="start each series at its first nonzero step")
    p.add_argument("--mode", choices=("total", "new"), default="total")
    p.add_argument("--history", choices=("step", "full"), default="step")
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--threshold-carry", choices=("reset", "carry"), default="reset")
    p.add_argument("--delimiter")
    p.add_argument("--output-delimiter", default=",")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--top", type=int, default=10, help="ranked series printed to stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("eval", help="ROC-AUC and top-k counts of a score file")
    p.add_argument("scores")
    p.add_argument("--truth", help="single-column 0/1 file")
    p.add_argument("--labeled", help="matrix file carrying the labels")
    p.add_argument("--label-column")
    p.add_argument("--delimiter")
    p.add_argument("--compare", help="external score file to compare against")
    p.add_argument("--roc", action="store_true", help="print the ROC points")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time fit on synthetic Gaussian data")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--rows-sweep", action="store_true")
    mode.add_argument("--dims-sweep", action="store_true")
    p.add_argument("--rows", type=_int_list, help="row counts, e.g. 1000,2000,4000,8000")
    p.add_argument("--dims", type=_int_list, help="dimensions, e.g. 1-29")
    p.add_argument("--fixed-d", type=int, default=29)
    p.add_argument("--fixed-n", type=int, default=10_000)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-delimiter", default=",")
    p.add_argument("-o", "--output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lad {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LadError, OSError) as exc:
        print(f"lad {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
