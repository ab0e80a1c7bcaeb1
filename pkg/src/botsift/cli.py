"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .capture import AssemblyConfig, CaptureError, ConfigError, assemble_flows, label_flows, \
    read_capture, read_label_rules
from .dataset import DatasetError, format_csv, from_flows, holdout_split, project, \
    quasi_balance, read_csv
from .evaluation import SUBSETS, EvalReport, benchmark_latency, confusion_matrix, \
    evaluate_subsets, performance_ratio, prf1
from .features import FEATURE_NAMES
from .models import ForestParams, ModelFormatError, ModelSpec, derive_seed, fit, load_model, \
    save_model
from .ranking import feature_curve, rank_features, score_features

SEED_ENV = "BOTSIFT_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    output: str | None = None
    seed: int = 0
    model: str = "dt"
    m: int = 10
    k: int = 1
    depth: int | None = None
    min_split: int = 2
    method: str = "gi"
    bins: int = 10
    folds: int = 10
    cap: int | None = None
    subset: str | None = None
    features: list[str] | None = None
    fmt: str = "csv"
    labels: str | None = None
    default_label: str | None = None
    min_packets: int = 2
    idle_timeout: float = 300.0
    no_rst: bool = False
    holdout: float = 0.1
    warmup: int = 3
    passes: int = 10
    model_file: str | None = None

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise UsageError(msg)

        need(bool(self.inputs), "--input is required")
        need(self.m >= 1, "--m must be >= 1")
        need(self.k >= 1, "--k must be >= 1")
        need(self.depth is None or self.depth >= 0, "--depth must be >= 0")
        need(self.min_split >= 2, "--min-split must be >= 2")
        need(self.bins >= 2, "--bins must be >= 2")
        need(self.folds >= 2, "--folds must be >= 2")
        need(self.min_packets >= 1, "--min-packets must be >= 1")
        need(self.idle_timeout > 0, "--idle-timeout must be positive")
        need(0 < self.holdout < 1, "--holdout must be in (0, 1)")
        need(self.warmup >= 0 and self.passes >= 1, "--warmup must be >= 0 and --passes >= 1")
        need(not (self.subset and self.features), "--subset and --features are mutually exclusive")
        if self.features is not None:
            need(bool(self.features), "--features needs at least one name")
            unknown = [f for f in self.features if f not in FEATURE_NAMES]
            need(not unknown, f"unknown feature(s): {', '.join(unknown)}")
        if self.command == "extract":
            need(self.labels is not None, "extract requires --labels")
            need(self.fmt == "csv", "extract writes CSV only")
        if self.command == "balance":
            need(self.cap is not None and self.cap >= 1, "balance requires --cap >= 1")
            need(self.fmt == "csv", "balance writes CSV only")
        if self.command in ("train", "report"):
            need(self.output is not None, f"{self.command} requires --output")
        if self.command not in ("extract", "report"):
            need(len(self.inputs) == 1, f"{self.command} takes exactly one --input")

    def feature_list(self) -> tuple[str, ...]:
        if self.features:
            return tuple(self.features)
        return SUBSETS[self.subset or "all"]

    def subset_name(self) -> str:
        return self.subset or ("custom" if self.features else "all")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model, m=self.m, k=self.k, max_depth=self.depth,
                         min_samples_split=self.min_split)


def _build_parser() -> _Parser:
    parser = _Parser(prog="botsift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"botsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, *, multi_input: bool = False) -> None:
        p.add_argument("--input", "-i", action="append", default=[],
                       help="input file" + (" (repeatable)" if multi_input else ""))
        p.add_argument("--output", "-o", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV}, then 0)")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")

    def model_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--model", choices=("dt", "rf", "knn"), default="dt")
        p.add_argument("--m", type=int, default=10, help="trees in a random forest")
        p.add_argument("--k", type=int, default=1, help="neighbours for k-NN")
        p.add_argument("--depth", type=int, default=None, help="max tree depth (default unlimited)")
        p.add_argument("--min-split", type=int, default=2)

    def subset_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--subset", choices=tuple(SUBSETS))
        p.add_argument("--features", type=lambda s: [f for f in s.split(",") if f],
                       help="comma-separated feature names")

    def bench_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--holdout", type=float, default=0.1)
        p.add_argument("--warmup", type=int, default=3)
        p.add_argument("--passes", type=int, default=10)

    p = sub.add_parser("extract", help="captures + label rules -> dataset CSV")
    common(p, multi_input=True)
    p.add_argument("--labels", required=True, help="label rules file")
    p.add_argument("--default-label", help="label for unmatched flows (default: drop them)")
    p.add_argument("--min-packets", type=int, default=2)
    p.add_argument("--idle-timeout", type=float, default=300.0)
    p.add_argument("--no-rst", action="store_true", help="do not end flows on RST")

    p = sub.add_parser("balance", help="cap class sizes of a dataset CSV")
    common(p)
    p.add_argument("--cap", type=int, required=True)

    p = sub.add_parser("rank", help="feature importance scores")
    common(p)
    p.add_argument("--method", choices=("gi", "ig"), default="gi")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--m", type=int, default=10, help="forest size for Gini importance")
    subset_flags(p)

    p = sub.add_parser("curve", help="F1 versus number of ranked features")
    common(p)
    p.add_argument("--method", choices=("gi", "ig"), default="gi")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--folds", type=int, default=10)
    model_flags(p)

    p = sub.add_parser("train", help="train a model file")
    common(p)
    model_flags(p)
    subset_flags(p)

    p = sub.add_parser("evaluate", help="cross-validated report with latency")
    common(p)
    model_flags(p)
    subset_flags(p)
    bench_flags(p)
    p.add_argument("--folds", type=int, default=10)

    p = sub.add_parser("bench", help="classification latency and performance")
    common(p)
    model_flags(p)
    subset_flags(p)
    bench_flags(p)
    p.add_argument("--model-file", help="trained model (else trained on the non-holdout part)")

    p = sub.add_parser("report", help="merge evaluation reports into tables")
    common(p, multi_input=True)
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    ns = _build_parser().parse_args(list(argv))
    values = {k: v for k, v in vars(ns).items() if k != "input"}
    seed = values.pop("seed", None)
    if seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    config = RunConfig(inputs=ns.input, seed=seed, **values)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _meta(config: RunConfig) -> dict[str, Any]:
    return {"tool": "botsift", "version": __version__, "seed": config.seed}


def _emit(config: RunConfig, text: str, path: str | None = None) -> None:
    target = path or config.output
    if target:
        Path(target).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_text(config: RunConfig, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# botsift {__version__} seed={config.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else ("%.17g" % v if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _json_text(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_extract(config: RunConfig) -> None:
    rules = read_label_rules(config.labels)
    asm = AssemblyConfig(config.idle_timeout, not config.no_rst)
    labeled = []
    for path in config.inputs:
        flows = assemble_flows(read_capture(path), asm)
        labeled.extend(label_flows(flows, rules, config.default_label))
    _emit(config, format_csv(from_flows(labeled, config.min_packets), _meta(config)))


def cmd_balance(config: RunConfig) -> None:
    ds = quasi_balance(read_csv(config.inputs[0]), config.cap, config.seed)
    _emit(config, format_csv(ds, _meta(config)))


def cmd_rank(config: RunConfig) -> None:
    ds = project(read_csv(config.inputs[0]), config.feature_list())
    scores = score_features(ds, config.method, bins=config.bins,
                            forest_params=ForestParams(m=config.m), seed=config.seed)
    if config.fmt == "json":
        doc = dict(_meta(config), method=config.method, bins=config.bins, m=config.m,
                   scores=scores.as_dict())
        _emit(config, _json_text(doc))
    else:
        _emit(config, _csv_text(config, ("feature", "score"),
                                zip(scores.features, scores.scores)))


def cmd_curve(config: RunConfig) -> None:
    ds = read_csv(config.inputs[0])
    ranking = rank_features(ds, config.method, bins=config.bins,
                            forest_params=ForestParams(m=config.m), seed=config.seed)
    spec = config.model_spec()
    curve = feature_curve(ds, ranking, spec, config.folds, config.seed)
    if config.fmt == "json":
        doc = dict(_meta(config), method=curve.method, model=curve.model, folds=config.folds,
                   points=[{"n": n, "feature_added": f, "f1": s} for n, f, s in curve.rows()])
        _emit(config, _json_text(doc))
    else:
        _emit(config, _csv_text(config, ("n", "feature_added", "f1"), curve.rows()))


def cmd_train(config: RunConfig) -> None:
    ds = project(read_csv(config.inputs[0]), config.feature_list())
    model = fit(config.model_spec(), ds, config.seed)
    save_model(model, config.output, meta=dict(_meta(config), subset=config.subset_name()))


def _report_out(config: RunConfig, reports: list[EvalReport]) -> None:
    if config.fmt == "json":
        docs = [r.to_dict() for r in reports]
        _emit(config, _json_text(docs[0] if len(docs) == 1 else docs))
        return
    rows = []
    for r in reports:
        for row in r.table_rows():
            rows.append((r.model, r.subset, row["class"], row["f1"], row["recall"],
                         row["precision"], row["performance"]))
    _emit(config, _csv_text(config, ("model", "subset", "class", "f1", "recall", "precision",
                                     "performance"), rows))


def cmd_evaluate(config: RunConfig) -> None:
    ds = read_csv(config.inputs[0])
    reports = evaluate_subsets(ds, {config.subset_name(): config.feature_list()},
                               [config.model_spec()], config.folds, config.seed, config.holdout,
                               config.warmup, config.passes)
    _report_out(config, reports)


def cmd_bench(config: RunConfig) -> None:
    ds = read_csv(config.inputs[0])
    if config.model_file:
        model = load_model(config.model_file)
        test = project(ds, model.schema)
        name = type(model).__name__
    else:
        ds = project(ds, config.feature_list())
        train_idx, test_idx = holdout_split(ds, config.holdout, config.seed)
        model = fit(config.model_spec(), ds.subset(train_idx), derive_seed(config.seed, 0))
        test = ds.subset(test_idx)
        name = config.model_spec().name
    lat = benchmark_latency(model, test.X, config.warmup, config.passes)
    metrics = prf1(confusion_matrix(list(test.labels), model.predict(test.X), test.classes))
    doc = dict(_meta(config), model=name, features=list(test.schema), samples=len(test),
               seconds_per_sample=lat.seconds_per_sample, total_seconds=lat.total_seconds,
               classifications=lat.classifications, checksum=lat.checksum,
               weighted_f1=metrics.weighted_f1, macro_f1=metrics.macro_f1,
               performance_weighted=performance_ratio(metrics.weighted_f1, lat.seconds_per_sample),
               performance_macro=performance_ratio(metrics.macro_f1, lat.seconds_per_sample))
    if config.fmt == "json":
        _emit(config, _json_text(doc))
    else:
        keys = [k for k in doc if k not in ("tool", "version", "seed", "features")]
        _emit(config, _csv_text(config, keys, [[doc[k] for k in keys]]))


def cmd_report(config: RunConfig) -> None:
    """Write ``table.csv`` (per-class columns per report),
    ``summary.csv`` and ``summary.json`` into the ``--output`` directory."""
    reports = []
    for path in config.inputs:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        for d in doc if isinstance(doc, list) else [doc]:
            reports.append(EvalReport.from_dict(d))
    if not reports:
        raise DatasetError("no reports to merge")
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)

    tags = [f"{r.model}-{r.subset or 'custom'}" for r in reports]
    classes = list(dict.fromkeys(c for r in reports for c in r.metrics.classes))
    header = ["class"]
    for metric in ("f1", "recall", "precision", "performance"):
        header += [f"{metric}:{t}" for t in tags]
    rows = []
    for c in classes:
        row: list[Any] = [c]
        for metric in ("f1", "recall", "precision", "performance"):
            for r in reports:
                perf = r.performance() or {}
                table = {"f1": r.metrics.f1, "recall": r.metrics.recall,
                         "precision": r.metrics.precision, "performance": perf}[metric]
                row.append(table.get(c))
        rows.append(row)
    (out / "table.csv").write_text(_csv_text(config, header, rows), encoding="utf-8")

    summary = []
    for t, r in zip(tags, reports):
        s = r.seconds_per_sample
        summary.append({"tag": t, "model": r.model, "subset": r.subset,
                        "n_features": len(r.features), "weighted_f1": r.weighted_f1,
                        "macro_f1": r.macro_f1,
                        "us_per_sample": s * 1e6 if s else None,
                        "performance_weighted": performance_ratio(r.weighted_f1, s) if s else None,
                        "performance_macro": performance_ratio(r.macro_f1, s) if s else None})
    keys = list(summary[0])
    (out / "summary.csv").write_text(_csv_text(config, keys, [[d[k] for k in keys] for d in summary]),
                                     encoding="utf-8")
    (out / "summary.json").write_text(_json_text(dict(_meta(config), rows=summary)),
                                      encoding="utf-8")


COMMANDS = {
    "extract": cmd_extract, "balance": cmd_balance, "rank": cmd_rank, "curve": cmd_curve,
    "train": cmd_train, "evaluate": cmd_evaluate, "bench": cmd_bench, "report": cmd_report,
}


def run_cli(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        COMMANDS[config.command](config)
    except (OSError, CaptureError, ConfigError, DatasetError, ModelFormatError, ValueError,
            KeyError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"botsift {config.command}: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
