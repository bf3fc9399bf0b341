"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error. Every command writes a
``*.run.json`` record of its inputs (with content hashes), options and the
tool version next to its outputs; data files never contain timestamps.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import LinearModel, correlation_matrix, fit_ols, predict
from .datasets import (
    SW_PANEL,
    build_system_wise,
    build_topic_wise,
    clean,
    concat_tables,
    parse_aggregates,
    required_bases,
    table_from_csv,
    table_to_csv,
)
from .errors import DataError, MetricLabError, UsageError
from .experiments import (
    HIGH_COST,
    CollectionSplit,
    DepthConfig,
    best_subset_search,
    build_lowcost_tables,
    collection_tables,
    load_collection,
    load_manifest,
    lowcost_search,
    report,
    results_from_csv,
    results_from_json,
)
from .metrics import TW_PANEL, parse_metrics
from .trec_io import dedup_runs, read_qrels, read_runs

logger = logging.getLogger("metriclab")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Output plumbing


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _describe_inputs(paths) -> list[dict]:
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            out.append({"path": str(f), "sha256": _sha256(f)})
    return out


@contextlib.contextmanager
def _locked(target: Path):
    """Refuse concurrent invocations writing to the same output location."""
    lock = target / ".metriclab.lock" if target.is_dir() else target.with_name(target.name + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(f"output {target} is locked by another invocation ({lock})") from None
    try:
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _options(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def _write_file(path: Path, files: dict[str, str], args, inputs) -> None:
    """Write ``files`` (names relative to ``path``'s parent or inside a directory) plus the run record."""
    record = {
        "tool": "metriclab",
        "version": __version__,
        "command": args.command,
        "options": _options(args),
        "inputs": _describe_inputs(inputs),
        "outputs": sorted(files),
    }
    for name, text in files.items():
        with open(path / name if path.is_dir() else path.parent / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    run_name = "run.json" if path.is_dir() else path.name + ".run.json"
    with open((path if path.is_dir() else path.parent) / run_name, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _emit_file(args, text: str, inputs) -> None:
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with _locked(out):
        _write_file(out, {out.name: text}, args, inputs)


def _emit_dir(args, files: dict[str, str], inputs) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    with _locked(out):
        _write_file(out, files, args, inputs)


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


# ---------------------------------------------------------------------------
# Commands


def cmd_eval(args) -> None:
    rs = read_runs(args.runs)
    if args.dedup:
        rs, removed = dedup_runs(rs)
        for tag in removed:
            logger.warning("removed duplicate run %s", tag)
    js = read_qrels(args.qrels)
    collection = args.collection or Path(args.qrels).stem
    if args.per_topic:
        names = args.metrics or "tw-panel"
        specs = list(TW_PANEL) if names == "tw-panel" else parse_metrics(names)
        table = build_topic_wise(rs, js, specs, collection)
    else:
        names = args.metrics or "sw-panel"
        if names == "tw-panel":
            raise UsageError("tw-panel is a per-topic panel; add --per-topic")
        aggs = list(SW_PANEL) if names == "sw-panel" else parse_aggregates(names)
        tw = build_topic_wise(rs, js, required_bases(aggs), collection)
        table = build_system_wise(tw, aggs, strict=args.strict)
    _emit_file(args, table_to_csv(table), [args.runs, args.qrels])


def _read_table(path: str):
    p = Path(path)
    return table_from_csv(p.read_text(encoding="utf-8"), p.stem)


def cmd_correlate(args) -> None:
    tables = []
    for path in args.tables:
        t, rep = clean(_read_table(path), drop_zero_rows=args.drop_zero_rows)
        for key, reason in rep.removed:
            logger.info("%s: dropped row %s (%s)", path, "/".join(key), reason)
        tables.append(t)
    columns = parse_metric_columns(args.metrics, tables[0].columns)
    files = {}
    matrices = [("", correlation_matrix(tables, columns, pooled=not args.average))]
    if args.per_collection:
        matrices += [(f"_{_safe(t.collection_id)}", correlation_matrix(t, columns)) for t in tables]
    for suffix, m in matrices:
        for label in m.undefined:
            logger.warning("correlation undefined for constant column %s%s", label, suffix and f" ({suffix[1:]})")
        files[f"correlation{suffix}.csv"] = m.to_csv()
        files[f"heatmap{suffix}.csv"] = m.to_long_csv()
    _emit_dir(args, files, args.tables)


def parse_metric_columns(names: str | None, available) -> list[str]:
    if not names:
        return list(available)
    cols = [n.strip() for n in names.split(",") if n.strip()]
    missing = [c for c in cols if c not in available]
    if missing:
        raise UsageError(f"columns not in table: {', '.join(missing)}")
    return cols


def cmd_fit(args) -> None:
    tables = [clean(_read_table(p), drop_zero_rows=False)[0] for p in args.tables]
    train = concat_tables(tables) if len(tables) > 1 else tables[0]
    predictors = [p.strip() for p in args.predictors.split(",") if p.strip()]
    model = fit_ols(train, args.target, predictors)
    if model.collinear:
        logger.warning("design matrix is rank deficient; minimum-norm solution returned")
    _emit_file(args, json.dumps(model.to_dict(), indent=2) + "\n", args.tables)


def cmd_predict(args) -> None:
    try:
        model = LinearModel.from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"invalid model file {args.model}: {exc}") from None
    table = _read_table(args.table)
    missing = [p for p in model.predictors if p not in table.columns]
    if missing:
        raise DataError(f"table lacks predictor columns {missing}")
    complete = ~np.isnan(table.matrix(list(model.predictors))).any(axis=1)
    table = table.select_rows(complete)
    yhat = predict(model, table)
    actual = table.column(model.target) if model.target in table.columns else None
    lines = [",".join(list(table.key_names) + ["predicted"] + (["actual"] if actual is not None else []))]
    for i, key in enumerate(table.row_keys):
        row = list(key) + [f"{yhat[i]:.6f}"]
        if actual is not None:
            row.append("" if np.isnan(actual[i]) else f"{actual[i]:.6f}")
        lines.append(",".join(row))
    _emit_file(args, "\n".join(lines) + "\n", [args.model, args.table])


def _parse_sizes(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            sizes = list(range(lo, hi + 1))
        else:
            sizes = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --n value {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise UsageError(f"bad --n value {text!r}")
    return sizes


def _parse_depths(text: str) -> list[int]:
    try:
        depths = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --depths value {text!r}") from None
    return depths


def _manifest_inputs(manifest) -> list:
    paths = [manifest.path]
    for cid in manifest.split.collections:
        src = manifest.collections[cid]
        paths += [src.runs, src.qrels]
    return paths


def _result_files(results) -> dict[str, str]:
    return {
        "results.csv": report(results, "csv"),
        "results.json": report(results, "json"),
        "report.md": report(results, "markdown"),
    }


def cmd_search(args) -> None:
    manifest = load_manifest(args.manifest)
    names = [a.name for a in SW_PANEL]
    target_text = args.target or (",".join(manifest.targets) if manifest.targets else "all")
    targets = names if target_text == "all" else [a.name for a in parse_aggregates(target_text)]
    for t in targets:
        if t not in names:
            raise UsageError(f"target {t} is not in the system-wise panel")
    sizes = _parse_sizes(args.n) if args.n else list(manifest.n or [1, 2, 3])
    tables = collection_tables(manifest)
    results = [best_subset_search(tables, manifest.split, t, n) for t in targets for n in sizes]
    files = _result_files(results)
    for cid, t in tables.items():
        files[f"sw_{_safe(cid)}.csv"] = table_to_csv(t)
    _emit_dir(args, files, _manifest_inputs(manifest))


def cmd_lowcost(args) -> None:
    manifest = load_manifest(args.manifest)
    depths = _parse_depths(args.depths) if args.depths else list(manifest.depths or [10, 20, 30, 40, 50])
    pooled = args.pooled_qrels if args.pooled_qrels is not None else (
        manifest.pooled_qrels if manifest.pooled_qrels is not None else True)
    high = list(HIGH_COST)
    if args.target and args.target != "all":
        wanted = [a.name for a in parse_aggregates(args.target)]
        unknown = [w for w in wanted if w not in [h.name for h in high]]
        if unknown:
            raise UsageError(f"not a high-cost measure: {', '.join(unknown)}")
        high = [h for h in high if h.name in wanted]
    cfg = DepthConfig(depths=depths, high_cost=high, pooled_qrels=pooled)
    runs, qrels = {}, {}
    for cid in manifest.split.collections:
        runs[cid], qrels[cid] = load_collection(manifest.collections[cid])
    high_tables, by_depth = build_lowcost_tables(runs, qrels, manifest.split.collections, cfg)
    results = lowcost_search(by_depth, manifest.split, cfg)
    files = _result_files(results)
    for cid, t in high_tables.items():
        files[f"highcost_{_safe(cid)}.csv"] = table_to_csv(t)
    for depth, tables in by_depth.items():
        for cid, t in tables.items():
            files[f"lowcost_D{depth}_{_safe(cid)}.csv"] = table_to_csv(t)
    _emit_dir(args, files, _manifest_inputs(manifest))


def cmd_report(args) -> None:
    text = Path(args.results).read_text(encoding="utf-8")
    try:
        results = results_from_csv(text) if args.results.endswith(".csv") else results_from_json(text)
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"cannot read results {args.results}: {exc}") from None
    out = report(results, args.format)
    if args.output:
        _emit_file(args, out, [args.results])
    else:
        sys.stdout.write(out)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metriclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"metriclab {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="score runs against judgments")
    p.add_argument("--runs", required=True, help="run file or directory of run files")
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", help="comma-separated names, or tw-panel / sw-panel")
    p.add_argument("--per-topic", action="store_true", help="topic-wise table instead of system means")
    p.add_argument("--collection", help="collection id (default: qrels file stem)")
    p.add_argument("--strict", action="store_true", help="drop systems missing any topic")
    p.add_argument("--dedup", action="store_true", help="remove runs identical to another run")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", help="Pearson correlation between table columns")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--metrics", help="subset of columns (default: all)")
    p.add_argument("--per-collection", action="store_true", help="also write one matrix per table")
    p.add_argument("--average", action="store_true", help="average per-table matrices instead of pooling rows")
    p.add_argument("--drop-zero-rows", action="store_true")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="fit a linear model on system-wise tables")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--predictors", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a fitted model to a table")
    p.add_argument("--model", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("search", help="best predictor subsets of size N")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", help="measure name(s) or 'all'")
    p.add_argument("--n", help="size, list '1,2' or range '1..3'")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("lowcost", help="predict deep measures from shallow ones")
    p.add_argument("--manifest", required=True)
    p.add_argument("--depths", help="comma-separated evaluation depths")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pooled-qrels", dest="pooled_qrels", action="store_true", default=None)
    g.add_argument("--full-qrels", dest="pooled_qrels", action="store_false")
    p.add_argument("--target", help="high-cost measure name(s) or 'all'")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_lowcost)

    p = sub.add_parser("report", help="render saved results")
    p.add_argument("--results", required=True, help="results.json or results.csv")
    p.add_argument("--format", choices=["markdown", "csv", "json"], default="markdown")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except UsageError as exc:
        print(f"metriclab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MetricLabError, OSError) as exc:
        print(f"metriclab {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
