"""Predicting one system-wise measure from others.

Two experiment drivers share one exhaustive search: every predictor subset
is fit by OLS on the concatenated training collections, scored by Kendall's
tau on the development collection, and the winner is applied unchanged to
each test collection.

* :func:`best_subset_search` - all size-``n`` subsets of the other panel
  measures.
* :func:`lowcost_experiment` - all non-empty subsets of seven shallow
  measures computed at evaluation depth ``D`` (runs truncated to ``D``,
  judgments optionally pooled to depth ``D``), predicting deep measures
  computed from full runs and judgments.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

import jsonschema

from ._parallel import pmap
from .analytics import FitScore, LinearModel, fit_arrays, linear_response, score_fit
from .datasets import (
    SW_PANEL,
    AggregateSpec,
    ScoreTable,
    build_system_wise,
    build_topic_wise,
    clean,
    concat_tables,
    join_tables,
    parse_aggregate,
    required_bases,
)
from .errors import DataError, StatisticsError, UsageError
from .metrics import MetricSpec
from .trec_io import JudgmentSet, RunSet, dedup_runs, pool_judgments, read_qrels, read_runs, truncate

logger = logging.getLogger(__name__)

TAU_THRESHOLD = 0.9
LOW_PREFIX = "low:"

HIGH_COST: tuple[AggregateSpec, ...] = tuple(
    parse_aggregate(n)
    for n in ("P@1000", "P@100", "MAP", "MAP@100", "nDCG@1000", "nDCG@100", "RBP(0.95)@1000", "RBP(0.95)@100")
)

# Cutoffs here are placeholders; each is re-instantiated at the evaluation depth.
LOW_COST: tuple[MetricSpec, ...] = (
    MetricSpec("P"),
    MetricSpec("bpref"),
    MetricSpec("ERR"),
    MetricSpec("infAP"),
    MetricSpec("AP"),
    MetricSpec("nDCG"),
    MetricSpec("RBP", p=0.95),
)


@dataclass(frozen=True)
class CollectionSplit:
    train: tuple[str, ...]
    dev: str
    test: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        if not self.train:
            raise UsageError("split needs at least one training collection")
        names = list(self.train) + [self.dev] + list(self.test)
        if len(set(names)) != len(names):
            raise UsageError("train, dev and test collections must be disjoint")

    @classmethod
    def trec_web_default(cls) -> CollectionSplit:
        return cls(("WT2000", "WT2001", "RT2004", "WT2010", "WT2011"), "WT2012", ("WT2013", "WT2014"))

    @property
    def collections(self) -> tuple[str, ...]:
        return self.train + (self.dev,) + self.test


@dataclass(frozen=True)
class SearchResult:
    target: str
    chosen_predictors: tuple[str, ...]
    model: LinearModel
    dev_collection: str
    dev_score: FitScore
    test_scores: Mapping[str, FitScore]
    depth: int | None = None
    subsets_tried: int = 0

    @property
    def n(self) -> int:
        return len(self.chosen_predictors)


@dataclass(frozen=True)
class DepthConfig:
    depths: tuple[int, ...] = (10, 20, 30, 40, 50)
    high_cost: tuple[AggregateSpec, ...] = HIGH_COST
    low_cost: tuple[MetricSpec, ...] = LOW_COST
    pooled_qrels: bool = True

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(self.depths))
        object.__setattr__(self, "high_cost", tuple(self.high_cost))
        object.__setattr__(self, "low_cost", tuple(self.low_cost))
        if not self.depths or any(d < 1 for d in self.depths):
            raise UsageError("depths must be positive")
        if any(a >= b for a, b in zip(self.depths, self.depths[1:])):
            raise UsageError("depths must be strictly increasing")
        if not self.high_cost:
            raise UsageError("need at least one high-cost measure")
        if not self.low_cost:
            raise UsageError("need at least one low-cost measure")

    def low_cost_at(self, depth: int) -> list[AggregateSpec]:
        return [AggregateSpec(m.at(depth)) for m in self.low_cost]


def _better(a: tuple[float, float, tuple[str, ...]], b: tuple[float, float, tuple[str, ...]] | None) -> bool:
    """Higher dev tau, then higher dev R^2, then lexicographically smaller names."""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] < b[2]


def search_subsets(
    tables: Mapping[str, ScoreTable],
    split: CollectionSplit,
    target: str,
    candidates: Sequence[str],
    sizes: Sequence[int],
) -> SearchResult:
    """Exhaustive search over candidate subsets of the given sizes."""
    candidates = list(candidates)
    if target in candidates:
        raise UsageError(f"target {target} is also a candidate predictor")
    for size in sizes:
        if not 1 <= size <= len(candidates):
            raise UsageError(f"subset size {size} outside 1..{len(candidates)}")
    needed = [target] + candidates
    for name in split.collections:
        if name not in tables:
            raise DataError(f"no table for collection {name}")
        missing = [c for c in needed if c not in tables[name].columns]
        if missing:
            raise DataError(f"collection {name} lacks columns {missing}")

    train = concat_tables([tables[c] for c in split.train])
    X_train = train.matrix(candidates)
    y_train = train.column(target)
    dev = tables[split.dev]
    X_dev = dev.matrix(candidates)
    y_dev = dev.column(target)

    subsets = [combo for size in sizes for combo in combinations(range(len(candidates)), size)]

    def evaluate(combo):
        cols = list(combo)
        coef, intercept, collinear = fit_arrays(X_train[:, cols], y_train)
        pred = linear_response(X_dev[:, cols], coef, intercept)
        try:
            fs = score_fit(y_dev, pred)
        except StatisticsError as exc:
            logger.debug("subset %s skipped: %s", [candidates[i] for i in combo], exc)
            return None
        return fs, coef, intercept, collinear

    best_key = None
    best = None
    for combo, outcome in zip(subsets, pmap(evaluate, subsets)):
        if outcome is None:
            continue
        fs = outcome[0]
        key = (fs.tau, fs.r_squared, tuple(sorted(candidates[i] for i in combo)))
        if _better(key, best_key):
            best_key, best = key, (combo, outcome)
    if best is None:
        raise DataError(f"no predictor subset yields a defined dev score for {target}")

    combo, (dev_score, coef, intercept, collinear) = best
    chosen = tuple(candidates[i] for i in combo)
    model = LinearModel(target, chosen, tuple(float(c) for c in coef), intercept, len(y_train), collinear)
    test_scores = {}
    for name in split.test:
        t = tables[name]
        test_scores[name] = score_fit(t.column(target), model.apply(t.matrix(list(chosen))))
    return SearchResult(target, chosen, model, split.dev, dev_score, test_scores, subsets_tried=len(subsets))


def best_subset_search(
    sw_tables: Mapping[str, ScoreTable],
    split: CollectionSplit,
    target: str,
    n: int,
    candidates: Sequence[str] | None = None,
) -> SearchResult:
    """Best size-``n`` predictor set for ``target``, chosen by dev Kendall's tau.

    ``candidates`` defaults to the other eleven system-wise panel measures.
    """
    if candidates is None:
        candidates = [a.name for a in SW_PANEL if a.name != target]
    return search_subsets(sw_tables, split, target, candidates, [n])


def system_wise(
    rs: RunSet, js: JudgmentSet, aggs: Sequence[AggregateSpec], collection_id: str = "", *, strict: bool = False
) -> ScoreTable:
    tw = build_topic_wise(rs, js, required_bases(aggs), collection_id)
    return build_system_wise(tw, aggs, strict=strict)


def lowcost_table(
    rs: RunSet, js: JudgmentSet, depth: int, cfg: DepthConfig, collection_id: str = ""
) -> ScoreTable:
    """Shallow measures at one depth, from runs truncated (and judgments pooled) to that depth."""
    shallow = truncate(rs, depth)
    judged = pool_judgments(rs, js, depth) if cfg.pooled_qrels else js
    return system_wise(shallow, judged, cfg.low_cost_at(depth), collection_id)


def build_lowcost_tables(
    runs: Mapping[str, RunSet],
    qrels: Mapping[str, JudgmentSet],
    collections: Sequence[str],
    cfg: DepthConfig,
) -> tuple[dict[str, ScoreTable], dict[int, dict[str, ScoreTable]]]:
    """High-cost tables per collection, and cleaned joined tables per depth and collection.

    Joined tables carry the high-cost columns plus the low-cost columns
    prefixed with ``low:``.
    """
    high = {c: system_wise(runs[c], qrels[c], cfg.high_cost, c) for c in collections}
    by_depth: dict[int, dict[str, ScoreTable]] = {}
    for depth in cfg.depths:
        by_depth[depth] = {}
        for c in collections:
            low = lowcost_table(runs[c], qrels[c], depth, cfg, c)
            low = low.rename_columns({name: LOW_PREFIX + name for name in low.columns})
            joined, report = clean(join_tables(high[c], low), drop_zero_rows=True)
            if report:
                logger.info("%s depth %d: removed %d rows while cleaning", c, depth, len(report))
            by_depth[depth][c] = joined
    return high, by_depth


def lowcost_search(
    tables_by_depth: Mapping[int, Mapping[str, ScoreTable]],
    split: CollectionSplit,
    cfg: DepthConfig,
) -> list[SearchResult]:
    results = []
    for depth in cfg.depths:
        tables = tables_by_depth[depth]
        candidates = [LOW_PREFIX + a.name for a in cfg.low_cost_at(depth)]
        sizes = range(1, len(candidates) + 1)
        for target in (a.name for a in cfg.high_cost):
            r = search_subsets(tables, split, target, candidates, sizes)
            results.append(_with_depth(r, depth))
    return results


def _with_depth(r: SearchResult, depth: int) -> SearchResult:
    return SearchResult(r.target, r.chosen_predictors, r.model, r.dev_collection, r.dev_score,
                        r.test_scores, depth, r.subsets_tried)


def lowcost_experiment(
    runs: Mapping[str, RunSet],
    qrels: Mapping[str, JudgmentSet],
    split: CollectionSplit,
    cfg: DepthConfig = DepthConfig(),
) -> list[SearchResult]:
    """One result per (depth, high-cost target), depth-major."""
    for c in split.collections:
        if c not in runs or c not in qrels:
            raise DataError(f"collection {c} missing runs or judgments")
    _high, by_depth = build_lowcost_tables(runs, qrels, split.collections, cfg)
    return lowcost_search(by_depth, split, cfg)


# ---------------------------------------------------------------------------
# Serialization


def _score_dict(collection: str, fs: FitScore) -> dict:
    return {"collection": collection, "tau": fs.tau, "r_squared": fs.r_squared, "n": fs.n}


def result_to_dict(r: SearchResult) -> dict:
    return {
        "target": r.target,
        "depth": r.depth,
        "n": r.n,
        "predictors": list(r.chosen_predictors),
        "model": r.model.to_dict(),
        "subsets_tried": r.subsets_tried,
        "dev": _score_dict(r.dev_collection, r.dev_score),
        "test": [_score_dict(c, fs) for c, fs in r.test_scores.items()],
    }


def result_from_dict(d: dict) -> SearchResult:
    dev = d["dev"]
    return SearchResult(
        d["target"],
        tuple(d["predictors"]),
        LinearModel.from_dict(d["model"]),
        dev["collection"],
        FitScore(float(dev["tau"]), float(dev["r_squared"]), int(dev["n"])),
        {t["collection"]: FitScore(float(t["tau"]), float(t["r_squared"]), int(t["n"])) for t in d["test"]},
        d.get("depth"),
        int(d.get("subsets_tried", 0)),
    )


def results_to_json(results: Sequence[SearchResult]) -> str:
    return json.dumps({"results": [result_to_dict(r) for r in results]}, indent=2) + "\n"


def results_from_json(text: str) -> list[SearchResult]:
    return [result_from_dict(d) for d in json.loads(text)["results"]]


def _collections(results: Sequence[SearchResult]) -> list[str]:
    first = results[0]
    names = [first.dev_collection] + list(first.test_scores)
    for r in results[1:]:
        if [r.dev_collection] + list(r.test_scores) != names:
            raise DataError("results do not share one collection split")
    return names


_CSV_FIXED = ["target", "depth", "n", "predictors", "coefficients", "intercept", "n_train", "collinear", "subsets_tried", "dev"]


def results_to_csv(results: Sequence[SearchResult]) -> str:
    """Full-precision floats so the file round-trips exactly."""
    names = _collections(results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIXED + [f"{c} {field}" for c in names for field in ("tau", "r2", "n")])
    for r in results:
        scores = {r.dev_collection: r.dev_score, **r.test_scores}
        row = [
            r.target, "" if r.depth is None else r.depth, r.n, ";".join(r.chosen_predictors),
            ";".join(repr(c) for c in r.model.coefficients), repr(r.model.intercept), r.model.n_train,
            int(r.model.collinear), r.subsets_tried, r.dev_collection,
        ]
        for c in names:
            row += [repr(scores[c].tau), repr(scores[c].r_squared), scores[c].n]
        w.writerow(row)
    return buf.getvalue()


def results_from_csv(text: str) -> list[SearchResult]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    names = []
    for col in header[len(_CSV_FIXED):]:
        c = col.rsplit(" ", 1)[0]
        if c not in names:
            names.append(c)
    out = []
    for row in body:
        rec = dict(zip(header, row))
        predictors = tuple(p for p in rec["predictors"].split(";") if p)
        coefs = tuple(float(c) for c in rec["coefficients"].split(";") if c)
        model = LinearModel(rec["target"], predictors, coefs, float(rec["intercept"]),
                            int(rec["n_train"]), bool(int(rec["collinear"])))
        scores = {c: FitScore(float(rec[f"{c} tau"]), float(rec[f"{c} r2"]), int(rec[f"{c} n"])) for c in names}
        dev = rec["dev"]
        out.append(SearchResult(
            rec["target"], predictors, model, dev, scores[dev],
            {c: s for c, s in scores.items() if c != dev},
            int(rec["depth"]) if rec["depth"] else None, int(rec["subsets_tried"]),
        ))
    return out


def _cell(x: float, emphasize: bool = False) -> str:
    s = f"{x:.3f}"
    return f"**{s}**" if emphasize else s


def results_to_markdown(results: Sequence[SearchResult]) -> str:
    """Table with one row per result; tau at or above 0.9 is bold."""
    names = _collections(results)
    with_depth = any(r.depth is not None for r in results)
    head = (["Depth"] if with_depth else []) + ["Target", "N", "Predictors", "Coefficients", "Intercept"]
    for c in names:
        head += [f"{c} τ", f"{c} R²"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in results:
        scores = {r.dev_collection: r.dev_score, **r.test_scores}
        cells = ([str(r.depth)] if with_depth else []) + [
            r.target, str(r.n), ", ".join(r.chosen_predictors),
            ", ".join(f"{c:.3f}" for c in r.model.coefficients), f"{r.model.intercept:.3f}",
        ]
        for c in names:
            cells += [_cell(scores[c].tau, scores[c].tau >= TAU_THRESHOLD), _cell(scores[c].r_squared)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report(results: Sequence[SearchResult], format: str = "markdown") -> str:
    if not results:
        raise DataError("no results to report")
    if format == "json":
        return results_to_json(results)
    if format == "csv":
        return results_to_csv(results)
    if format in ("markdown", "md"):
        return results_to_markdown(results)
    raise UsageError(f"unknown report format {format!r}")


# ---------------------------------------------------------------------------
# Experiment manifests


@dataclass(frozen=True)
class CollectionSource:
    runs: Path
    qrels: Path


@dataclass(frozen=True)
class Manifest:
    collections: Mapping[str, CollectionSource]
    split: CollectionSplit
    targets: tuple[str, ...] = ()
    n: tuple[int, ...] = ()
    depths: tuple[int, ...] = ()
    pooled_qrels: bool | None = None
    path: Path | None = field(default=None, compare=False)


def manifest_schema() -> dict:
    return json.loads(resources.files("metriclab").joinpath("manifest.schema.json").read_text())


def load_manifest(path: str | Path) -> Manifest:
    """Read and validate an experiment manifest; relative paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    try:
        jsonschema.validate(doc, manifest_schema())
    except jsonschema.ValidationError as exc:
        raise DataError(f"invalid manifest {path}: {exc.message}") from None
    base = path.parent
    collections = {
        cid: CollectionSource(base / entry["runs_dir"], base / entry["qrels_path"])
        for cid, entry in doc["collections"].items()
    }
    s = doc.get("split")
    split = CollectionSplit(s["train"], s["dev"], s["test"]) if s else CollectionSplit.trec_web_default()
    missing = [c for c in split.collections if c not in collections]
    if missing:
        raise DataError(f"split collections missing from manifest: {missing}")
    return Manifest(
        collections, split, tuple(doc.get("targets", ())), tuple(doc.get("n", ())),
        tuple(doc.get("depths", ())), doc.get("pooled_qrels"), path,
    )


def load_collection(source: CollectionSource) -> tuple[RunSet, JudgmentSet]:
    rs, removed = dedup_runs(read_runs(source.runs))
    if removed:
        logger.info("%s: removed %d duplicate runs: %s", source.runs, len(removed), ", ".join(removed))
    return rs, read_qrels(source.qrels)


def collection_tables(manifest: Manifest, aggs: Sequence[AggregateSpec] = SW_PANEL) -> dict[str, ScoreTable]:
    """Cleaned system-wise tables for every collection in the manifest's split."""
    out = {}
    for cid in manifest.split.collections:
        rs, js = load_collection(manifest.collections[cid])
        sw, report_ = clean(system_wise(rs, js, aggs, cid), drop_zero_rows=True)
        if report_:
            logger.info("%s: removed %d rows while cleaning", cid, len(report_))
        out[cid] = sw
    return out

