"""Topic-wise and system-wise score tables.

A topic-wise (TW) table has one row per ``(system, topic)``; a system-wise
(SW) table has one row per system holding per-topic scores aggregated by
arithmetic mean (or geometric mean, for GMAP).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .errors import DataError, UsageError
from .metrics import FULL_DEPTH, TW_PANEL, MetricSpec, TopicEval, evaluate_topic, parse_metric
from .trec_io import JudgmentSet, RunSet, topic_key

logger = logging.getLogger(__name__)

GMAP_FLOOR = 1e-5


@dataclass(frozen=True)
class AggregateSpec:
    base: MetricSpec
    mode: str = "arithmetic_mean"

    def __post_init__(self):
        if self.mode not in ("arithmetic_mean", "geometric_mean"):
            raise UsageError(f"unknown aggregation mode {self.mode!r}")
        if self.mode == "geometric_mean" and self.base.family != "AP":
            raise UsageError("geometric mean is only defined for AP (GMAP)")

    @property
    def name(self) -> str:
        if self.base.family == "AP":
            prefix = "GMAP" if self.mode == "geometric_mean" else "MAP"
            return prefix if self.base.cutoff == FULL_DEPTH else f"{prefix}@{self.base.cutoff}"
        return self.base.name

    def __str__(self) -> str:
        return self.name


_GMAP = re.compile(r"^GMAP(?:@(\d+|full))?$")


def parse_aggregate(name: str) -> AggregateSpec:
    """Parse a system-wise column name such as ``MAP``, ``GMAP`` or ``P@10``."""
    m = _GMAP.match(name.strip())
    if m:
        base = parse_metric("AP" + (f"@{m[1]}" if m[1] else ""))
        return AggregateSpec(base, "geometric_mean")
    return AggregateSpec(parse_metric(name))


def parse_aggregates(names: Iterable[str] | str) -> list[AggregateSpec]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    return [parse_aggregate(n) for n in names]


SW_PANEL: tuple[AggregateSpec, ...] = tuple(
    parse_aggregate(n)
    for n in (
        "R-Prec", "bpref", "RR", "ERR@20", "MAP", "GMAP", "nDCG",
        "P@10", "R@100", "RBP(0.5)", "RBP(0.8)", "RBP(0.95)",
    )
)


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Rectangular score table; NaN marks a missing value.

    ``row_keys`` are ``(system,)`` or ``(system, topic)`` tuples and
    ``columns`` are canonical measure names.
    """

    row_keys: tuple[tuple[str, ...], ...]
    columns: tuple[str, ...]
    values: np.ndarray
    collection_id: str = ""
    key_names: tuple[str, ...] = ("system",)
    flags: tuple[tuple[tuple[str, ...], str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        rows = tuple(tuple(k) for k in self.row_keys)
        values = np.array(self.values, dtype=float).reshape(len(rows), len(self.columns))
        values.setflags(write=False)
        object.__setattr__(self, "row_keys", rows)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)
        if len(set(rows)) != len(rows):
            raise DataError("duplicate row keys")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")
        if any(len(k) != len(self.key_names) for k in rows):
            raise DataError("row key width does not match key names")
        present = values[~np.isnan(values)]
        if present.size and (np.isinf(present).any() or present.min() < 0.0 or present.max() > 1.0):
            raise DataError("score values must be finite and lie in [0, 1]")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreTable):
            return NotImplemented
        return (
            self.row_keys == other.row_keys
            and self.columns == other.columns
            and self.key_names == other.key_names
            and self.collection_id == other.collection_id
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    @property
    def is_topic_wise(self) -> bool:
        return self.key_names == ("system", "topic")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __len__(self) -> int:
        return len(self.row_keys)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise DataError(f"table {self.collection_id or '<unnamed>'} has no column {name!r}") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((len(self), 0))

    def select_rows(self, mask) -> ScoreTable:
        mask = np.asarray(mask, dtype=bool)
        keys = tuple(k for k, keep in zip(self.row_keys, mask) if keep)
        return ScoreTable(keys, self.columns, self.values[mask], self.collection_id, self.key_names)

    def select_columns(self, names: Sequence[str]) -> ScoreTable:
        return ScoreTable(self.row_keys, tuple(names), self.matrix(names), self.collection_id, self.key_names)

    def rename_columns(self, mapping: Mapping[str, str]) -> ScoreTable:
        cols = tuple(mapping.get(c, c) for c in self.columns)
        return ScoreTable(self.row_keys, cols, self.values, self.collection_id, self.key_names, self.flags)

    def to_csv(self) -> str:
        return table_to_csv(self)


def concat_tables(tables: Sequence[ScoreTable], collection_id: str = "") -> ScoreTable:
    """Stack tables sharing the same columns; row keys gain a leading collection id."""
    if not tables:
        raise DataError("nothing to concatenate")
    columns = tables[0].columns
    keys, blocks = [], []
    for t in tables:
        if t.key_names != tables[0].key_names:
            raise DataError("cannot concatenate topic-wise and system-wise tables")
        keys.extend((t.collection_id,) + k for k in t.row_keys)
        blocks.append(t.matrix(columns))
    return ScoreTable(keys, columns, np.vstack(blocks), collection_id, ("collection",) + tables[0].key_names)


def join_tables(left: ScoreTable, right: ScoreTable) -> ScoreTable:
    """Inner join on row key; column names must not overlap."""
    overlap = set(left.columns) & set(right.columns)
    if overlap:
        raise DataError(f"overlapping columns: {sorted(overlap)}")
    index = {k: i for i, k in enumerate(right.row_keys)}
    li = [i for i, k in enumerate(left.row_keys) if k in index]
    keys = [left.row_keys[i] for i in li]
    ri = [index[k] for k in keys]
    values = np.hstack([left.values[li], right.values[ri]]) if keys else np.empty((0, len(left.columns) + len(right.columns)))
    return ScoreTable(keys, left.columns + right.columns, values, left.collection_id, left.key_names)


def _row_sort_key(key: tuple[str, ...]):
    return tuple(topic_key(part) for part in key)


def build_topic_wise(
    rs: RunSet,
    js: JudgmentSet,
    specs: Sequence[MetricSpec] = TW_PANEL,
    collection_id: str = "",
) -> ScoreTable:
    """Score every (system, topic) pair over topics with at least one relevant document.

    A system that did not retrieve for a scoreable topic gets an all-missing
    row, recorded in ``flags``.
    """
    if not specs:
        raise UsageError("no metrics requested")
    retrieved = set(rs.topics())
    topics = [t for t in js.scoreable_topics() if t in retrieved]
    if not topics:
        raise DataError("runs and judgments share no topic with relevant documents")
    g_max = js.g_max

    def score_system(tag: str):
        rows, flags = [], []
        for topic in topics:
            ranked = rs.ranking(tag, topic)
            if ranked is None:
                rows.append([math.nan] * len(specs))
                flags.append(((tag, topic), "missing-topic"))
                continue
            te = TopicEval(ranked, js[topic], g_max)
            scores = evaluate_topic(te, specs)
            rows.append([scores[s] for s in specs])
        return rows, flags

    keys, values, flags = [], [], []
    for tag, (rows, fl) in zip(rs.tags, pmap(score_system, rs.tags)):
        keys.extend((tag, t) for t in topics)
        values.extend(rows)
        flags.extend(fl)
    for key, kind in flags:
        logger.warning("%s: system %s has no results for topic %s", collection_id or "<collection>", *key)
    order = sorted(range(len(keys)), key=lambda i: _row_sort_key(keys[i]))
    return ScoreTable(
        [keys[i] for i in order],
        [s.name for s in specs],
        np.array([values[i] for i in order], dtype=float).reshape(len(keys), len(specs)),
        collection_id,
        ("system", "topic"),
        tuple(flags),
    )


def required_bases(aggs: Sequence[AggregateSpec]) -> list[MetricSpec]:
    """Distinct per-topic measures needed to compute ``aggs``, in first-use order."""
    out: list[MetricSpec] = []
    for a in aggs:
        if a.base not in out:
            out.append(a.base)
    return out


def build_system_wise(
    tw: ScoreTable,
    aggs: Sequence[AggregateSpec] = SW_PANEL,
    *,
    strict: bool = False,
) -> ScoreTable:
    """Aggregate a topic-wise table per system.

    Each system is averaged over the topics it has scores for; with
    ``strict`` a system missing any topic is dropped. GMAP floors AP at
    ``GMAP_FLOOR`` before taking logs.
    """
    if not tw.is_topic_wise:
        raise DataError("build_system_wise needs a topic-wise table")
    by_system: dict[str, list[int]] = {}
    for i, (system, _topic) in enumerate(tw.row_keys):
        by_system.setdefault(system, []).append(i)
    cols = [tw.columns.index(a.base.name) if a.base.name in tw.columns else None for a in aggs]
    missing = [a.base.name for a, c in zip(aggs, cols) if c is None]
    if missing:
        raise DataError(f"topic-wise table lacks columns {missing}")

    keys, rows = [], []
    for system in sorted(by_system, key=topic_key):
        block = tw.values[by_system[system]]
        complete = ~np.isnan(block).any(axis=1)
        if not complete.any():
            logger.warning("system %s has no scoreable topics; dropped", system)
            continue
        if strict and not complete.all():
            logger.warning("system %s misses %d topics; dropped (strict)", system, int((~complete).sum()))
            continue
        block = block[complete]
        row = []
        for agg, c in zip(aggs, cols):
            x = block[:, c]
            if agg.mode == "geometric_mean":
                row.append(math.exp(math.fsum(math.log(max(v, GMAP_FLOOR)) for v in x) / len(x)))
            else:
                row.append(math.fsum(x) / len(x))
        keys.append((system,))
        rows.append(row)
    return ScoreTable(keys, [a.name for a in aggs], np.array(rows, dtype=float).reshape(len(keys), len(aggs)), tw.collection_id, ("system",))


@dataclass(frozen=True)
class CleaningReport:
    removed: tuple[tuple[tuple[str, ...], str], ...] = ()

    def __bool__(self) -> bool:
        return bool(self.removed)

    def __len__(self) -> int:
        return len(self.removed)


def clean(table: ScoreTable, drop_zero_rows: bool = True) -> tuple[ScoreTable, CleaningReport]:
    """Remove rows with missing values and, optionally, rows that are all exactly zero."""
    removed = []
    keep = np.ones(len(table), dtype=bool)
    for i, key in enumerate(table.row_keys):
        row = table.values[i]
        if np.isnan(row).any():
            keep[i] = False
            removed.append((key, "missing"))
        elif drop_zero_rows and row.size and (row == 0.0).all():
            keep[i] = False
            removed.append((key, "all-zero"))
    if len(table) and not keep.any():
        raise DataError("empty table after cleaning")
    for key, reason in removed:
        logger.info("removed row %s (%s)", "/".join(key), reason)
    return table.select_rows(keep), CleaningReport(tuple(removed))


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.6f}"


def table_to_csv(table: ScoreTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(table.key_names) + list(table.columns))
    for key, row in zip(table.row_keys, table.values):
        writer.writerow(list(key) + [_fmt(v) for v in row])
    return buf.getvalue()


def table_from_csv(text: str, collection_id: str = "") -> ScoreTable:
    """Parse a table written by :func:`table_to_csv`.

    Leading header fields named ``collection``, ``system`` or ``topic`` form
    the row key; everything after is a measure column.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty table file")
    header = rows[0]
    width = 0
    while width < len(header) and header[width] in ("collection", "system", "topic"):
        width += 1
    if width == 0:
        raise DataError("table header must start with 'system'")
    keys, values = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        keys.append(tuple(row[:width]))
        try:
            values.append([float(v) if v != "" else math.nan for v in row[width:]])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return ScoreTable(
        keys, header[width:], np.array(values, dtype=float).reshape(len(keys), len(header) - width),
        collection_id, tuple(header[:width]),
    )
