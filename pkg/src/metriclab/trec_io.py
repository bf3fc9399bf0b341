"""Reading, cleaning and reshaping TREC runs and relevance judgments.

Qrels lines are ``topic iteration doc grade`` and run lines are
``topic Q0 doc rank score tag``; fields are split on any whitespace run.
Within a topic, runs are ordered by descending score with ties broken by
descending document id (the trec_eval convention); the rank column is
ignored.
"""

from __future__ import annotations

import gzip
import io
import logging
import math
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import TextIO

from .errors import ParseError

logger = logging.getLogger(__name__)
diagnostics = logging.getLogger("metriclab.diagnostics")


def topic_key(topic: str):
    """Sort key placing numeric topic ids in numeric order before the rest."""
    return (0, int(topic), "") if topic.isdigit() else (1, 0, topic)


@dataclass(frozen=True)
class Diagnostic:
    file: str | None
    line: int | None
    kind: str
    detail: str = ""


def _emit(diag: Diagnostic) -> None:
    diagnostics.warning(
        "%s:%s: %s %s", diag.file or "<input>", diag.line, diag.kind, diag.detail,
        extra={"diagnostic": diag},
    )


def _lines(source: str | TextIO | Iterable[str]) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


class JudgmentSet:
    """Per-topic mapping ``doc_id -> grade``.

    Grades <= 0 (negative spam grades included) count as judged
    nonrelevant. ``g_max`` is the largest positive grade in the whole set
    unless an explicit grade scale is carried over from a parent set.
    """

    def __init__(
        self,
        entries: Mapping[str, Mapping[str, int]],
        *,
        grade_scale: int | None = None,
        warnings: Iterable[Diagnostic] = (),
    ):
        self._entries = {t: MappingProxyType(dict(docs)) for t, docs in entries.items()}
        self._rel = {t: sum(1 for g in d.values() if g > 0) for t, d in self._entries.items()}
        self.warnings = tuple(warnings)
        if grade_scale is None:
            positives = [g for d in self._entries.values() for g in d.values() if g > 0]
            grade_scale = max(positives) if positives else None
        self.g_max = grade_scale

    @property
    def topics(self) -> tuple[str, ...]:
        return tuple(sorted(self._entries, key=topic_key))

    def __contains__(self, topic) -> bool:
        return topic in self._entries

    def __getitem__(self, topic: str) -> Mapping[str, int]:
        return self._entries[topic]

    def get(self, topic: str) -> Mapping[str, int]:
        return self._entries.get(topic, MappingProxyType({}))

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, JudgmentSet):
            return NotImplemented
        return self._entries == other._entries and self.g_max == other.g_max

    def num_rel(self, topic: str) -> int:
        return self._rel.get(topic, 0)

    def num_nonrel(self, topic: str) -> int:
        return len(self.get(topic)) - self.num_rel(topic)

    def scoreable_topics(self) -> tuple[str, ...]:
        """Topics with at least one relevant document."""
        return tuple(t for t in self.topics if self._rel[t] > 0)

    def __repr__(self) -> str:
        return f"JudgmentSet({len(self)} topics, g_max={self.g_max})"


class RunSet:
    """Ranked lists keyed by run tag then topic.

    Each list is a tuple of ``(doc_id, score)`` pairs in canonical order.
    """

    def __init__(
        self,
        runs: Mapping[str, Mapping[str, Iterable[tuple[str, float]]]],
        *,
        sources: Iterable[str] = (),
        warnings: Iterable[Diagnostic] = (),
    ):
        self._runs = {
            tag: MappingProxyType({t: tuple(lst) for t, lst in topics.items()})
            for tag, topics in runs.items()
        }
        self.sources = tuple(sources)
        self.warnings = tuple(warnings)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(sorted(self._runs))

    def topics(self, tag: str | None = None) -> tuple[str, ...]:
        if tag is not None:
            return tuple(sorted(self._runs[tag], key=topic_key))
        seen = {t for topics in self._runs.values() for t in topics}
        return tuple(sorted(seen, key=topic_key))

    def __getitem__(self, tag: str) -> Mapping[str, tuple[tuple[str, float], ...]]:
        return self._runs[tag]

    def __contains__(self, tag) -> bool:
        return tag in self._runs

    def __len__(self) -> int:
        return len(self._runs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunSet):
            return NotImplemented
        return self._runs == other._runs

    def ranking(self, tag: str, topic: str) -> tuple[str, ...] | None:
        entries = self._runs[tag].get(topic)
        if entries is None:
            return None
        return tuple(doc for doc, _ in entries)

    def __repr__(self) -> str:
        return f"RunSet({len(self)} runs, {len(self.topics())} topics)"


def parse_qrels(source: str | TextIO | Iterable[str], name: str | None = None) -> JudgmentSet:
    """Parse qrels text. Later duplicate (topic, doc) lines overwrite earlier ones."""
    entries: dict[str, dict[str, int]] = {}
    warnings = []
    for lineno, line in enumerate(_lines(source), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", name, lineno)
        topic, doc, grade_text = fields[0], fields[2], fields[3]
        try:
            grade = int(grade_text)
        except ValueError:
            raise ParseError(f"grade {grade_text!r} is not an integer", name, lineno) from None
        docs = entries.setdefault(topic, {})
        if doc in docs:
            diag = Diagnostic(name, lineno, "duplicate-judgment", f"{topic} {doc}")
            warnings.append(diag)
            _emit(diag)
        docs[doc] = grade
    if not entries:
        raise ParseError("no judgments", name)
    return JudgmentSet(entries, warnings=warnings)


def _order(entries: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    return sorted(entries, key=lambda e: (e[1], e[0]), reverse=True)


def parse_runs(source: str | TextIO | Iterable[str], name: str | None = None) -> RunSet:
    """Parse run text holding one or more run tags."""
    groups: dict[str, dict[str, dict[str, float]]] = {}
    warnings = []
    for lineno, line in enumerate(_lines(source), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 6:
            raise ParseError(f"expected 6 fields, got {len(fields)}", name, lineno)
        topic, doc, score_text, tag = fields[0], fields[2], fields[4], fields[5]
        try:
            score = float(score_text)
        except ValueError:
            raise ParseError(f"score {score_text!r} is not a number", name, lineno) from None
        if not math.isfinite(score):
            raise ParseError(f"score {score_text!r} is not finite", name, lineno)
        docs = groups.setdefault(tag, {}).setdefault(topic, {})
        if doc in docs:
            diag = Diagnostic(name, lineno, "duplicate-document", f"{tag} {topic} {doc}")
            warnings.append(diag)
            _emit(diag)
            if score <= docs[doc]:
                continue
        docs[doc] = score
    if not groups:
        raise ParseError("no run lines", name)
    runs = {
        tag: {topic: _order(docs.items()) for topic, docs in topics.items()}
        for tag, topics in groups.items()
    }
    return RunSet(runs, sources=[name] if name else [], warnings=warnings)


def format_runs(rs: RunSet) -> str:
    """Serialize in canonical order; scores use ``repr`` so re-parsing is exact."""
    out = []
    for tag in rs.tags:
        for topic in rs.topics(tag):
            for rank, (doc, score) in enumerate(rs[tag][topic], 1):
                out.append(f"{topic} Q0 {doc} {rank} {score!r} {tag}\n")
    return "".join(out)


def format_qrels(js: JudgmentSet) -> str:
    out = []
    for topic in js.topics:
        for doc, grade in sorted(js[topic].items()):
            out.append(f"{topic} 0 {doc} {grade}\n")
    return "".join(out)


def _open_text(path: Path) -> TextIO:
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def read_qrels(path: str | os.PathLike) -> JudgmentSet:
    path = Path(path)
    with _open_text(path) as fh:
        return parse_qrels(fh, name=str(path))


def merge_runs(parts: Iterable[RunSet]) -> RunSet:
    runs: dict = {}
    sources: list[str] = []
    warnings: list[Diagnostic] = []
    for part in parts:
        for tag in part.tags:
            if tag in runs:
                raise ParseError(f"run tag {tag!r} appears in more than one file", part.sources[0] if part.sources else None)
            runs[tag] = part[tag]
        sources.extend(part.sources)
        warnings.extend(part.warnings)
    return RunSet(runs, sources=sources, warnings=warnings)


def read_runs(path: str | os.PathLike) -> RunSet:
    """Read one run file, or every non-hidden file in a directory (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise ParseError("no run files", str(path))
    else:
        files = [path]
    parts = []
    for file in files:
        with _open_text(file) as fh:
            parts.append(parse_runs(fh, name=str(file)))
    return merge_runs(parts)


def dedup_runs(rs: RunSet) -> tuple[RunSet, list[str]]:
    """Drop runs whose ranked lists equal another run's on every topic.

    The lexicographically smallest tag of each identical group survives.
    """
    seen: dict[tuple, str] = {}
    removed = []
    for tag in rs.tags:
        signature = tuple((t, rs.ranking(tag, t)) for t in rs.topics(tag))
        if signature in seen:
            removed.append(tag)
            logger.info("run %s duplicates %s; removed", tag, seen[signature])
        else:
            seen[signature] = tag
    kept = {tag: rs[tag] for tag in rs.tags if tag not in removed}
    return RunSet(kept, sources=rs.sources, warnings=rs.warnings), removed


def truncate(rs: RunSet, depth: int) -> RunSet:
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    runs = {
        tag: {topic: entries[:depth] for topic, entries in rs[tag].items()}
        for tag in rs.tags
    }
    return RunSet(runs, sources=rs.sources)


def pool_judgments(rs: RunSet, js: JudgmentSet, depth: int) -> JudgmentSet:
    """Restrict ``js`` to documents in the top ``depth`` of at least one run.

    The grade scale of ``js`` is kept so graded measures stay comparable.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    pools: dict[str, set[str]] = {}
    for tag in rs.tags:
        for topic, entries in rs[tag].items():
            pools.setdefault(topic, set()).update(doc for doc, _ in entries[:depth])
    pooled = {}
    for topic, pool in pools.items():
        if topic not in js:
            continue
        judged = js[topic]
        pooled[topic] = {doc: judged[doc] for doc in pool if doc in judged}
    return JudgmentSet(pooled, grade_scale=js.g_max)
