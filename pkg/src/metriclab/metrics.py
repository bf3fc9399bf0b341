"""Per-topic effectiveness measures.

Every measure is computed from a :class:`TopicEval`, which encodes one
ranked list against one topic's judgments. The arithmetic lives in
:mod:`metriclab._core` (compiled, or the pure-Python twin).

Measure names are stable strings: ``P@10``, ``R@100``, ``AP@1000``,
``nDCG@20``, ``RR``, ``R-Prec``, ``bpref``, ``ERR@20``,
``RBP(0.95)@1000``, ``infAP@30``. Parsing also accepts a few aliases
(``MAP``, ``nDCG``, ``ERR``, ``RBP(0.8)``, ``@full``).
"""

from __future__ import annotations

import re
from array import array
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from ._core import UNJUDGED, kernels
from .errors import MetricError, UsageError

FULL_DEPTH = 1000
ERR_DEPTH = 20
INFAP_EPSILON = 1e-5

FAMILIES = ("P", "R", "AP", "nDCG", "RR", "RPrec", "bpref", "ERR", "RBP", "infAP")


def _fmt_real(x: float) -> str:
    return format(x, "g")


@dataclass(frozen=True)
class MetricSpec:
    family: str
    cutoff: int | None = FULL_DEPTH
    p: float | None = None
    epsilon: float | None = None
    graded: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown metric family {self.family!r}")
        if self.family == "RPrec":
            if self.cutoff is not None:
                object.__setattr__(self, "cutoff", None)
        elif self.cutoff is None or self.cutoff < 1:
            raise UsageError(f"{self.family}: cutoff must be a positive integer")
        if (self.p is not None) != (self.family == "RBP"):
            raise UsageError("p is required for RBP and only for RBP")
        if self.p is not None and not 0.0 < self.p < 1.0:
            raise UsageError(f"RBP p must lie in (0, 1), got {self.p}")
        if self.family == "infAP":
            if self.epsilon is None:
                object.__setattr__(self, "epsilon", INFAP_EPSILON)
            elif self.epsilon <= 0:
                raise UsageError("infAP epsilon must be positive")
        elif self.epsilon is not None:
            raise UsageError("epsilon applies to infAP only")
        if self.graded and self.family != "RBP":
            raise UsageError("graded mode applies to RBP only")

    @property
    def name(self) -> str:
        f, k = self.family, self.cutoff
        if f == "RPrec":
            return "R-Prec"
        if f in ("RR", "bpref"):
            return f if k == FULL_DEPTH else f"{f}@{k}"
        if f == "RBP":
            params = _fmt_real(self.p) + (",graded" if self.graded else "")
            return f"RBP({params})@{k}"
        if f == "infAP" and self.epsilon != INFAP_EPSILON:
            return f"infAP({_fmt_real(self.epsilon)})@{k}"
        return f"{f}@{k}"

    def at(self, cutoff: int) -> MetricSpec:
        """Same measure at another cutoff (R-Prec has none and is returned as is)."""
        if self.family == "RPrec":
            return self
        return MetricSpec(self.family, cutoff, self.p, self.epsilon, self.graded)

    def __str__(self) -> str:
        return self.name


_NAME = re.compile(
    r"^(?P<family>P|R|AP|MAP|nDCG|RR|R-?Prec|Rprec|bpref|ERR|RBP|infAP)"
    r"(?:\((?P<params>[^)]*)\))?"
    r"(?:@(?P<cutoff>\d+|full))?$"
)


def parse_metric(name: str) -> MetricSpec:
    """Parse a measure name; raises :class:`UsageError` naming the bad string."""
    m = _NAME.match(name.strip())
    if not m:
        raise UsageError(f"unknown metric name {name!r}")
    family = m["family"]
    params = m["params"]
    cutoff_text = m["cutoff"]
    if family == "MAP":
        family = "AP"
    if family in ("R-Prec", "RPrec", "Rprec"):
        family = "RPrec"
    if cutoff_text is None or cutoff_text == "full":
        cutoff = ERR_DEPTH if family == "ERR" and cutoff_text is None else FULL_DEPTH
    else:
        cutoff = int(cutoff_text)
        if cutoff < 1:
            raise UsageError(f"cutoff must be positive in {name!r}")
        if family == "RPrec":
            raise UsageError(f"R-Prec takes no cutoff: {name!r}")
    p = epsilon = None
    graded = False
    try:
        if family == "RBP":
            if not params:
                raise UsageError(f"RBP needs a persistence parameter: {name!r}")
            parts = [s.strip() for s in params.split(",")]
            p = float(parts[0])
            graded = parts[1:] == ["graded"]
            if len(parts) > 1 and not graded:
                raise UsageError(f"unknown RBP option in {name!r}")
        elif family == "infAP" and params:
            epsilon = float(params)
        elif params:
            raise UsageError(f"{family} takes no parameters: {name!r}")
        return MetricSpec(family, cutoff, p, epsilon, graded)
    except UsageError as exc:
        if repr(name) in str(exc):
            raise
        raise UsageError(f"invalid metric name {name!r}: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"invalid metric name {name!r}: {exc}") from None


def parse_metrics(names: Iterable[str] | str) -> list[MetricSpec]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    return [parse_metric(n) for n in names]


# Topic-wise panel: 23 measures.
TW_PANEL: tuple[MetricSpec, ...] = tuple(
    [MetricSpec(f, k) for f in ("AP", "nDCG", "P", "R") for k in (10, 20, 100, 1000)]
    + [
        MetricSpec("bpref"),
        MetricSpec("ERR", ERR_DEPTH),
        MetricSpec("RR"),
        MetricSpec("RPrec", None),
        MetricSpec("RBP", p=0.5),
        MetricSpec("RBP", p=0.8),
        MetricSpec("RBP", p=0.95),
    ]
)


def _codes(ranked: Sequence[str], grades: Mapping[str, int]) -> array:
    get = grades.get
    return array("i", [get(doc, UNJUDGED) for doc in ranked])


@dataclass(frozen=True)
class TopicEval:
    """One ranked list scored against one topic's judgments.

    ``g_max`` is the collection-level largest positive grade; it defaults to
    this topic's own maximum when not supplied.
    """

    ranked: tuple[str, ...]
    grades: Mapping[str, int]
    g_max: int | None = None
    R: int = field(init=False)
    N: int = field(init=False)
    codes: array = field(init=False, repr=False, compare=False)
    ideal: array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(self.ranked))
        positives = sorted((g for g in self.grades.values() if g > 0), reverse=True)
        object.__setattr__(self, "R", len(positives))
        object.__setattr__(self, "N", len(self.grades) - len(positives))
        if self.g_max is None and positives:
            object.__setattr__(self, "g_max", positives[0])
        object.__setattr__(self, "codes", _codes(self.ranked, self.grades))
        object.__setattr__(self, "ideal", array("i", positives))


def _need_rel(te: TopicEval) -> None:
    if te.R <= 0:
        raise MetricError("topic has no relevant documents")


def _need_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")


def precision_at(te: TopicEval, k: int) -> float:
    _need_k(k)
    return kernels.precision_at(te.codes, k)


def recall_at(te: TopicEval, k: int) -> float:
    _need_k(k)
    _need_rel(te)
    return kernels.recall_at(te.codes, k, te.R)


def average_precision(te: TopicEval, k: int = FULL_DEPTH) -> float:
    _need_k(k)
    _need_rel(te)
    return kernels.average_precision(te.codes, k, te.R)


def r_precision(te: TopicEval) -> float:
    _need_rel(te)
    return kernels.precision_at(te.codes, te.R)


def reciprocal_rank(te: TopicEval, k: int = FULL_DEPTH) -> float:
    _need_k(k)
    return kernels.reciprocal_rank(te.codes, k)


def bpref(te: TopicEval, k: int = FULL_DEPTH) -> float:
    _need_k(k)
    _need_rel(te)
    return kernels.bpref(te.codes, k, te.R, te.N)


def ndcg_at(te: TopicEval, k: int) -> float:
    _need_k(k)
    _need_rel(te)
    return kernels.ndcg_at(te.codes, te.ideal, k)


def err_at(te: TopicEval, k: int = ERR_DEPTH) -> float:
    _need_k(k)
    if te.g_max is None or te.g_max < 1:
        raise MetricError("ungraded collection")
    return kernels.err_at(te.codes, k, te.g_max)


def rbp(te: TopicEval, p: float, depth: int = FULL_DEPTH, graded: bool = False) -> float:
    _need_k(depth)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    g_max = te.g_max or 1
    return kernels.rbp(te.codes, p, depth, g_max, graded)


def inf_ap(te: TopicEval, epsilon: float = INFAP_EPSILON, k: int = FULL_DEPTH) -> float:
    _need_k(k)
    _need_rel(te)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return kernels.inf_ap(te.codes, k, te.R, epsilon)


def score(te: TopicEval, spec: MetricSpec) -> float:
    f, k = spec.family, spec.cutoff
    if f == "P":
        return precision_at(te, k)
    if f == "R":
        return recall_at(te, k)
    if f == "AP":
        return average_precision(te, k)
    if f == "nDCG":
        return ndcg_at(te, k)
    if f == "RR":
        return reciprocal_rank(te, k)
    if f == "RPrec":
        return r_precision(te)
    if f == "bpref":
        return bpref(te, k)
    if f == "ERR":
        return err_at(te, k)
    if f == "RBP":
        return rbp(te, spec.p, k, spec.graded)
    return inf_ap(te, spec.epsilon, k)


def evaluate_topic(te: TopicEval, specs: Sequence[MetricSpec]) -> dict[MetricSpec, float]:
    """Score ``te`` under each spec, in the given order."""
    if not specs:
        raise ValueError("no metrics requested")
    out = {}
    for spec in specs:
        try:
            out[spec] = score(te, spec)
        except MetricError as exc:
            raise MetricError(f"{spec.name}: {exc}") from exc
    return out
