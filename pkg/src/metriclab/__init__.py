"""Metric panels, inter-metric correlation and linear metric prediction for TREC-style evaluation."""

from ._core import BACKEND
from .metrics import MetricSpec, TopicEval, evaluate_topic, parse_metric
from .trec_io import JudgmentSet, RunSet, parse_qrels, parse_runs, read_qrels, read_runs

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "JudgmentSet",
    "MetricSpec",
    "RunSet",
    "TopicEval",
    "evaluate_topic",
    "parse_metric",
    "parse_qrels",
    "parse_runs",
    "read_qrels",
    "read_runs",
]
