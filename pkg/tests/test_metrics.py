import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle
from synth import random_topic

from metriclab import _core
from metriclab._core import _pykernels
from metriclab.errors import MetricError, UsageError
from metriclab.metrics import (
    TW_PANEL,
    MetricSpec,
    TopicEval,
    average_precision,
    bpref,
    err_at,
    evaluate_topic,
    inf_ap,
    ndcg_at,
    parse_metric,
    parse_metrics,
    precision_at,
    r_precision,
    rbp,
    recall_at,
    reciprocal_rank,
)


def topic(rel_ranks, length=None, R=None, extra_nonrel=0, grade=1):
    """Binary topic with relevant docs at the given 1-based ranks; other retrieved docs judged 0."""
    length = length or max(rel_ranks, default=0)
    ranked = [f"d{i}" for i in range(1, length + 1)]
    qrels = {d: (grade if i in rel_ranks else 0) for i, d in enumerate(ranked, 1)}
    for j in range((R or len(rel_ranks)) - len(rel_ranks)):
        qrels[f"missing{j}"] = grade
    for j in range(extra_nonrel):
        qrels[f"nonrel{j}"] = 0
    return TopicEval(ranked, qrels)


# --- worked examples -------------------------------------------------------


def test_precision_examples():
    assert precision_at(topic({1, 4, 7}, 10), 10) == pytest.approx(0.3)
    assert precision_at(TopicEval([], {"x": 1}), 10) == 0.0
    assert precision_at(topic({1, 3}, 5), 10) == pytest.approx(0.2)


def test_recall_examples():
    assert recall_at(topic({1, 2}, 100, R=4), 100) == 0.5
    assert recall_at(topic({1, 2, 3}, 3), 3) == 1.0
    assert recall_at(topic({2, 150}, 150, R=3), 100) == pytest.approx(1 / 3)


def test_average_precision_examples():
    assert average_precision(topic({1, 3}, 10), 1000) == pytest.approx(0.8333333333333334, abs=1e-15)
    assert average_precision(topic({1, 2, 3}, 10)) == 1.0
    assert average_precision(topic({20}, 30), 10) == 0.0


def test_r_precision_examples():
    assert r_precision(topic({1, 2, 4}, 10, R=5)) == pytest.approx(0.6)
    assert r_precision(topic({1, 2}, 5)) == 1.0
    assert r_precision(topic({3, 4}, 5)) == 0.0


def test_reciprocal_rank_examples():
    assert reciprocal_rank(topic({4}, 10)) == 0.25
    assert reciprocal_rank(topic({1}, 10)) == 1.0
    assert reciprocal_rank(topic({25}, 30), 20) == 0.0


def test_bpref_examples():
    te = TopicEval(["r1", "n1", "r2"], {"r1": 1, "n1": 0, "r2": 1})
    assert bpref(te) == 0.5
    assert bpref(TopicEval(["a", "b"], {"a": 1, "b": 2})) == 1.0
    assert bpref(TopicEval(["n1", "n2", "r"], {"n1": 0, "n2": 0, "r": 1})) == 0.0


def test_bpref_ignores_unjudged():
    judged = TopicEval(["r1", "n1", "r2"], {"r1": 1, "n1": 0, "r2": 1})
    padded = TopicEval(["u1", "r1", "u2", "n1", "u3", "r2"], {"r1": 1, "n1": 0, "r2": 1})
    assert bpref(judged) == bpref(padded)


def test_ndcg_examples():
    te = TopicEval(["dB", "dA"], {"dA": 2, "dB": 1})
    dcg = 1 + 2 / math.log2(3)
    idcg = 2 + 1 / math.log2(3)
    assert dcg == pytest.approx(2.26186, abs=1e-5) and idcg == pytest.approx(2.63093, abs=1e-5)
    assert ndcg_at(te, 2) == pytest.approx(0.8597186998521972, abs=1e-15)
    assert ndcg_at(TopicEval(["dA", "dB"], {"dA": 2, "dB": 1}), 2) == 1.0
    assert ndcg_at(TopicEval(["x", "y"], {"x": -2, "y": 0, "z": 1}), 10) == 0.0


def test_err_examples():
    assert err_at(TopicEval(["n", "r"], {"n": 0, "r": 1}, g_max=1), 20) == 0.25
    assert err_at(TopicEval(["r"], {"r": 4}, g_max=4), 20) == 0.9375
    assert err_at(TopicEval(["a", "b"], {"a": 0, "c": 1}, g_max=1), 20) == 0.0
    with pytest.raises(MetricError, match="ungraded"):
        err_at(TopicEval(["a"], {"a": 0}), 20)


def test_err_uses_supplied_collection_scale():
    te = TopicEval(["r"], {"r": 1}, g_max=2)
    assert err_at(te, 20) == 0.25


def test_rbp_examples():
    assert rbp(topic({1, 2}, 10), 0.5) == 0.75
    assert rbp(topic(set(), 10, R=1), 0.5) == 0.0
    assert rbp(topic({1}, 10), 0.8) == pytest.approx(0.2, abs=1e-15)


def test_rbp_graded_mode():
    te = TopicEval(["a", "b"], {"a": 2, "b": 4})
    assert rbp(te, 0.5, graded=True) == pytest.approx(0.5 * (0.5 + 0.5 * 1.0))
    assert rbp(te, 0.5) == 0.75


def test_infap_examples():
    assert inf_ap(TopicEval(["r"], {"r": 1})) == 1.0
    eps = 1e-5
    expected = 0.5 * (1 + (0.5 + 0.5 * 1 * ((1 + eps) / (1 + 2 * eps))))
    value = inf_ap(TopicEval(["a", "b"], {"a": 1, "b": 1}))
    assert value == pytest.approx(expected, abs=1e-15)
    # hand evaluation of the same expression: 1 - eps/4 to first order
    assert value == pytest.approx(1 - eps / 4, abs=1e-9)
    assert inf_ap(TopicEval(["u1", "u2", "r"], {"r": 1})) == pytest.approx(1 / 3, abs=1e-15)


def test_infap_approaches_ap_when_fully_judged():
    rng = np.random.default_rng(11)
    for _ in range(50):
        ranked, qrels = random_topic(rng, max_len=200, judged=(1.0, 1.0))
        te = TopicEval(ranked, qrels)
        assert abs(inf_ap(te, epsilon=1e-12) - average_precision(te)) < 1e-8


def test_r_zero_is_an_error():
    te = TopicEval(["a"], {"a": 0})
    for fn in (recall_at, average_precision, ndcg_at):
        with pytest.raises(MetricError):
            fn(te, 10)
    with pytest.raises(MetricError, match="AP@1000"):
        evaluate_topic(te, [parse_metric("AP")])


def test_evaluate_topic_panel():
    te = topic({1, 4, 7}, 10)
    out = evaluate_topic(te, list(TW_PANEL))
    assert len(out) == 23
    assert all(0.0 <= v <= 1.0 for v in out.values())
    assert evaluate_topic(te, [parse_metric("P@10")]) == {parse_metric("P@10"): pytest.approx(0.3)}
    assert evaluate_topic(te, list(TW_PANEL)) == out
    with pytest.raises(ValueError):
        evaluate_topic(te, [])


# --- names -----------------------------------------------------------------


@pytest.mark.parametrize(
    "text, name",
    [
        ("P@10", "P@10"),
        ("MAP", "AP@1000"),
        ("AP@full", "AP@1000"),
        ("nDCG", "nDCG@1000"),
        ("ERR", "ERR@20"),
        ("RR", "RR"),
        ("Rprec", "R-Prec"),
        ("R-Prec", "R-Prec"),
        ("bpref", "bpref"),
        ("RBP(0.95)", "RBP(0.95)@1000"),
        ("RBP(0.8)@50", "RBP(0.8)@50"),
        ("RBP(0.5,graded)", "RBP(0.5,graded)@1000"),
        ("infAP@30", "infAP@30"),
        ("infAP(0.001)@30", "infAP(0.001)@30"),
    ],
)
def test_parse_metric_names(text, name):
    assert parse_metric(text).name == name
    assert parse_metric(name).name == name


@pytest.mark.parametrize("bad", ["P@0", "Q@10", "RBP", "RBP(1.5)", "RBP(x)", "P(3)@10", "R-Prec@10", "infAP(-1)", ""])
def test_parse_metric_rejects(bad):
    with pytest.raises(UsageError):
        parse_metric(bad)


def test_parse_metric_error_names_string():
    with pytest.raises(UsageError, match="'P@0'"):
        parse_metrics("P@10,P@0")


def test_tw_panel_names():
    assert len(TW_PANEL) == 23
    assert len({s.name for s in TW_PANEL}) == 23
    assert "RBP(0.95)@1000" in {s.name for s in TW_PANEL}


def test_spec_validation():
    with pytest.raises(UsageError):
        MetricSpec("P", 10, p=0.5)
    with pytest.raises(UsageError):
        MetricSpec("RBP", 10)
    assert MetricSpec("P", 10).at(20).name == "P@20"
    assert MetricSpec("RPrec", None).at(20).name == "R-Prec"


# --- backends ----------------------------------------------------------------

KERNELS = ["precision_at", "recall_at", "average_precision", "reciprocal_rank", "bpref", "ndcg_at", "err_at", "rbp", "inf_ap"]


def _call(mod, name, te, k):
    args = {
        "precision_at": (te.codes, k),
        "recall_at": (te.codes, k, te.R),
        "average_precision": (te.codes, k, te.R),
        "reciprocal_rank": (te.codes, k),
        "bpref": (te.codes, k, te.R, te.N),
        "ndcg_at": (te.codes, te.ideal, k),
        "err_at": (te.codes, k, te.g_max),
        "rbp": (te.codes, 0.95, k, te.g_max, k % 2 == 0),
        "inf_ap": (te.codes, k, te.R, 1e-5),
    }[name]
    return getattr(mod, name)(*args)


def test_backends_bit_identical():
    ck = pytest.importorskip("metriclab._core._ckernels")
    rng = np.random.default_rng(5)
    for _ in range(200):
        ranked, qrels = random_topic(rng, max_len=500)
        te = TopicEval(ranked, qrels)
        for k in (1, 7, 20, 100, 1000):
            for name in KERNELS:
                assert _call(ck, name, te, k) == _call(_pykernels, name, te, k), (name, k)


def test_backend_selection():
    assert _core.BACKEND in ("cython", "python")
    assert _pykernels.BACKEND == "python"


# --- oracle and properties --------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_panel_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    ranked, qrels = random_topic(rng, max_len=120)
    te = TopicEval(ranked, qrels)
    for spec, value in evaluate_topic(te, list(TW_PANEL)).items():
        assert value == pytest.approx(oracle.evaluate(spec.name, ranked, qrels, te.g_max), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.integers(1, 60))
def test_cutoff_monotonicity(seed, k1, k2):
    k1, k2 = min(k1, k2), max(k1, k2)
    rng = np.random.default_rng(seed)
    ranked, qrels = random_topic(rng, max_len=80)
    te = TopicEval(ranked, qrels, g_max=4)
    for fn in (recall_at, average_precision, err_at):
        assert fn(te, k1) <= fn(te, k2)
    assert rbp(te, 0.8, k1) <= rbp(te, 0.8, k2)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_range(seed):
    rng = np.random.default_rng(seed)
    ranked, qrels = random_topic(rng, max_len=200)
    te = TopicEval(ranked, qrels)
    specs = list(TW_PANEL) + [parse_metric("infAP@100"), parse_metric("RBP(0.7,graded)@50")]
    assert all(0.0 <= v <= 1.0 for v in evaluate_topic(te, specs).values())
    assert err_at(te, 20) < 1.0
