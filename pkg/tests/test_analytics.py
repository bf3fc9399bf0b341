import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracle

from metriclab.analytics import (
    LinearModel,
    correlation_matrix,
    fit_arrays,
    fit_ols,
    kendall_tau,
    pearson,
    predict,
    r_squared,
    score_fit,
)
from metriclab.datasets import ScoreTable
from metriclab.errors import DataError, StatisticsError


def table(columns, data, keys=None):
    data = np.asarray(data, dtype=float)
    keys = keys or [(f"s{i}",) for i in range(len(data))]
    return ScoreTable(keys, columns, data)


def test_pearson_examples():
    x = np.array([0.1, 0.5, 0.3, 0.9])
    assert pearson(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-15)


def test_pearson_errors():
    with pytest.raises(StatisticsError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(StatisticsError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(StatisticsError):
        pearson([1], [1])


def test_kendall_examples():
    assert kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert kendall_tau([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(4 / 6, abs=1e-15)
    with pytest.raises(StatisticsError):
        kendall_tau([1, 1, 1], [1, 2, 3])


_vec = st.lists(st.integers(0, 6), min_size=2, max_size=40)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_kendall_properties(data):
    x = data.draw(_vec)
    y = data.draw(st.lists(st.integers(0, 6), min_size=len(x), max_size=len(x)))
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    t = kendall_tau(x, y)
    assert t == oracle.kendall_tau_b(x, y)
    assert t == kendall_tau(y, x)
    assert -1.0 <= t <= 1.0
    # strictly increasing transforms leave tau unchanged
    assert kendall_tau([math.exp(v) for v in x], [v**3 + 2 for v in y]) == t


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30), st.data())
def test_pearson_properties(x, data):
    y = data.draw(st.lists(st.floats(-10, 10), min_size=len(x), max_size=len(x)))
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson(y, x), abs=1e-12)
    assert r == pytest.approx(pearson(np.array(x) * 3 + 1, y), abs=1e-9)


def test_correlation_matrix_consistency():
    rng = np.random.default_rng(1)
    data = rng.random((25, 4))
    data[:, 3] = data[:, 0]
    t = table(["a", "b", "c", "d"], data)
    m = correlation_matrix(t)
    for i in range(4):
        for j in range(4):
            expected = 1.0 if i == j else pearson(data[:, i], data[:, j])
            assert m.values[i, j] == expected
    assert m.values[0, 3] == pytest.approx(1.0)


def test_correlation_matrix_pooled_and_constant():
    rng = np.random.default_rng(2)
    t1 = table(["a", "b", "k"], np.column_stack([rng.random((10, 2)), np.full(10, 0.5)]))
    t2 = table(["a", "b", "k"], np.column_stack([rng.random((7, 2)), np.full(7, 0.5)]))
    m = correlation_matrix([t1, t2])
    assert m.n_samples == 17
    assert m.undefined == ("k",)
    assert math.isnan(m.values[0, 2]) and m.values[2, 2] == 1.0
    avg = correlation_matrix([t1, t2], pooled=False)
    assert avg.values[0, 1] == pytest.approx((pearson(t1.column("a"), t1.column("b")) + pearson(t2.column("a"), t2.column("b"))) / 2)


def test_correlation_csv():
    m = correlation_matrix(table(["a", "b"], [[0.1, 0.2], [0.3, 0.1], [0.5, 0.9]]))
    lines = m.to_csv().splitlines()
    assert lines[0] == "metric,a,b" and lines[1].startswith("a,1.000000,")
    long = m.to_long_csv().splitlines()
    assert long[0] == "metric_a,metric_b,rho" and len(long) == 5


def test_fit_examples():
    rng = np.random.default_rng(3)
    X = rng.random((20, 2))
    y = 0.8 * X[:, 0] - 0.3 * X[:, 1] + 0.1
    t = table(["x1", "x2", "y"], np.column_stack([X, (y - y.min()) / 2]))
    m = fit_ols(t, "y", ["x1", "x2"])
    assert m.n_train == 20 and not m.collinear
    assert np.allclose(predict(m, t), t.column("y"), atol=1e-8)
    m = fit_ols(table(["a", "b"], np.column_stack([X[:, 0], X[:, 0]])), "b", ["a"])
    assert m.coefficients[0] == pytest.approx(1.0, abs=1e-12) and m.intercept == pytest.approx(0.0, abs=1e-12)


def test_collinear_against_pseudoinverse():
    X = np.array([[0.1, 0.1], [0.4, 0.4], [0.7, 0.7]])
    y = np.array([0.2, 0.5, 0.8])
    coef, intercept, collinear = fit_arrays(X, y)
    assert collinear
    design = np.column_stack([np.ones(3), X])
    beta = np.linalg.pinv(design.T @ design) @ design.T @ y
    assert np.allclose(np.append(intercept, coef), beta, atol=1e-8)
    assert np.allclose(intercept + X @ coef, y, atol=1e-8)


def test_fit_errors():
    with pytest.raises(DataError):
        fit_arrays(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(DataError):
        fit_arrays(np.array([[0.1], [math.nan], [0.3]]), np.array([0.1, 0.2, 0.3]))
    with pytest.raises(DataError):
        predict(LinearModel("y", ("zz",), (1.0,), 0.0, 3), table(["a"], [[0.1]]))


def test_predict_examples():
    t = table(["x"], [[0.0], [0.5], [1.0]])
    m = LinearModel("y", ("x",), (4.0,), 1.0, 3)
    assert list(predict(m, t)) == [1.0, 3.0, 5.0]
    z = LinearModel("y", ("x",), (0.0,), 0.25, 3)
    assert list(predict(z, t)) == [0.25] * 3
    assert LinearModel.from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        LinearModel("y", ("x",), (math.inf,), 0.0, 3)


def test_score_fit_examples():
    fs = score_fit([0.1, 0.5, 0.3], [0.1, 0.5, 0.3])
    assert fs.tau == 1.0 and fs.r_squared == 1.0 and fs.n == 3
    fs = score_fit([0, 1, 2], [2, 1, 0])
    assert fs.tau == -1.0 and fs.r_squared == -3.0
    assert r_squared([0, 1, 2], [1, 1, 1]) == 0.0
    with pytest.raises(StatisticsError):
        score_fit([0, 1, 2], [1, 1, 1])
    with pytest.raises(StatisticsError):
        score_fit([1, 1, 1], [0, 1, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_ols_residual_orthogonality(seed, p):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(p + 2, 40))
    X = rng.random((n, p))
    y = rng.random(n)
    coef, intercept, _ = fit_arrays(X, y)
    resid = y - (intercept + X @ coef)
    design = np.column_stack([np.ones(n), X])
    scale = np.linalg.norm(design, axis=0) * max(np.linalg.norm(resid), 1e-300)
    assert np.all(np.abs(design.T @ resid) <= 1e-8 * n * np.maximum(scale, 1.0))
    if np.ptp(y) > 0:
        assert r_squared(y, intercept + X @ coef) >= -1e-12
