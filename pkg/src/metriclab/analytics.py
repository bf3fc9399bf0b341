"""Correlation statistics and least-squares metric prediction."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .datasets import ScoreTable
from .errors import DataError, StatisticsError

RANK_TOL = 1e-10


def _vectors(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise StatisticsError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise StatisticsError("need at least two observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise StatisticsError("non-finite input")
    return x, y


def pearson(x, y) -> float:
    """Product-moment correlation. A constant input is an error, not zero."""
    x, y = _vectors(x, y)
    if (x == x[0]).all() or (y == y[0]).all():
        raise StatisticsError("correlation undefined for a constant vector")
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(dx @ dy) / math.sqrt(float(dx @ dx) * float(dy @ dy))
    return min(1.0, max(-1.0, r))


def kendall_tau(x, y) -> float:
    """Tie-adjusted Kendall tau-b from exact integer pair counts."""
    x, y = _vectors(x, y)
    n = x.size
    s = 0
    ties_x = 0
    ties_y = 0
    for i in range(n - 1):
        sx = np.sign(x[i + 1:] - x[i])
        sy = np.sign(y[i + 1:] - y[i])
        s += int((sx * sy).sum())
        ties_x += int((sx == 0).sum())
        ties_y += int((sy == 0).sum())
    pairs = n * (n - 1) // 2
    denom = (pairs - ties_x) * (pairs - ties_y)
    if denom == 0:
        raise StatisticsError("tau undefined: an input is entirely tied")
    return s / math.sqrt(denom)


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    values: np.ndarray
    n_samples: int
    undefined: tuple[str, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric"] + list(self.labels))
        for label, row in zip(self.labels, self.values):
            w.writerow([label] + ["" if math.isnan(v) else f"{v:.6f}" for v in row])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        """``metric_a,metric_b,rho`` rows for heatmap plotting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric_a", "metric_b", "rho"])
        for a, row in zip(self.labels, self.values):
            for b, v in zip(self.labels, row):
                w.writerow([a, b, "" if math.isnan(v) else f"{v:.6f}"])
        return buf.getvalue()


def _pairwise(data: np.ndarray, labels: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    m = len(labels)
    out = np.full((m, m), math.nan)
    undefined = [labels[j] for j in range(m) if (data[:, j] == data[0, j]).all()]
    for i in range(m):
        out[i, i] = 1.0
        for j in range(i + 1, m):
            if labels[i] in undefined or labels[j] in undefined:
                continue
            out[i, j] = out[j, i] = pearson(data[:, i], data[:, j])
    return out, undefined


def correlation_matrix(
    tables: ScoreTable | Sequence[ScoreTable],
    columns: Sequence[str] | None = None,
    *,
    pooled: bool = True,
) -> CorrelationMatrix:
    """Pearson correlation between every pair of columns.

    Rows of several tables are pooled into one sample by default. With
    ``pooled=False`` a matrix is computed per table and the entries are
    averaged. Columns that are constant get NaN off-diagonal entries and are
    listed in ``undefined``.
    """
    if isinstance(tables, ScoreTable):
        tables = [tables]
    if not tables:
        raise DataError("no tables")
    labels = list(columns or tables[0].columns)
    blocks = [t.matrix(labels) for t in tables]
    if any(np.isnan(b).any() for b in blocks):
        raise DataError("table has missing values; clean it first")
    if pooled:
        data = np.vstack(blocks)
        if data.shape[0] < 2:
            raise DataError("need at least two rows")
        values, undefined = _pairwise(data, labels)
    else:
        mats = []
        undefined = set()
        for b in blocks:
            if b.shape[0] < 2:
                raise DataError("need at least two rows per table")
            v, u = _pairwise(b, labels)
            mats.append(v)
            undefined.update(u)
        values = np.mean(mats, axis=0)
        undefined = [l for l in labels if l in undefined]
    values.setflags(write=False)
    return CorrelationMatrix(tuple(labels), values, sum(b.shape[0] for b in blocks), tuple(undefined))


@dataclass(frozen=True)
class LinearModel:
    target: str
    predictors: tuple[str, ...]
    coefficients: tuple[float, ...]
    intercept: float
    n_train: int
    collinear: bool = False

    def __post_init__(self):
        if len(self.coefficients) != len(self.predictors):
            raise ValueError("one coefficient per predictor")
        if not all(math.isfinite(c) for c in self.coefficients + (self.intercept,)):
            raise ValueError("model parameters must be finite")

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, len(self.predictors))
        return linear_response(X, np.asarray(self.coefficients, dtype=float), self.intercept)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "predictors": list(self.predictors),
            "coefficients": list(self.coefficients),
            "intercept": self.intercept,
            "n_train": self.n_train,
            "collinear": self.collinear,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LinearModel:
        return cls(
            d["target"], tuple(d["predictors"]), tuple(float(c) for c in d["coefficients"]),
            float(d["intercept"]), int(d["n_train"]), bool(d.get("collinear", False)),
        )


def linear_response(X: np.ndarray, coef: np.ndarray, intercept: float) -> np.ndarray:
    return intercept + X @ coef


def fit_arrays(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Least squares with intercept. Returns (coefficients, intercept, collinear).

    Singular values below ``RANK_TOL`` times the largest are dropped, giving
    the minimum-norm solution for rank-deficient designs.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < p + 1:
        raise DataError(f"need at least {p + 1} rows to fit {p} predictors, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in regression input")
    design = np.column_stack([np.ones(n), X])
    beta, _res, rank, _sv = np.linalg.lstsq(design, y, rcond=RANK_TOL)
    return beta[1:], float(beta[0]), bool(rank < p + 1)


def fit_ols(table: ScoreTable, target: str, predictors: Sequence[str]) -> LinearModel:
    X = table.matrix(list(predictors))
    y = table.column(target)
    coef, intercept, collinear = fit_arrays(X, y)
    return LinearModel(target, tuple(predictors), tuple(float(c) for c in coef), intercept, len(y), collinear)


def predict(model: LinearModel, table: ScoreTable) -> np.ndarray:
    """Predictions in row order; not clipped to [0, 1]."""
    return model.apply(table.matrix(list(model.predictors)))


@dataclass(frozen=True)
class FitScore:
    tau: float
    r_squared: float
    n: int = field(default=0)


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination on the evaluation set itself; may be negative."""
    y, yhat = _vectors(y_true, y_pred)
    if (y == y[0]).all():
        raise StatisticsError("R^2 undefined for a constant target")
    ss_res = math.fsum((y - yhat) ** 2)
    ss_tot = math.fsum((y - y.mean()) ** 2)
    return 1.0 - ss_res / ss_tot


def score_fit(y_true, y_pred) -> FitScore:
    r2 = r_squared(y_true, y_pred)
    tau = kendall_tau(y_true, y_pred)
    return FitScore(tau, r2, len(np.asarray(y_true).ravel()))
