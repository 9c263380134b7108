"""Additive model: natural cubic splines per continuous predictor, indicator
main effects per categorical predictor, no interactions."""
from __future__ import annotations

import numpy as np

from ..data import BINARY, CONTINUOUS, Dataset
from .base import FittedModel, solve_least_squares


def natural_spline_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Truncated-power natural cubic spline basis without intercept.

    With K knots this returns K - 1 columns: x itself plus K - 2 cubic terms
    that are linear beyond the boundary knots.
    """
    K = len(knots)
    cols = [x]
    if K >= 3:
        def d(k):
            return (np.maximum(x - knots[k], 0) ** 3 - np.maximum(x - knots[-1], 0) ** 3) / (knots[-1] - knots[k])
        last = d(K - 2)
        cols += [d(k) - last for k in range(K - 2)]
    return np.column_stack(cols)


def quantile_knots(x: np.ndarray, n_knots: int) -> np.ndarray:
    knots = np.unique(np.quantile(x, np.linspace(0, 1, n_knots)))
    return knots


class SplineModel(FittedModel):
    family = "additive_spline"

    def __init__(self, target, inputs, terms, coef, col_mean, col_scale, n_train):
        super().__init__(target, inputs, n_train)
        self.terms = terms  # (name, kind, payload): knots + centering, or codes
        self.coef = coef
        self.col_mean = col_mean
        self.col_scale = col_scale

    def _raw_design(self, rows: Dataset) -> np.ndarray:
        return _raw_design(rows, self.terms)

    def _predict(self, rows: Dataset) -> np.ndarray:
        Z = (self._raw_design(rows) - self.col_mean) / self.col_scale
        return self.coef[0] + Z @ self.coef[1:]

    def dump(self) -> str:
        lines = [f"additive_spline intercept {self.coef[0]!r}"]
        pos = 1
        for name, kind, payload in self.terms:
            width = _term_width(kind, payload)
            vals = " ".join(repr(float(c)) for c in self.coef[pos:pos + width])
            lines.append(f"{name} {kind} {vals}")
            pos += width
        return "\n".join(lines) + "\n"


def _term_width(kind, payload) -> int:
    if kind == CONTINUOUS:
        _, _, knots = payload
        return max(1, len(knots) - 1)
    return len(payload)


def _raw_design(rows: Dataset, terms) -> np.ndarray:
    blocks = []
    for name, kind, payload in terms:
        x = rows[name]
        if kind == CONTINUOUS:
            center, scale, knots = payload
            blocks.append(natural_spline_basis((x - center) / scale, knots))
        else:
            blocks.append(np.column_stack([x == c for c in payload]).astype(np.float64))
    if not blocks:
        return np.empty((rows.n_rows, 0))
    return np.hstack(blocks)


def fit_spline(train: Dataset, basis_per_var: int, ridge: float) -> SplineModel:
    terms = []
    for name in train.predictors:
        meta = train.meta(name)
        x = train[name]
        if meta.kind == CONTINUOUS:
            center, scale = float(np.mean(x)), float(np.std(x))
            if scale == 0:
                continue
            knots = quantile_knots((x - center) / scale, basis_per_var + 1)
            terms.append((name, CONTINUOUS, (center, scale, knots)))
        else:
            codes = meta.codes()[1:] if meta.kind != BINARY else np.array([1])
            terms.append((name, meta.kind, tuple(int(c) for c in codes)))
    raw = _raw_design(train, terms)
    col_mean = raw.mean(axis=0)
    col_scale = raw.std(axis=0)
    col_scale[col_scale == 0] = 1.0
    Z = np.hstack([np.ones((train.n_rows, 1)), (raw - col_mean) / col_scale])
    y = train.outcome
    coef = solve_least_squares(Z, y, ridge)
    model = SplineModel(train.outcome_name, [t[0] for t in terms], terms, coef, col_mean, col_scale, train.n_rows)
    model.train_mse = float(np.mean((y - Z @ coef) ** 2))
    return model
