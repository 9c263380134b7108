"""Prediction models behind a single fit / predict / mse interface."""
from __future__ import annotations

import numpy as np

from ..data import Dataset, SchemaError
from ..rng import RngStream, as_stream
from .base import FittedModel, RankDeficientWarning
from .gbt import BoostedModel, fit_boosting
from .oracle import OracleModel, fit_oracle
from .specs import (
    AdditiveSplineSpec,
    ExactSpec,
    GradientBoostingSpec,
    ModelSpec,
    OracleSpec,
    default_gbt_schedule,
)
from .spline import SplineModel, fit_spline
from .stub import ExactModel, fit_exact

__all__ = [
    "AdditiveSplineSpec", "BoostedModel", "ExactModel", "ExactSpec", "FittedModel",
    "GradientBoostingSpec", "ModelSpec", "OracleModel", "OracleSpec", "RankDeficientWarning",
    "SplineModel", "default_gbt_schedule", "fit", "mse", "predict", "predict_switched",
]


def fit(spec: ModelSpec, train: Dataset, rng: RngStream | int = 0) -> FittedModel:
    if train.outcome_name is None:
        raise SchemaError("training data has no outcome column")
    if train.n_rows < 10:
        raise ValueError(f"need at least 10 training rows, got {train.n_rows}")
    if isinstance(spec, OracleSpec):
        return fit_oracle(train, spec.log_offset)
    if isinstance(spec, AdditiveSplineSpec):
        return fit_spline(train, spec.basis_per_var, spec.ridge)
    if isinstance(spec, GradientBoostingSpec):
        return fit_boosting(train, spec, as_stream(rng))
    if isinstance(spec, ExactSpec):
        return fit_exact(train, spec.log_offset)
    raise TypeError(f"unknown model spec {spec!r}")


def predict(model: FittedModel, rows: Dataset) -> np.ndarray:
    return model.predict(rows)


def predict_switched(model: FittedModel, rows: Dataset, column: str, values: np.ndarray,
                     base_pred: np.ndarray | None = None) -> np.ndarray:
    """Predictions on ``rows`` with ``column`` replaced by ``values``.

    Equal to ``predict(model, rows.with_column(column, values))``; boosted
    models reuse ``base_pred`` and only re-evaluate trees that split on the
    column.
    """
    if isinstance(model, BoostedModel) and base_pred is not None:
        return model.predict_switched(rows, column, values, base_pred)
    if not model.uses_column(column):
        return model.predict(rows) if base_pred is None else base_pred.copy()
    return model.predict(rows.with_column(column, values))


def mse(model: FittedModel, rows: Dataset) -> float:
    if rows.n_rows == 0:
        raise ValueError("cannot compute MSE on zero rows")
    return float(np.mean((rows.outcome - model.predict(rows)) ** 2))
