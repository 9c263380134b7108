"""Exact-mean stub: predicts the true simulation mean function."""
from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..dgp import SIGNAL, f0
from .base import FittedModel


class ExactModel(FittedModel):
    family = "exact"

    def __init__(self, target: str, log_offset: float, n_train: int):
        super().__init__(target, list(SIGNAL), n_train)
        self.log_offset = log_offset

    def _predict(self, rows: Dataset) -> np.ndarray:
        return f0({c: rows[c] for c in SIGNAL}, self.log_offset)

    def dump(self) -> str:
        return f"exact log_offset={self.log_offset!r}\n"


def fit_exact(train: Dataset, log_offset: float) -> ExactModel:
    model = ExactModel(train.outcome_name, log_offset, train.n_rows)
    model.train_mse = float(np.mean((train.outcome - model.predict(train)) ** 2))
    return model
