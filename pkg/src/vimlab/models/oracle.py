"""Correctly specified linear model on the transformed simulation features."""
from __future__ import annotations

import numpy as np

from ..data import Dataset
from .base import FittedModel, solve_least_squares

ORACLE_INPUTS = ("X1", "X2", "X3", "X4", "X5", "C1", "C2", "U1", "U2")
ORACLE_TERMS = ("intercept", "X1", "X1*C1", "C1", "W1", "W2", "X5", "W3", "C2==2", "C2==3")


def oracle_design(rows: Dataset, log_offset: float = 0.1) -> np.ndarray:
    x1, c1, c2 = rows["X1"], rows["C1"], rows["C2"]
    cols = [
        np.ones(rows.n_rows),
        x1,
        x1 * c1,
        c1,
        np.log(np.abs(rows["X2"] * rows["X3"]) + log_offset),
        (rows["X4"] - 0.5) ** 3,
        rows["X5"],
        np.sin(np.pi * rows["U1"] * rows["U2"]),
        c2 == 2,
        c2 == 3,
    ]
    return np.column_stack(cols).astype(np.float64)


class OracleModel(FittedModel):
    family = "oracle"

    def __init__(self, target: str, coef: np.ndarray, log_offset: float, n_train: int):
        super().__init__(target, list(ORACLE_INPUTS), n_train)
        self.coef = coef
        self.coef.setflags(write=False)
        self.log_offset = log_offset

    def coefficients(self) -> dict[str, float]:
        return dict(zip(ORACLE_TERMS, map(float, self.coef)))

    def _predict(self, rows: Dataset) -> np.ndarray:
        return oracle_design(rows, self.log_offset) @ self.coef

    def dump(self) -> str:
        lines = [f"oracle log_offset={self.log_offset!r}"]
        lines += [f"{k} {v!r}" for k, v in self.coefficients().items()]
        return "\n".join(lines) + "\n"


def fit_oracle(train: Dataset, log_offset: float) -> OracleModel:
    Z = oracle_design(train, log_offset)
    y = train.outcome
    coef = solve_least_squares(Z, y)
    model = OracleModel(train.outcome_name, coef, log_offset, train.n_rows)
    model.train_mse = float(np.mean((y - Z @ coef) ** 2))
    return model
