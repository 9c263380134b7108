from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data import MULTINOMIAL, Dataset, SchemaError


class RankDeficientWarning(UserWarning):
    """Least-squares design was rank deficient; a ridge solve was used instead."""


@dataclass(frozen=True)
class Feature:
    """One numeric model input derived from a dataset column."""

    column: str
    code: int | None = None  # one-hot indicator for this category code

    @property
    def label(self) -> str:
        return self.column if self.code is None else f"{self.column}=={self.code}"


def expand_features(data: Dataset, columns: list[str]) -> list[Feature]:
    """Continuous and binary columns map to one feature; multinomial
    columns become one indicator per level."""
    feats = []
    for name in columns:
        meta = data.meta(name)
        if meta.kind == MULTINOMIAL:
            feats.extend(Feature(name, int(c)) for c in meta.codes())
        else:
            feats.append(Feature(name))
    return feats


def feature_matrix(data: Dataset, feats: list[Feature], order: str = "C") -> np.ndarray:
    out = np.empty((data.n_rows, len(feats)), dtype=np.float64, order=order)
    for j, f in enumerate(feats):
        col = data.column(f.column)
        out[:, j] = col if f.code is None else (col == f.code)
    return out


class FittedModel:
    """A trained predictor of one target column from a fixed set of input columns."""

    family: str = "abstract"

    def __init__(self, target: str, inputs: list[str], n_train: int):
        self.target = target
        self.inputs = list(inputs)
        self.n_train = n_train
        self.train_mse = float("nan")

    def _check(self, rows: Dataset) -> None:
        missing = [c for c in self.inputs if c not in rows]
        if missing:
            raise SchemaError(f"rows are missing model inputs {missing}")

    def predict(self, rows: Dataset) -> np.ndarray:
        self._check(rows)
        return self._predict(rows)

    def _predict(self, rows: Dataset) -> np.ndarray:
        raise NotImplementedError

    def uses_column(self, name: str) -> bool:
        return name in self.inputs

    def dump(self) -> str:
        raise NotImplementedError


def solve_least_squares(Z: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Least squares with optional ridge on all but the first column.

    Falls back to a small ridge (with a warning) when the design is rank
    deficient and no ridge was requested.
    """
    n, p = Z.shape
    if ridge == 0.0:
        coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
        if rank == p:
            return coef
        warnings.warn(f"design has rank {rank} < {p}; using ridge fallback", RankDeficientWarning, stacklevel=3)
        ridge = 1e-8
    penalty = np.full(p, ridge * n)
    penalty[0] = 0.0
    A = Z.T @ Z + np.diag(penalty)
    return np.linalg.solve(A, Z.T @ y)
