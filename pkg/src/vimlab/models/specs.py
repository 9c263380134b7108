"""Model specifications: frozen, hashable descriptions of how to fit."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class OracleSpec:
    log_offset: float = 0.1
    family = "oracle"


@dataclass(frozen=True)
class AdditiveSplineSpec:
    basis_per_var: int = 10
    ridge: float = 1e-6
    family = "additive_spline"

    def __post_init__(self):
        if self.basis_per_var < 1:
            raise ValueError("basis_per_var must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class GradientBoostingSpec:
    n_trees: int = 500
    max_depth: int = 4
    learning_rate: float = 0.1
    subsample: float = 0.8
    min_leaf: int = 5
    family = "gradient_boosting"

    def __post_init__(self):
        if not 1 <= self.n_trees <= 10000:
            raise ValueError(f"n_trees must lie in [1, 10000], got {self.n_trees}")
        if not 1 <= self.max_depth <= 12:
            raise ValueError(f"max_depth must lie in [1, 12], got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if not 0 < self.subsample <= 1:
            raise ValueError(f"subsample must lie in (0, 1], got {self.subsample}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")


@dataclass(frozen=True)
class ExactSpec:
    """Stub that ignores the training data and predicts the true mean function."""

    log_offset: float = 0.1
    family = "exact"


ModelSpec = OracleSpec | AdditiveSplineSpec | GradientBoostingSpec | ExactSpec


def default_gbt_schedule(n_train: int) -> GradientBoostingSpec:
    """Boosting hyperparameters by training size.

    Small samples get a slow learning rate with many trees; the rate rises
    and the tree count falls as n_train grows. Depth grows with log(n_train)
    from 2 at n=100 to 6 at n=50000.
    """
    if n_train < 10:
        raise ValueError(f"n_train must be >= 10, got {n_train}")
    if n_train < 1000:
        lr, trees = 0.05, 5000
    elif n_train < 10000:
        lr, trees = 0.1, 2000
    else:
        lr, trees = 0.3, 500
    depth = round(2 + 4 * math.log(n_train / 100) / math.log(500))
    depth = min(6, max(2, depth))
    return GradientBoostingSpec(n_trees=trees, max_depth=depth, learning_rate=lr, subsample=0.8, min_leaf=5)
