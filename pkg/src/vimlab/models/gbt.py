"""Gradient-boosted regression trees under squared loss."""
from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..rng import RngStream
from . import _tree
from .base import Feature, FittedModel, expand_features, feature_matrix
from .specs import GradientBoostingSpec


class BoostedModel(FittedModel):
    family = "gradient_boosting"

    def __init__(self, target, features: list[Feature], base: float, nodes: dict, roots: np.ndarray,
                 n_train: int, spec: GradientBoostingSpec, train_mse_path: np.ndarray):
        super().__init__(target, sorted({f.column for f in features}, key=[f.column for f in features].index), n_train)
        self.features = features
        self.base = base
        self.nodes = nodes  # flat arrays: feature, threshold, left, right, value
        for arr in nodes.values():
            arr.setflags(write=False)
        self.roots = roots
        self.spec = spec
        self._complete = _tree.complete_layout(
            nodes["feature"], nodes["threshold"], nodes["left"], nodes["right"], nodes["value"],
            roots, spec.max_depth,
        )
        self.train_mse_path = train_mse_path
        self.train_mse = float(train_mse_path[-1]) if len(train_mse_path) else float("nan")

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def _X(self, rows: Dataset) -> np.ndarray:
        return np.ascontiguousarray(feature_matrix(rows, self.features, order="F").T)

    def _forest(self, X_T: np.ndarray, trees: np.ndarray | None, base: float) -> np.ndarray:
        cf, ct, cv = self._complete
        if trees is not None:
            cf, ct, cv = cf[trees], ct[trees], cv[trees]
        return _tree.predict_trees(X_T, cf, ct, cv, base)

    def _predict(self, rows: Dataset) -> np.ndarray:
        return self._forest(self._X(rows), None, self.base)

    def predict_reference(self, rows: Dataset) -> np.ndarray:
        """Pointer-chasing evaluation of the original node arrays."""
        n = self.nodes
        return _tree.predict_forest(self._X(rows), n["feature"], n["threshold"], n["left"], n["right"],
                                    n["value"], self.roots, self.base)

    def split_columns(self) -> set[str]:
        """Dataset columns used by at least one split."""
        used = np.unique(self.nodes["feature"])
        return {self.features[j].column for j in used if j >= 0}

    def uses_column(self, name: str) -> bool:
        return name in self.split_columns()

    def trees_using(self, column: str) -> np.ndarray:
        """Indices of trees with at least one split on ``column``."""
        feat_ids = [j for j, f in enumerate(self.features) if f.column == column]
        hits = np.isin(self.nodes["feature"], feat_ids)
        tree_of = np.searchsorted(self.roots, np.arange(len(hits)), side="right") - 1
        return np.unique(tree_of[hits])

    def predict_switched(self, rows: Dataset, column: str, values: np.ndarray, base_pred: np.ndarray) -> np.ndarray:
        """Predictions after replacing ``column`` by ``values``, given the
        unswitched predictions; only trees that split on ``column`` are re-run."""
        trees = self.trees_using(column)
        if len(trees) == 0:
            return base_pred.copy()
        X = self._X(rows)
        before = self._forest(X, trees, 0.0)
        cols = [j for j, f in enumerate(self.features) if f.column == column]
        for j in cols:
            f = self.features[j]
            X[j] = values if f.code is None else (values == f.code)
        after = self._forest(X, trees, 0.0)
        return base_pred + (after - before)

    def dump(self) -> str:
        n = self.nodes
        lines = [f"gradient_boosting base={self.base!r} trees={self.n_trees}",
                 "features " + " ".join(f.label for f in self.features)]
        bounds = list(self.roots) + [len(n["feature"])]
        for t in range(self.n_trees):
            lines.append(f"tree {t}")
            for nd in range(bounds[t], bounds[t + 1]):
                local = nd - bounds[t]
                if n["feature"][nd] < 0:
                    lines.append(f"  {local} leaf {n['value'][nd]!r}")
                else:
                    lines.append(
                        f"  {local} split {self.features[n['feature'][nd]].label} <= {n['threshold'][nd]!r}"
                        f" -> {n['left'][nd] - bounds[t]} {n['right'][nd] - bounds[t]}"
                    )
        return "\n".join(lines) + "\n"


def fit_boosting(train: Dataset, spec: GradientBoostingSpec, rng: RngStream) -> BoostedModel:
    features = expand_features(train, train.predictors)
    X_T = np.ascontiguousarray(feature_matrix(train, features).T)
    order = np.ascontiguousarray(np.argsort(X_T, axis=1, kind="stable").astype(np.int32))
    sorted_vals = np.ascontiguousarray(np.take_along_axis(X_T, order, axis=1))
    y = train.outcome
    n = train.n_rows
    base = float(np.mean(y))
    pred = np.full(n, base)
    n_sub = max(1, int(round(spec.subsample * n)))
    gen = rng.generator()

    cap = 2 ** (spec.max_depth + 1) - 1
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    node_of = np.empty(n, dtype=np.int32)

    trees = []
    path = np.empty(spec.n_trees)
    for t in range(spec.n_trees):
        r = y - pred
        if n_sub < n:
            node_of.fill(-1)
            node_of[gen.permutation(n)[:n_sub]] = 0
        else:
            node_of.fill(0)
        feature.fill(-1)
        k = _tree.grow_tree(X_T, sorted_vals, order, r, node_of, spec.max_depth, spec.min_leaf, 0.0,
                            feature, threshold, left, right, value)
        value[:k] *= spec.learning_rate
        _tree.add_tree(X_T, feature, threshold, left, right, value, pred)
        trees.append((feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(), value[:k].copy()))
        path[t] = np.mean((y - pred) ** 2)

    sizes = np.array([len(tr[0]) for tr in trees], dtype=np.int64)
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    offsets = np.repeat(roots, sizes)
    feat = np.concatenate([tr[0] for tr in trees])
    internal = feat >= 0
    lft = np.concatenate([tr[2] for tr in trees])
    rgt = np.concatenate([tr[3] for tr in trees])
    lft = np.where(internal, lft + offsets, -1)
    rgt = np.where(internal, rgt + offsets, -1)
    thr = np.where(internal, np.concatenate([tr[1] for tr in trees]), 0.0)
    val = np.where(internal, 0.0, np.concatenate([tr[4] for tr in trees]))
    nodes = {"feature": feat, "threshold": thr, "left": lft, "right": rgt, "value": val}
    return BoostedModel(train.outcome_name, features, base, nodes, roots, n, spec, path)
