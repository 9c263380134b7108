"""Permutation-based importance estimators.

All estimators share one replicate grid: outer replicate ``b`` (optional
resampling of the whole dataset), split ``k`` (train/validation subbagging)
and permutation ``m``. Each cell draws from its own derived random stream, so
results do not depend on evaluation order or worker count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from . import dgp
from .data import (
    CONTINUOUS,
    Dataset,
    SchemaError,
    SplitIndices,
    bootstrap_resample,
    split_train_validation,
    subsample_without_replacement,
)
from .models import FittedModel, ModelSpec, default_gbt_schedule, fit, predict, predict_switched
from .parallel import ordered_map
from .rng import RngStream, as_stream

MVIM, CVIM, AMVIM, LOCO = "MVIM", "CVIM", "AMVIM", "LOCO"


class DegeneratePermutationWarning(UserWarning):
    """The switched predictor is constant on the validation rows."""


class PositivityError(ValueError):
    """R^2 of the predictor on the others is (numerically) one."""


@dataclass(frozen=True)
class EstimatorConfig:
    outer_reps: int = 1
    splits_per_rep: int = 10
    permutations: int = 5
    train_fraction: float = 2 / 3
    small_n_threshold: int = 5000
    m_small: int = 10
    outer_mode: str = "subsample"  # or "bootstrap"; only used when outer_reps > 1
    outer_fraction: float = 0.5
    workers: int = 1

    def __post_init__(self):
        for name in ("outer_reps", "splits_per_rep", "permutations", "m_small", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.outer_fraction <= 1:
            raise ValueError("outer_fraction must lie in (0, 1]")
        if self.outer_mode not in ("subsample", "bootstrap"):
            raise ValueError(f"unknown outer_mode {self.outer_mode!r}")
        if self.small_n_threshold < 0:
            raise ValueError("small_n_threshold must be >= 0")

    def permutations_for(self, n_rows: int) -> int:
        """Permutation count, raised to ``m_small`` for small datasets."""
        if n_rows < self.small_n_threshold:
            return max(self.permutations, self.m_small)
        return self.permutations


@dataclass(frozen=True)
class ImportanceEstimate:
    predictor: str
    kind: str
    point: float
    replicate_values: np.ndarray
    spread: float
    e_orig_hat: float
    e_switch_hat: float  # e_cond for CVIM, reduced-model error for LOCO
    model_family: str = ""
    n_train: int = 0
    B: int = 1
    k: int = 1
    m: int = 1
    r_squared: float | None = None


def _summarise(predictor, kind, cells, family, n_train, cfg, m, r2=None) -> ImportanceEstimate:
    reps = np.array([c[0] for c in cells], dtype=np.float64)
    spread = float(reps.std(ddof=1)) if len(reps) > 1 else 0.0
    return ImportanceEstimate(
        predictor=predictor,
        kind=kind,
        point=float(reps.mean()),
        replicate_values=reps,
        spread=spread,
        e_orig_hat=float(np.mean([c[1] for c in cells])),
        e_switch_hat=float(np.mean([c[2] for c in cells])),
        model_family=family,
        n_train=n_train,
        B=cfg.outer_reps,
        k=cfg.splits_per_rep,
        m=m,
        r_squared=r2,
    )


# -- replicate grid ----------------------------------------------------------------

def _outer(data: Dataset, cfg: EstimatorConfig, rng: RngStream, b: int) -> Dataset:
    if cfg.outer_reps == 1:
        return data
    s = rng.child("outer", b)
    if cfg.outer_mode == "bootstrap":
        return bootstrap_resample(data, s)
    return subsample_without_replacement(data, max(3, round(cfg.outer_fraction * data.n_rows)), s)


def _cells(cfg: EstimatorConfig):
    return [(b, k) for b in range(cfg.outer_reps) for k in range(cfg.splits_per_rep)]


def _resolve_spec(spec: ModelSpec | None, n_train: int) -> ModelSpec:
    return default_gbt_schedule(n_train) if spec is None else spec


def _prepare(data: Dataset, predictors, min_rows: int = 30):
    if data.outcome_name is None:
        raise SchemaError("data has no outcome column")
    for p in predictors:
        if p not in data.predictors:
            raise SchemaError(f"{p!r} is not a predictor column")
    if data.n_rows < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {data.n_rows}")


def _mse(y: np.ndarray, pred: np.ndarray) -> float:
    return float(np.mean((y - pred) ** 2))


def _split_cell(data, cfg, rng, b, k):
    d = _outer(data, cfg, rng, b)
    sp = split_train_validation(d, cfg.train_fraction, rng.child("split", b, k))
    return d.take(sp.train), d.take(sp.validation), sp


def _degenerate(values: np.ndarray, predictor: str) -> bool:
    if np.all(values == values[0]):
        warnings.warn(f"{predictor} is constant on the validation rows; importance set to 0",
                      DegeneratePermutationWarning, stacklevel=4)
        return True
    return False


def _mvim_cell(cell, data, predictors, spec, cfg, rng, m):
    b, k = cell
    train, valid, _ = _split_cell(data, cfg, rng, b, k)
    model = fit(_resolve_spec(spec, train.n_rows), train, rng.child("fit", b, k))
    y = valid.outcome
    base = predict(model, valid)
    e_orig = _mse(y, base)
    out = {}
    for p in predictors:
        x = valid[p]
        if _degenerate(x, p):
            out[p] = (0.0, e_orig, e_orig)
            continue
        switches = []
        for j in range(m):
            perm = rng.child("perm", b, k, p, j).generator().permutation(valid.n_rows)
            switches.append(_mse(y, predict_switched(model, valid, p, x[perm], base)))
        e_switch = float(np.mean(switches))
        out[p] = (e_switch - e_orig, e_orig, e_switch)
    return out, model.family, train.n_rows


def estimate_mvim_many(data: Dataset, predictors: list[str], model_spec: ModelSpec | None,
                       cfg: EstimatorConfig, rng: RngStream | int) -> list[ImportanceEstimate]:
    """MVIM for several predictors, sharing the fitted model of every cell.

    Each predictor's result is identical to a separate ``estimate_mvim`` call.
    """
    rng = as_stream(rng)
    _prepare(data, predictors)
    m = cfg.permutations_for(data.n_rows)
    fn = partial(_mvim_cell, data=data, predictors=list(predictors), spec=model_spec, cfg=cfg, rng=rng, m=m)
    results = ordered_map(fn, _cells(cfg), cfg.workers)
    family, n_train = results[0][1], results[0][2]
    return [_summarise(p, MVIM, [r[0][p] for r in results], family, n_train, cfg, m) for p in predictors]


def estimate_mvim(data: Dataset, predictor: str, model_spec: ModelSpec | None,
                  cfg: EstimatorConfig, rng: RngStream | int) -> ImportanceEstimate:
    """Subbagged permutation estimate of e_switch - e_orig."""
    return estimate_mvim_many(data, [predictor], model_spec, cfg, rng)[0]


# -- conditional model ----------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalModel:
    """Model of one predictor given all the other predictors.

    Continuous targets carry a mean model and the residual sd; categorical
    targets carry one probability model per category code.
    """

    target: str
    kind: str
    mean_model: FittedModel | None = None
    residual_sd: float = 0.0
    codes: tuple[int, ...] = ()
    class_models: tuple[FittedModel, ...] = ()
    inputs: tuple[str, ...] = field(default=())

    def mean(self, rows: Dataset) -> np.ndarray:
        if self.kind != CONTINUOUS:
            raise SchemaError(f"{self.target} is categorical; use probabilities()")
        return predict(self.mean_model, rows)

    def probabilities(self, rows: Dataset) -> np.ndarray:
        """(n_rows, n_codes) conditional class probabilities."""
        if self.kind == CONTINUOUS:
            raise SchemaError(f"{self.target} is continuous")
        raw = np.column_stack([np.clip(predict(mdl, rows), 0.0, 1.0) for mdl in self.class_models])
        if len(self.codes) == 2 and raw.shape[1] == 1:
            raw = np.column_stack([1.0 - raw[:, 0], raw[:, 0]])
        total = raw.sum(axis=1, keepdims=True)
        zero = total[:, 0] == 0
        raw[zero] = 1.0
        total[zero] = raw.shape[1]
        return raw / total


def _conditional_data(data: Dataset, predictor: str) -> Dataset:
    base = data.drop(data.outcome_name) if data.outcome_name else data
    if len(base.predictors) < 2:
        raise ValueError("conditional model needs at least one other predictor")
    return base.retarget(predictor)


def fit_conditional_model(data: Dataset, predictor: str, model_spec: ModelSpec | None,
                          cfg: EstimatorConfig, rng: RngStream | int,
                          split: SplitIndices | None = None) -> ConditionalModel:
    """Fit the predictor on the remaining predictors.

    The model is fit on the training side of ``split`` (drawn from ``rng``
    when not given) and the residual sd is measured on the validation side.
    """
    rng = as_stream(rng)
    if predictor not in data.predictors:
        raise SchemaError(f"{predictor!r} is not a predictor column")
    cdata = _conditional_data(data, predictor)
    if split is None:
        split = split_train_validation(cdata, cfg.train_fraction, rng.child("cond-split"))
    train, valid = cdata.take(split.train), cdata.take(split.validation)
    spec = _resolve_spec(model_spec, train.n_rows)
    meta = cdata.meta(predictor)
    inputs = tuple(cdata.predictors)
    if meta.kind == CONTINUOUS:
        model = fit(spec, train, rng.child("cond-fit"))
        resid = valid[predictor] - predict(model, valid)
        sd = float(np.sqrt(np.mean(resid**2)))
        return ConditionalModel(predictor, CONTINUOUS, model, sd, inputs=inputs)
    codes = tuple(int(c) for c in meta.codes())
    targets = codes[1:] if len(codes) == 2 else codes
    class_models = []
    for c in targets:
        ind = (train[predictor] == c).astype(np.float64)
        tdata = train.drop(predictor).with_outcome(f"__is_{c}", ind)
        class_models.append(fit(spec, tdata, rng.child("cond-fit", c)))
    return ConditionalModel(predictor, meta.kind, codes=codes, class_models=tuple(class_models), inputs=inputs)


class _LawMean(FittedModel):
    family = "true_law"

    def __init__(self, target, law: dgp.ConditionalLaw):
        super().__init__(target, [c for c in dgp.SIGNAL if c != target], 0)
        self.law = law

    def _predict(self, rows):
        return np.asarray(self.law.mean({c: rows[c] for c in dgp.SIGNAL if c in rows}), dtype=np.float64) \
            * np.ones(rows.n_rows)


class _ConstantMean(FittedModel):
    family = "true_law"

    def __init__(self, target, value: float):
        super().__init__(target, [], 0)
        self.value = value

    def _predict(self, rows):
        return np.full(rows.n_rows, self.value)


def true_conditional_model(predictor: str, scenario: dgp.ScenarioSpec) -> ConditionalModel:
    """Conditional model backed by the scenario's known Gaussian law."""
    if dgp._independent_of_rest(predictor, scenario):
        if predictor == "X1":
            mean, var = dgp.x1_moments(scenario)
        elif predictor.startswith("X"):
            mean, var = 0.0, 1.0
        else:
            raise dgp.UnknownConditionalLaw(f"{predictor} is not Gaussian")
        return ConditionalModel(predictor, CONTINUOUS, _ConstantMean(predictor, mean), math.sqrt(var))
    law = dgp.conditional_law(predictor, scenario)
    return ConditionalModel(predictor, CONTINUOUS, _LawMean(predictor, law), law.sd)


def _switched_values(validation: Dataset, cond: ConditionalModel, rng: RngStream) -> np.ndarray:
    p = cond.target
    if p not in validation:
        raise SchemaError(f"validation rows lack {p!r}")
    meta = validation.meta(p)
    if meta.kind != cond.kind or (cond.codes and tuple(meta.codes()) != cond.codes):
        raise SchemaError(f"{p!r} does not match the conditional model's schema")
    gen = rng.generator()
    if cond.kind == CONTINUOUS:
        mu = cond.mean(validation)
        resid = validation[p] - mu
        return mu + resid[gen.permutation(validation.n_rows)]
    probs = cond.probabilities(validation)
    cdf = np.cumsum(probs, axis=1)
    u = gen.random(validation.n_rows)[:, None]
    idx = np.minimum((u >= cdf).sum(axis=1), probs.shape[1] - 1)
    return np.asarray(cond.codes, dtype=np.int64)[idx]


def conditional_switch(validation: Dataset, cond: ConditionalModel, rng: RngStream | int) -> Dataset:
    """Replace the target column by a draw from its fitted conditional law.

    Continuous: fitted mean plus permuted residuals. Categorical: a fresh draw
    from each row's conditional class probabilities.
    """
    values = _switched_values(validation, cond, as_stream(rng))
    return validation.with_column(cond.target, values)


def _r2_from(x: np.ndarray, sd: float) -> float:
    var = float(np.var(x))
    if var == 0:
        raise ValueError("predictor has zero variance")
    return float(min(1.0, max(0.0, 1.0 - sd**2 / var)))


def estimate_r_squared(data: Dataset, predictor: str, cond: ConditionalModel) -> float:
    """Positivity diagnostic: 1 - residual variance / marginal variance."""
    if data.meta(predictor).kind != CONTINUOUS or cond.kind != CONTINUOUS:
        raise SchemaError(f"{predictor!r} is not continuous")
    return _r2_from(data[predictor], cond.residual_sd)


def _cvim_cell(cell, data, predictor, spec, cond_spec, cfg, rng, m, cond_override):
    b, k = cell
    d = _outer(data, cfg, rng, b)
    sp = split_train_validation(d, cfg.train_fraction, rng.child("split", b, k))
    train, valid = d.take(sp.train), d.take(sp.validation)
    model = fit(_resolve_spec(spec, train.n_rows), train, rng.child("fit", b, k))
    if cond_override is not None:
        cond = cond_override
    else:
        cond = fit_conditional_model(d, predictor, cond_spec, cfg, rng.child("cond", b, k), split=sp)
    r2 = _r2_from(d[predictor], cond.residual_sd) if cond.kind == CONTINUOUS else None
    y = valid.outcome
    base = predict(model, valid)
    e_orig = _mse(y, base)
    if _degenerate(valid[predictor], predictor):
        return (0.0, e_orig, e_orig), r2, model.family, train.n_rows
    conds = []
    for j in range(m):
        new = _switched_values(valid, cond, rng.child("cswitch", b, k, predictor, j))
        conds.append(_mse(y, predict_switched(model, valid, predictor, new, base)))
    e_cond = float(np.mean(conds))
    return (e_cond - e_orig, e_orig, e_cond), r2, model.family, train.n_rows


def estimate_cvim(data: Dataset, predictor: str, model_spec: ModelSpec | None, cond_spec: ModelSpec | None,
                  cfg: EstimatorConfig, rng: RngStream | int,
                  conditional: ConditionalModel | None = None) -> ImportanceEstimate:
    """Conditional importance: e_cond - e_orig with conditional switching.

    Per split the prediction model and the conditional model are both fit on
    the training rows. Pass ``conditional`` to use a fixed (e.g. true)
    conditional model instead. The mean R^2 over splits is attached.
    """
    rng = as_stream(rng)
    _prepare(data, [predictor])
    if conditional is None and len(data.predictors) < 2:
        raise ValueError("conditional importance needs at least two predictors")
    m = cfg.permutations_for(data.n_rows)
    fn = partial(_cvim_cell, data=data, predictor=predictor, spec=model_spec, cond_spec=cond_spec,
                 cfg=cfg, rng=rng, m=m, cond_override=conditional)
    results = ordered_map(fn, _cells(cfg), cfg.workers)
    r2s = [r[1] for r in results if r[1] is not None]
    r2 = float(np.mean(r2s)) if r2s else None
    return _summarise(predictor, CVIM, [r[0] for r in results], results[0][2], results[0][3], cfg, m, r2)


def estimate_amvim(cvim: ImportanceEstimate, r2: float) -> ImportanceEstimate:
    """Rescale conditional importance by 1 / (1 - R^2)."""
    if not 0 <= r2 <= 1:
        raise ValueError(f"r2 must lie in [0, 1], got {r2}")
    if r2 >= 1 - 1e-6:
        raise PositivityError("positivity violated: R^2 is 1 and MVIM is indeterminable from CVIM")
    scale = 1.0 / (1.0 - r2)
    reps = cvim.replicate_values * scale
    return ImportanceEstimate(
        predictor=cvim.predictor, kind=AMVIM, point=cvim.point * scale, replicate_values=reps,
        spread=cvim.spread * scale, e_orig_hat=cvim.e_orig_hat, e_switch_hat=cvim.e_switch_hat,
        model_family=cvim.model_family, n_train=cvim.n_train, B=cvim.B, k=cvim.k, m=cvim.m, r_squared=r2,
    )


def _loco_cell(cell, data, predictor, spec, cfg, rng):
    b, k = cell
    train, valid, _ = _split_cell(data, cfg, rng, b, k)
    spec = _resolve_spec(spec, train.n_rows)
    full = fit(spec, train, rng.child("fit", b, k))
    reduced = fit(spec, train.drop(predictor), rng.child("fit-reduced", b, k))
    pf, pr = predict(full, valid), predict(reduced, valid.drop(predictor))
    y = valid.outcome
    return (float(np.mean((pf - pr) ** 2)), _mse(y, pf), _mse(y, pr)), full.family, train.n_rows


def estimate_loco(data: Dataset, predictor: str, model_spec: ModelSpec | None,
                  cfg: EstimatorConfig, rng: RngStream | int) -> ImportanceEstimate:
    """Leave-one-covariate-out: mean squared gap between full and reduced fits."""
    rng = as_stream(rng)
    _prepare(data, [predictor])
    fn = partial(_loco_cell, data=data, predictor=predictor, spec=model_spec, cfg=cfg, rng=rng)
    results = ordered_map(fn, _cells(cfg), cfg.workers)
    return _summarise(predictor, LOCO, [r[0] for r in results], results[0][1], results[0][2], cfg, 1)
