"""Bias-variance study of the permutation importance estimator.

For each training size the study fits R models on independent training sets
and scores them all on one shared evaluation set whose switched copy is
frozen. The model average approximates the expectation over training sets,
from which the squared-bias, variance and delta terms follow row by row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import dgp
from .dgp import ScenarioSpec
from .models import ModelSpec, default_gbt_schedule, fit, predict, predict_switched
from .parallel import ordered_map
from .rng import RngStream, as_stream

MARGINAL, CONDITIONAL = "marginal", "conditional"
DESK_GRID = (100, 500, 1000, 5000, 10000)


class UnknownTruthError(ValueError):
    """Raised when the mean function is unknown (e.g. real data)."""


@dataclass(frozen=True)
class StudyConfig:
    scenario: ScenarioSpec
    predictors: tuple[str, ...] = ("X1", "X5", "X6")
    model_spec: ModelSpec | None = None  # None: default boosting schedule per n_train
    switch_mode: str = MARGINAL
    n_train_grid: tuple[int, ...] = DESK_GRID
    n_reps: int = 100
    n_eval: int = 100_000
    n_pop: int = 1_000_000  # only for predictors without a closed-form truth
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.scenario, ScenarioSpec):
            raise UnknownTruthError("decomposition requires known f0 (a simulation scenario)")
        if isinstance(self.predictors, str):
            object.__setattr__(self, "predictors", (self.predictors,))
        if self.switch_mode not in (MARGINAL, CONDITIONAL):
            raise ValueError(f"switch_mode must be marginal or conditional, got {self.switch_mode!r}")
        if self.n_reps < 2:
            raise ValueError("n_reps must be >= 2")
        if self.n_eval < 1000:
            raise ValueError("n_eval must be >= 1000")
        if not self.n_train_grid or min(self.n_train_grid) < 10:
            raise ValueError("n_train_grid needs sizes >= 10")
        unknown = set(self.predictors) - set(self.scenario.predictors)
        if unknown:
            raise ValueError(f"unknown predictors {sorted(unknown)}")


@dataclass(frozen=True)
class BiasVarianceReport:
    predictor: str
    switch_mode: str
    n_train: int
    bias2_orig: float
    bias2_switch: float
    var_orig: float
    var_switch: float
    delta: float
    mi_hat: float
    mi_c: float
    mi_true: float
    mc_se: float = 0.0
    delta_se: float = 0.0  # Monte-Carlo error of delta over the evaluation rows
    n_reps: int = 0
    n_eval: int = 0


def delta_term(f0_eval, f0_switched, mean_pred_switched) -> float:
    """2 * mean[(f0(X') - f0(X)) * (f0(X') - E_T fhat(X'))]."""
    a, b, c = (np.asarray(v, dtype=np.float64) for v in (f0_eval, f0_switched, mean_pred_switched))
    if not a.shape == b.shape == c.shape:
        raise ValueError("delta_term needs aligned arrays")
    return float(2.0 * np.mean((b - a) * (b - c)))


def reconstruct_mi_c(report: BiasVarianceReport) -> float:
    r = report
    return r.mi_hat + r.delta - r.bias2_switch + r.bias2_orig - r.var_switch + r.var_orig


class RowAccumulator:
    """Per-row running mean and sum of squared deviations (Welford)."""

    def __init__(self, n: int):
        self.count = 0
        self.mean = np.zeros(n)
        self.m2 = np.zeros(n)

    def add(self, x: np.ndarray) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        """Population variance across the added arrays."""
        return self.m2 / self.count


@dataclass
class _Eval:
    data: object
    f0: np.ndarray
    y: np.ndarray
    switched: dict = field(default_factory=dict)  # predictor -> (values, f0 at switched rows)


def _switch_values(cols, predictor, scenario, mode, gen):
    n = len(cols[predictor])
    if mode == MARGINAL or dgp._independent_of_rest(predictor, scenario):
        return cols[predictor][gen.permutation(n)]
    law = dgp.conditional_law(predictor, scenario)
    return law.draw(cols, gen)


def _evaluation_set(cfg: StudyConfig, rng: RngStream) -> _Eval:
    data = dgp.generate(cfg.n_eval, cfg.scenario, rng.child("eval"))
    cols = {c: data[c] for c in dgp.SIGNAL}
    f0 = dgp.f0(cols, cfg.scenario.log_offset)
    ev = _Eval(data, f0, data.outcome)
    for p in cfg.predictors:
        gen = rng.child("switch", p).generator()
        vals = _switch_values({**cols, p: data[p]}, p, cfg.scenario, cfg.switch_mode, gen)
        if p in dgp.SIGNAL:
            f0s = dgp.f0({**cols, p: vals}, cfg.scenario.log_offset)
        else:
            f0s = f0
        ev.switched[p] = (vals, f0s)
    return ev


def _truth(cfg: StudyConfig, predictor: str, rng: RngStream) -> tuple[float, float]:
    sc = cfg.scenario
    try:
        t = dgp.analytic_truths(predictor, sc)
        value = t.mi_true if cfg.switch_mode == MARGINAL else t.ci_true
        if value is not None:
            return value, 0.0
    except dgp.AnalyticFormUnavailable:
        pass
    if cfg.switch_mode == MARGINAL:
        t = dgp.true_mvim(predictor, sc, cfg.n_pop, rng.child("truth", predictor))
        return t.mi_true, t.mc_se
    t = dgp.true_cvim(predictor, sc, cfg.n_pop, rng.child("truth", predictor))
    return t.ci_true, t.mc_se


def _replicate(r, n_train, cfg, rng, ev):
    train = dgp.generate(n_train, cfg.scenario, rng.child("train", n_train, r))
    spec = default_gbt_schedule(n_train) if cfg.model_spec is None else cfg.model_spec
    model = fit(spec, train, rng.child("fit", n_train, r))
    base = predict(model, ev.data)
    switched = {p: predict_switched(model, ev.data, p, ev.switched[p][0], base) for p in cfg.predictors}
    return base, switched


def _mse(y, p) -> float:
    return float(np.mean((y - p) ** 2))


def run_study(cfg: StudyConfig, rng: RngStream | int) -> list[BiasVarianceReport]:
    """One report per (n_train, predictor), ordered by the grid then predictors."""
    rng = as_stream(rng)
    ev = _evaluation_set(cfg, rng)
    truths = {p: _truth(cfg, p, rng) for p in cfg.predictors}
    reports = []
    for n_train in cfg.n_train_grid:
        orig = RowAccumulator(cfg.n_eval)
        sw = {p: RowAccumulator(cfg.n_eval) for p in cfg.predictors}
        diffs = {p: [] for p in cfg.predictors}
        fn = partial(_replicate, n_train=n_train, cfg=cfg, rng=rng, ev=ev)
        batch = max(1, cfg.workers)
        for start in range(0, cfg.n_reps, batch):
            reps = range(start, min(cfg.n_reps, start + batch))
            for base, switched in ordered_map(fn, reps, cfg.workers):
                orig.add(base)
                e_orig = _mse(ev.y, base)
                for p in cfg.predictors:
                    sw[p].add(switched[p])
                    diffs[p].append(_mse(ev.y, switched[p]) - e_orig)
        for p in cfg.predictors:
            reports.append(_report(p, n_train, cfg, ev, orig, sw[p], diffs[p], truths[p]))
    return reports


def _report(p, n_train, cfg, ev, orig, sw, diffs, truth) -> BiasVarianceReport:
    f0, y = ev.f0, ev.y
    f0s = ev.switched[p][1]
    ef, efs = orig.mean, sw.mean
    bias2_orig = float(np.mean((ef - f0) ** 2))
    bias2_switch = float(np.mean((efs - f0s) ** 2))
    var_orig = float(np.mean(orig.variance))
    var_switch = float(np.mean(sw.variance))
    delta = delta_term(f0, f0s, efs)
    delta_rows = 2.0 * (f0s - f0) * (f0s - efs)
    mi_hat = float(np.mean(diffs))
    mi_c = mi_hat + delta - bias2_switch + bias2_orig - var_switch + var_orig
    # Row-wise terms whose mean is mi_c; their spread gives the Monte-Carlo error.
    eps = y - f0
    q = (f0 - f0s) ** 2 + 2 * eps * (f0 - f0s) + 2 * eps * ((f0s - efs) - (f0 - ef))
    se = math.hypot(float(q.std(ddof=1) / math.sqrt(len(q))), truth[1])
    return BiasVarianceReport(
        predictor=p, switch_mode=cfg.switch_mode, n_train=n_train,
        bias2_orig=bias2_orig, bias2_switch=bias2_switch, var_orig=var_orig, var_switch=var_switch,
        delta=delta, mi_hat=mi_hat, mi_c=mi_c, mi_true=truth[0], mc_se=se,
        delta_se=float(delta_rows.std(ddof=1) / math.sqrt(len(delta_rows))),
        n_reps=cfg.n_reps, n_eval=cfg.n_eval,
    )
