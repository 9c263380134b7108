"""Synthetic populations with known regression function and known truths.

The response is

    Y = 2 X1 - 4 X1 C1 + 2 C1 + 2 log(|X2 X3| + 0.1) + (X4 - 0.5)^3 - 2 X5
        + 2 sin(pi U1 U2) - 1{C2 = 2} + 2 {C2 = 3} + eps,   eps ~ N(0, 1)

with X2..X5 ~ N(0, 1), C1 ~ Bernoulli(1/2), C2 uniform on {1, 2, 3},
U1, U2 ~ U(-1, 1) and ``n_noise`` extra N(0, 1) columns X6, X7, ... that do not
enter the response. Only the law of X1 changes between scenarios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .data import BINARY, MULTINOMIAL, OUTCOME, ColumnMeta, Dataset, SchemaError
from .rng import RngStream

SIGNAL = ("X1", "X2", "X3", "X4", "X5", "C1", "C2", "U1", "U2")
PARENTS = ("C1", "X2", "X3", "X4", "X5")


class AnalyticFormUnavailable(ValueError):
    """No closed form exists for this predictor/scenario pair."""


class UnknownConditionalLaw(ValueError):
    """The scenario does not give a usable conditional law for the predictor."""


@dataclass(frozen=True)
class Independent:
    """X1 ~ N(0, 1), independent of every other predictor."""


@dataclass(frozen=True)
class SimpleCorrelation:
    """X1 ~ N(0, 1) with corr(X1, X5) = rho."""

    rho: float = 0.9

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")


@dataclass(frozen=True)
class LinearParents:
    """X1 = intercept + coefs . (C1, X2, X3, X4, X5) + nu, nu ~ N(0, nu_sd^2)."""

    nu_sd: float
    coefs: tuple[float, float, float, float, float] = (1.0, -0.5, 0.5, 0.3, -0.3)
    intercept: float = -0.5

    def __post_init__(self):
        if not self.nu_sd > 0:
            raise ValueError("nu_sd must be positive")
        if len(self.coefs) != len(PARENTS):
            raise ValueError(f"need {len(PARENTS)} coefficients")


X1Law = Independent | SimpleCorrelation | LinearParents


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    x1_law: X1Law = field(default_factory=Independent)
    n_noise: int = 45
    seed: int = 0
    noise_sd: float = 1.0
    log_offset: float = 0.1

    def __post_init__(self):
        if self.n_noise < 0:
            raise ValueError("n_noise must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def predictors(self) -> list[str]:
        return list(SIGNAL) + [f"X{6 + i}" for i in range(self.n_noise)]

    def replace(self, **changes) -> "ScenarioSpec":
        from dataclasses import replace

        return replace(self, **changes)


INDEPENDENT = ScenarioSpec("independent", Independent())
SIMPLE = ScenarioSpec("simple", SimpleCorrelation(0.9))
MULTIVARIATE = ScenarioSpec("multivariate", LinearParents(math.sqrt(0.07)))
WEAK = ScenarioSpec("weak", LinearParents(1.0))
MODERATE = ScenarioSpec("moderate", LinearParents(0.5075))
STRONG = ScenarioSpec("strong", LinearParents(0.2575))

SCENARIOS: dict[str, ScenarioSpec] = {
    s.name: s for s in (INDEPENDENT, SIMPLE, MULTIVARIATE, WEAK, MODERATE, STRONG)
}


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


# -- regression function ------------------------------------------------------

def f0(cols: Mapping[str, np.ndarray], log_offset: float = 0.1) -> np.ndarray:
    """True conditional mean, evaluated elementwise on named columns."""
    x1, c1 = cols["X1"], cols["C1"]
    c2 = np.asarray(cols["C2"])
    return (
        2 * x1
        - 4 * x1 * c1
        + 2 * c1
        + 2 * np.log(np.abs(cols["X2"] * cols["X3"]) + log_offset)
        + (cols["X4"] - 0.5) ** 3
        - 2 * cols["X5"]
        + 2 * np.sin(np.pi * cols["U1"] * cols["U2"])
        - (c2 == 2)
        + 2 * (c2 == 3)
    )


def f0_dataset(data: Dataset, scenario: ScenarioSpec | None = None) -> np.ndarray:
    offset = scenario.log_offset if scenario is not None else 0.1
    return np.asarray(f0({k: data.column(k) for k in SIGNAL}, offset), dtype=np.float64)


# -- generation -----------------------------------------------------------------

def _draw_predictors(n: int, scenario: ScenarioSpec, gen: np.random.Generator) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    normals = gen.standard_normal((4, n))
    for name, row in zip(("X2", "X3", "X4", "X5"), normals):
        cols[name] = row
    cols["C1"] = gen.integers(0, 2, size=n)
    cols["C2"] = gen.integers(1, 4, size=n)
    cols["U1"] = gen.uniform(-1.0, 1.0, size=n)
    cols["U2"] = gen.uniform(-1.0, 1.0, size=n)
    law = scenario.x1_law
    z = gen.standard_normal(n)
    if isinstance(law, Independent):
        cols["X1"] = z
    elif isinstance(law, SimpleCorrelation):
        cols["X1"] = law.rho * cols["X5"] + math.sqrt(1 - law.rho**2) * z
    else:
        cols["X1"] = _parent_mean(cols, law) + law.nu_sd * z
    return cols


def _parent_mean(cols: Mapping[str, np.ndarray], law: LinearParents) -> np.ndarray:
    out = np.full(len(cols["X2"]), law.intercept, dtype=np.float64)
    for name, c in zip(PARENTS, law.coefs):
        out = out + c * cols[name]
    return out


def generate(n: int, scenario: ScenarioSpec, rng: RngStream) -> Dataset:
    """Draw ``n`` rows: signal predictors, noise predictors and Y."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator()
    cols = _draw_predictors(n, scenario, gen)
    eps = scenario.noise_sd * gen.standard_normal(n)
    noise = gen.standard_normal((scenario.n_noise, n))
    y = f0(cols, scenario.log_offset) + eps
    out = []
    for name in SIGNAL:
        if name == "C1":
            meta = ColumnMeta(name, BINARY)
        elif name == "C2":
            meta = ColumnMeta(name, MULTINOMIAL, levels=3)
        else:
            meta = ColumnMeta(name)
        out.append((meta, cols[name]))
    for i, row in enumerate(noise):
        out.append((ColumnMeta(f"X{6 + i}"), row))
    out.append((ColumnMeta("Y", role=OUTCOME), y))
    return Dataset(out)


# -- conditional laws -------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalLaw:
    """Gaussian law of one predictor given all the others: N(mean(cols), sd^2)."""

    predictor: str
    mean: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    sd: float

    def draw(self, cols: Mapping[str, np.ndarray], gen: np.random.Generator) -> np.ndarray:
        mu = np.asarray(self.mean(cols), dtype=np.float64)
        return mu + self.sd * gen.standard_normal(mu.shape)


def _independent_of_rest(predictor: str, scenario: ScenarioSpec) -> bool:
    law = scenario.x1_law
    if isinstance(law, Independent):
        return True
    if isinstance(law, SimpleCorrelation):
        return predictor not in ("X1", "X5")
    return predictor not in ("X1",) + PARENTS


def conditional_law(predictor: str, scenario: ScenarioSpec) -> ConditionalLaw:
    """Law of a continuous correlated predictor given the others.

    Raises :class:`UnknownConditionalLaw` for predictors that are independent
    of the rest (their conditional law is the marginal) or categorical.
    """
    _check_predictor(predictor, scenario)
    law = scenario.x1_law
    if isinstance(law, SimpleCorrelation) and predictor in ("X1", "X5"):
        other = "X5" if predictor == "X1" else "X1"
        rho = law.rho
        return ConditionalLaw(predictor, lambda c: rho * c[other], math.sqrt(1 - rho**2))
    if isinstance(law, LinearParents):
        if predictor == "X1":
            return ConditionalLaw("X1", lambda c: _parent_mean(c, law), law.nu_sd)
        if predictor in PARENTS[1:]:
            k = PARENTS.index(predictor)
            ck, nu2 = law.coefs[k], law.nu_sd**2
            post_var = 1.0 / (1.0 + ck**2 / nu2)

            def mean(c, k=k, ck=ck):
                resid = c["X1"] - _parent_mean(c, law) + ck * c[PARENTS[k]]
                return post_var * ck * resid / nu2

            return ConditionalLaw(predictor, mean, math.sqrt(post_var))
    raise UnknownConditionalLaw(f"no Gaussian conditional law for {predictor} in {scenario.name}")


def x1_moments(scenario: ScenarioSpec) -> tuple[float, float]:
    """(mean, variance) of X1."""
    law = scenario.x1_law
    if isinstance(law, LinearParents):
        c = law.coefs
        mean = law.intercept + 0.5 * c[0]
        var = 0.25 * c[0] ** 2 + sum(ci**2 for ci in c[1:]) + law.nu_sd**2
        return mean, var
    return 0.0, 1.0


def _conditional_variance(predictor: str, scenario: ScenarioSpec) -> float:
    if _independent_of_rest(predictor, scenario):
        if predictor == "X1":
            return x1_moments(scenario)[1]
        if predictor.startswith("X"):
            return 1.0
        raise UnknownConditionalLaw(f"{predictor} is not Gaussian")
    return conditional_law(predictor, scenario).sd ** 2


def _marginal_variance(predictor: str, scenario: ScenarioSpec) -> float:
    if predictor == "X1":
        return x1_moments(scenario)[1]
    if predictor.startswith("X"):
        return 1.0
    raise UnknownConditionalLaw(f"{predictor} is not continuous")


def _check_predictor(predictor: str, scenario: ScenarioSpec) -> None:
    if predictor not in scenario.predictors:
        raise SchemaError(f"unknown predictor {predictor!r} for scenario {scenario.name}")


# -- truths ------------------------------------------------------------------------

@dataclass(frozen=True)
class TruthReport:
    predictor: str
    method: str  # "monte_carlo" | "analytic"
    e_orig_true: float
    e_switch_true: float
    mi_true: float | None
    ci_true: float | None = None
    mc_se: float = 0.0
    n_pop: int = 0
    e_orig_mc: float | None = None


def _population(n_pop: int, scenario: ScenarioSpec, rng: RngStream):
    gen = rng.generator()
    cols = _draw_predictors(n_pop, scenario, gen)
    eps = scenario.noise_sd * gen.standard_normal(n_pop)
    return cols, eps, gen


def _switch_effect(cols, predictor, switched, scenario) -> tuple[float, float]:
    if predictor not in SIGNAL:
        return 0.0, 0.0
    base = f0(cols, scenario.log_offset)
    moved = dict(cols)
    moved[predictor] = switched
    d = (f0(moved, scenario.log_offset) - base) ** 2
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))


def true_mvim(predictor: str, scenario: ScenarioSpec, n_pop: int, rng: RngStream) -> TruthReport:
    """Monte-Carlo MVIM: each population row is paired with a uniformly
    permuted partner row whose value of ``predictor`` it receives."""
    _check_predictor(predictor, scenario)
    if n_pop < 10_000:
        raise ValueError("n_pop must be >= 10^4")
    cols, eps, gen = _population(n_pop, scenario, rng)
    if predictor in SIGNAL:
        switched = cols[predictor][gen.permutation(n_pop)]
    else:
        switched = None
    mi, se = _switch_effect(cols, predictor, switched, scenario)
    e_orig = scenario.noise_sd**2
    return TruthReport(
        predictor, "monte_carlo", e_orig, e_orig + mi, mi, None, se, n_pop,
        e_orig_mc=float(np.mean(eps**2)),
    )


def true_cvim(predictor: str, scenario: ScenarioSpec, n_pop: int, rng: RngStream) -> TruthReport:
    """Monte-Carlo CVIM with the switched value drawn from the true
    conditional law given the realised other predictors."""
    _check_predictor(predictor, scenario)
    if n_pop < 10_000:
        raise ValueError("n_pop must be >= 10^4")
    cols, eps, gen = _population(n_pop, scenario, rng)
    if predictor not in SIGNAL:
        switched = None
    elif _independent_of_rest(predictor, scenario):
        switched = cols[predictor][gen.permutation(n_pop)]
    else:
        switched = conditional_law(predictor, scenario).draw(cols, gen)
    ci, se = _switch_effect(cols, predictor, switched, scenario)
    e_orig = scenario.noise_sd**2
    return TruthReport(
        predictor, "monte_carlo", e_orig, e_orig + ci, None, ci, se, n_pop,
        e_orig_mc=float(np.mean(eps**2)),
    )


def analytic_truths(predictor: str, scenario: ScenarioSpec) -> TruthReport:
    """Closed-form MVIM (and CVIM where defined) for predictors entering f0
    linearly: X1 (slope 2 - 4 C1, whose square is always 4), X5, C1, noise."""
    _check_predictor(predictor, scenario)
    e_orig = scenario.noise_sd**2
    if predictor == "X1" or predictor == "X5":
        mvim = 8.0 * _marginal_variance(predictor, scenario)
        cvim = 8.0 * _conditional_variance(predictor, scenario)
    elif predictor == "C1":
        mean, var = x1_moments(scenario)
        mvim = 0.5 * (4.0 - 16.0 * mean + 16.0 * (var + mean**2))
        cvim = mvim if _independent_of_rest("C1", scenario) else None
    elif predictor not in SIGNAL:
        mvim, cvim = 0.0, 0.0
    else:
        raise AnalyticFormUnavailable(f"analytic form unavailable for {predictor}; use true_mvim")
    return TruthReport(predictor, "analytic", e_orig, e_orig + mvim, mvim, cvim)


def r_squared_true(predictor: str, scenario: ScenarioSpec) -> float:
    """1 - Var(X_j | rest) / Var(X_j) for continuous Gaussian predictors."""
    _check_predictor(predictor, scenario)
    return 1.0 - _conditional_variance(predictor, scenario) / _marginal_variance(predictor, scenario)
