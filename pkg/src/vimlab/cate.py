"""Switch-based importance versus its CATE representation.

A :class:`StructuralModel` fixes the confounder law, the treatment law given
the confounder and the potential-outcome means mu(x, z) = E(Y_x | Z = z).
The switch-based side simulates outcomes and measures e_switch - e_orig
directly; the CATE side evaluates the closed-form expressions in squared
conditional treatment effects. Discrete models with a finite confounder
support can also be enumerated exactly with rational arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Any, Callable, Sequence

import numpy as np

from .importance import PositivityError
from .rng import RngStream, as_stream

BINARY, MULTINOMIAL, CONTINUOUS = "binary", "multinomial", "continuous"


@dataclass(frozen=True)
class StructuralModel:
    """Small causal model with known potential-outcome means.

    ``mu(x, z)`` and ``propensity(z)`` must work elementwise on numpy arrays
    and, for exact enumeration, on scalars (``Fraction`` values allowed).
    ``propensity`` returns one probability per treatment level, in ``levels``
    order. Continuous treatments use ``draw_x(z, gen)`` instead.
    """

    name: str
    kind: str
    mu: Callable[[Any, Any], Any]
    draw_z: Callable[[np.random.Generator, int], np.ndarray]
    propensity: Callable[[Any], Sequence[Any]] | None = None
    draw_x: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None
    levels: tuple = ()
    noise_sd: float = 1.0
    z_support: tuple[tuple[Any, Any], ...] | None = None  # ((z, P(z)), ...)

    def __post_init__(self):
        if self.kind not in (BINARY, MULTINOMIAL, CONTINUOUS):
            raise ValueError(f"unknown treatment kind {self.kind!r}")
        if self.kind == CONTINUOUS:
            if self.draw_x is None:
                raise ValueError("continuous treatment needs draw_x")
        else:
            if self.propensity is None:
                raise ValueError("discrete treatment needs a propensity function")
            if not self.levels:
                object.__setattr__(self, "levels", (0, 1) if self.kind == BINARY else ())
            if self.kind == BINARY and tuple(self.levels) != (0, 1):
                raise ValueError("binary levels are (0, 1)")
            if len(self.levels) < 2:
                raise ValueError("need at least two treatment levels")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def exact(self) -> bool:
        return self.kind != CONTINUOUS and self.z_support is not None


@dataclass(frozen=True)
class EquivalenceResult:
    identity: str
    switch_based: float
    cate_based: float
    mc_se: float
    n_mc: int
    positivity_violated: bool = False

    @property
    def gap(self) -> float:
        return abs(self.switch_based - self.cate_based)

    def passes(self, n_se: float = 3.0) -> bool:
        return self.gap <= n_se * self.mc_se


@dataclass(frozen=True)
class CausalVarianceDecomposition:
    between: float
    causal: float
    residual: float
    total: float  # simulated Var(Y)
    mc_se: float  # standard error of (between + causal + residual - total)
    n_mc: int

    @property
    def sum(self) -> float:
        return self.between + self.causal + self.residual


# -- Monte Carlo helpers -------------------------------------------------------------

def _probs(model: StructuralModel, z: np.ndarray) -> np.ndarray:
    n = len(z)
    P = np.column_stack([np.broadcast_to(np.asarray(p, dtype=np.float64), (n,)) for p in model.propensity(z)])
    if P.shape[1] != len(model.levels):
        raise ValueError("propensity must return one probability per level")
    if np.any(P < 0) or np.any(P > 1) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("propensities must lie in [0, 1] and sum to 1")
    return P


def _draw_level(P: np.ndarray, levels, gen) -> np.ndarray:
    cdf = np.cumsum(P, axis=1)
    u = gen.random(P.shape[0])[:, None]
    idx = np.minimum((u >= cdf).sum(axis=1), P.shape[1] - 1)
    return np.asarray(levels)[idx]


def _draw_x(model, z, gen, P=None):
    if model.kind == CONTINUOUS:
        return np.asarray(model.draw_x(z, gen), dtype=np.float64)
    return _draw_level(_probs(model, z) if P is None else P, model.levels, gen)


def _mu(model, x, z) -> np.ndarray:
    return np.broadcast_to(np.asarray(model.mu(x, z), dtype=np.float64), (len(z),))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def _switch_based(model, n_mc, gen, conditional: bool) -> tuple[float, float]:
    """mean of (Y - mu(X', Z))^2 - (Y - mu(X, Z))^2 on simulated data."""
    z = model.draw_z(gen, n_mc)
    P = None if model.kind == CONTINUOUS else _probs(model, z)
    x = _draw_x(model, z, gen, P)
    y = _mu(model, x, z) + model.noise_sd * gen.standard_normal(n_mc)
    if conditional:
        x_new = _draw_x(model, z, gen, P)
    else:
        x_new = x[gen.permutation(n_mc)]
    d = (y - _mu(model, x_new, z)) ** 2 - (y - _mu(model, x, z)) ** 2
    return _mean_se(d)


def _pair_sum(model, z, P_a, P_b, unordered: bool) -> np.ndarray:
    """sum over level pairs of P_a[:, x] * P_b[:, x*] * CATE^2(x, x*, z)."""
    L = model.levels
    mus = [_mu(model, np.full(len(z), lv), z) for lv in L]
    out = np.zeros(len(z))
    for a in range(len(L)):
        for b in range(len(L)):
            if a == b or (unordered and b < a):
                continue
            out += P_a[:, a] * P_b[:, b] * (mus[a] - mus[b]) ** 2
    return out


def _check_positivity(P: np.ndarray):
    # a marginal replicate may land on a level the confounder stratum never takes
    if np.any(P <= 0):
        raise PositivityError("a treatment level has zero probability given Z")


# -- identities -------------------------------------------------------------------------

def mvim_via_cate(model: StructuralModel, n_mc: int, rng: RngStream | int) -> EquivalenceResult:
    """Marginal importance by switching vs. its CATE form.

    Discrete: sum over ordered level pairs of p_x p_x* E_{Z|X=x}[CATE^2];
    the inner expectation is taken as E_Z[p_x(Z) CATE^2] / p_x and p_x* from
    an independent confounder draw. Continuous: CATE^2 averaged over
    (Z, X) from the joint law and X* from the marginal law.
    """
    rng = as_stream(rng)
    if n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    sw, sw_se = _switch_based(model, n_mc, rng.child("switch").generator(), conditional=False)
    gen = rng.child("cate").generator()
    z = model.draw_z(gen, n_mc)
    z_star = model.draw_z(gen, n_mc)
    if model.kind == CONTINUOUS:
        x = _draw_x(model, z, gen)
        x_star = _draw_x(model, z_star, gen)
        terms = (_mu(model, x, z) - _mu(model, x_star, z)) ** 2
        name = "mvim_continuous"
    else:
        P = _probs(model, z)
        _check_positivity(P)
        terms = _pair_sum(model, z, P, _probs(model, z_star), unordered=False)
        name = "mvim_discrete"
    cb, cb_se = _mean_se(terms)
    return EquivalenceResult(name, sw, cb, math.hypot(sw_se, cb_se), n_mc)


def cvim_via_cate(model: StructuralModel, n_mc: int, rng: RngStream | int) -> EquivalenceResult:
    """Conditional importance by conditional switching vs. its CATE form.

    Binary: 2 E_Z[p(Z)(1 - p(Z)) CATE^2]. Multinomial: 2 E_Z of the sum over
    unordered level pairs of p_x(Z) p_x*(Z) CATE^2. Continuous: CATE^2
    averaged over two independent draws from the law of X given Z.
    Degenerate propensities are allowed and flagged.
    """
    rng = as_stream(rng)
    if n_mc < 2:
        raise ValueError("n_mc must be >= 2")
    sw, sw_se = _switch_based(model, n_mc, rng.child("switch").generator(), conditional=True)
    gen = rng.child("cate").generator()
    z = model.draw_z(gen, n_mc)
    violated = False
    if model.kind == CONTINUOUS:
        x, x_star = _draw_x(model, z, gen), _draw_x(model, z, gen)
        terms = (_mu(model, x, z) - _mu(model, x_star, z)) ** 2
        name = "cvim_continuous"
    else:
        P = _probs(model, z)
        violated = bool(np.any(P.max(axis=1) >= 1.0))
        if model.kind == BINARY:
            tau = _mu(model, np.ones(n_mc), z) - _mu(model, np.zeros(n_mc), z)
            terms = 2.0 * P[:, 1] * (1 - P[:, 1]) * tau**2
            name = "cvim_binary"
        else:
            terms = 2.0 * _pair_sum(model, z, P, P, unordered=True)
            name = "cvim_multinomial"
    cb, cb_se = _mean_se(terms)
    return EquivalenceResult(name, sw, cb, math.hypot(sw_se, cb_se), n_mc, violated)


def causal_variance_decomposition(model: StructuralModel, n_mc: int,
                                  rng: RngStream | int) -> CausalVarianceDecomposition:
    """Var(Y) = Var_Z(sum_k mu_k p_k) + E_Z[p(1-p) CATE^2] + E_Z[sum_k Var(Y_k | Z) p_k].

    The first two terms and Var(Y) are Monte Carlo estimates; the residual
    term is the outcome noise variance.
    """
    if model.kind != BINARY:
        raise ValueError("the causal variance decomposition is implemented for binary treatments")
    rng = as_stream(rng)
    gen = rng.child("terms").generator()
    z = model.draw_z(gen, n_mc)
    P = _probs(model, z)
    mu0, mu1 = _mu(model, np.zeros(n_mc), z), _mu(model, np.ones(n_mc), z)
    m = mu0 * P[:, 0] + mu1 * P[:, 1]
    between = float(np.var(m, ddof=1))
    causal_terms = P[:, 1] * P[:, 0] * (mu1 - mu0) ** 2
    causal = float(causal_terms.mean())
    residual = model.noise_sd**2

    gen_y = rng.child("outcome").generator()
    zy = model.draw_z(gen_y, n_mc)
    x = _draw_x(model, zy, gen_y)
    y = _mu(model, x, zy) + model.noise_sd * gen_y.standard_normal(n_mc)
    total = float(np.var(y, ddof=1))

    def var_se(v):
        c = v - v.mean()
        return math.sqrt(max(np.mean(c**4) - np.mean(c**2) ** 2, 0.0) / len(v))

    se = math.sqrt(var_se(m) ** 2 + (causal_terms.std(ddof=1) ** 2 / n_mc) + var_se(y) ** 2)
    return CausalVarianceDecomposition(between, causal, residual, total, se, n_mc)


# -- exact enumeration -------------------------------------------------------------------

def _support(model: StructuralModel):
    if not model.exact:
        raise ValueError(f"model {model.name!r} has no finite confounder support")
    return model.z_support


def _levels_probs(model, z):
    return list(zip(model.levels, model.propensity(z)))


def exact_marginal_probs(model: StructuralModel) -> dict:
    out = {lv: 0 for lv in model.levels}
    for z, pz in _support(model):
        for lv, p in _levels_probs(model, z):
            out[lv] += pz * p
    return out


def exact_switch(model: StructuralModel, conditional: bool):
    """Brute-force E[(mu(X', Z) - mu(X, Z))^2] over every (Z, X, X')."""
    marginal = exact_marginal_probs(model)
    total = 0
    for z, pz in _support(model):
        lp = _levels_probs(model, z)
        for (x, px), (x_new, _) in product(lp, lp):
            p_new = dict(lp)[x_new] if conditional else marginal[x_new]
            total += pz * px * p_new * (model.mu(x_new, z) - model.mu(x, z)) ** 2
    return total


def exact_mvim_cate(model: StructuralModel):
    """Ordered-pair sum of p_x p_x* E_{Z|X=x}[CATE^2] with Bayes-weighted Z."""
    marginal = exact_marginal_probs(model)
    if any(p <= 0 for z, _ in _support(model) for p in model.propensity(z)):
        raise PositivityError("a treatment level has zero probability given Z")
    total = 0
    for x, x_star in product(model.levels, model.levels):
        if x == x_star:
            continue
        cond_mean = sum(pz * dict(_levels_probs(model, z))[x] * (model.mu(x, z) - model.mu(x_star, z)) ** 2
                        for z, pz in _support(model)) / marginal[x]
        total += marginal[x] * marginal[x_star] * cond_mean
    return total


def exact_cvim_cate(model: StructuralModel):
    """Binary: 2 E[p(1-p) CATE^2]; multinomial: 2 E[unordered pair sum]."""
    total = 0
    for z, pz in _support(model):
        lp = _levels_probs(model, z)
        inner = 0
        for i, (x, px) in enumerate(lp):
            for x_star, ps in lp[i + 1:]:
                inner += px * ps * (model.mu(x, z) - model.mu(x_star, z)) ** 2
        total += pz * 2 * inner
    return total


def exact_causal_decomposition(model: StructuralModel, noise_var=None):
    """(between, causal, residual, Var(Y)) by enumeration; binary only."""
    if model.kind != BINARY:
        raise ValueError("binary treatment required")
    noise_var = model.noise_sd**2 if noise_var is None else noise_var
    sup = _support(model)
    m = {}
    for z, _ in sup:
        p0, p1 = model.propensity(z)
        m[z] = model.mu(0, z) * p0 + model.mu(1, z) * p1
    ey = sum(pz * m[z] for z, pz in sup)
    between = sum(pz * (m[z] - ey) ** 2 for z, pz in sup)
    causal = 0
    var_y = noise_var
    for z, pz in sup:
        p0, p1 = model.propensity(z)
        causal += pz * p0 * p1 * (model.mu(1, z) - model.mu(0, z)) ** 2
        var_y += pz * (p0 * (model.mu(0, z) - ey) ** 2 + p1 * (model.mu(1, z) - ey) ** 2)
    return between, causal, noise_var, var_y


# -- test corpus -------------------------------------------------------------------------

F = Fraction


def _bernoulli_z(p):
    return lambda gen, n: (gen.random(n) < p).astype(np.float64)


def _categorical_z(values, probs):
    def draw(gen, n):
        return np.asarray(values, dtype=np.float64)[gen.choice(len(values), size=n, p=[float(p) for p in probs])]
    return draw


def _where(cond, a, b):
    if isinstance(cond, (bool, np.bool_)):
        return a if cond else b
    return np.where(cond, a, b)


def corpus() -> list[StructuralModel]:
    """Structural models spanning treatment types, effect heterogeneity and
    confounding; discrete ones carry a finite confounder support."""
    zero = ((F(0), F(1)),)
    half = ((F(0), F(1, 2)), (F(1), F(1, 2)))
    z3 = ((F(0), F(1, 4)), (F(1), F(1, 2)), (F(2), F(1, 4)))

    def mult_probs(z):
        # P(X = 1, 2, 3 | Z); shifts mass toward level 3 as z grows
        return (F(1, 2) - z / 8, F(1, 4) + 0 * z, F(1, 4) + z / 8)

    def mult_probs_indep(z):
        return (F(1, 5) + 0 * z, F(3, 10) + 0 * z, F(1, 2) + 0 * z)

    def mult_mu(x, z):
        return _where(x == 1, 0 * z, _where(x == 2, 1 + z, 3 - 2 * z)) + z * z

    return [
        StructuralModel(
            "binary_homogeneous", BINARY, mu=lambda x, z: 2 * x + 0 * z, draw_z=lambda g, n: np.zeros(n),
            propensity=lambda z: (F(1, 2) + 0 * z, F(1, 2) + 0 * z), z_support=zero,
        ),
        StructuralModel(
            "binary_confounded", BINARY, mu=lambda x, z: x + 3 * z, draw_z=_bernoulli_z(0.5),
            propensity=lambda z: (F(7, 10) - F(2, 5) * z, F(3, 10) + F(2, 5) * z), z_support=half,
        ),
        StructuralModel(
            "binary_zero_ate", BINARY, mu=lambda x, z: (2 * z - 1) * x, draw_z=_bernoulli_z(0.5),
            propensity=lambda z: (F(7, 10) - F(2, 5) * z, F(3, 10) + F(2, 5) * z), z_support=half,
        ),
        StructuralModel(
            "multinomial_confounded", MULTINOMIAL, mu=mult_mu, levels=(1, 2, 3),
            draw_z=_categorical_z([0, 1, 2], [F(1, 4), F(1, 2), F(1, 4)]), propensity=mult_probs, z_support=z3,
        ),
        StructuralModel(
            "multinomial_independent", MULTINOMIAL, mu=mult_mu, levels=(1, 2, 3),
            draw_z=_categorical_z([0, 1, 2], [F(1, 4), F(1, 2), F(1, 4)]), propensity=mult_probs_indep,
            z_support=z3,
        ),
        StructuralModel(
            "continuous_independent", CONTINUOUS, mu=lambda x, z: x + z,
            draw_z=lambda g, n: g.standard_normal(n), draw_x=lambda z, g: g.standard_normal(len(z)),
        ),
        StructuralModel(
            "continuous_confounded", CONTINUOUS, mu=lambda x, z: x * (1 + z) + z**2,
            draw_z=lambda g, n: g.standard_normal(n), draw_x=lambda z, g: 0.8 * z + 0.6 * g.standard_normal(len(z)),
        ),
        StructuralModel(
            "binary_null", BINARY, mu=lambda x, z: 0 * x + 2 * z, draw_z=_bernoulli_z(0.5),
            propensity=lambda z: (F(7, 10) - F(2, 5) * z, F(3, 10) + F(2, 5) * z), z_support=half,
        ),
    ]


def get_model(name: str) -> StructuralModel:
    for m in corpus():
        if m.name == name:
            return m
    raise KeyError(f"unknown structural model {name!r}")
