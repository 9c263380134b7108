import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vimlab import dgp
from vimlab.data import BINARY, Dataset, SchemaError
from vimlab.importance import (
    AMVIM,
    CVIM,
    MVIM,
    ConditionalModel,
    DegeneratePermutationWarning,
    EstimatorConfig,
    ImportanceEstimate,
    PositivityError,
    conditional_switch,
    estimate_amvim,
    estimate_cvim,
    estimate_loco,
    estimate_mvim,
    estimate_mvim_many,
    estimate_r_squared,
    fit_conditional_model,
    true_conditional_model,
)
from vimlab.models import AdditiveSplineSpec, ExactSpec, GradientBoostingSpec, OracleSpec
from vimlab.rng import RngStream

LINEAR = AdditiveSplineSpec(basis_per_var=1)  # plain least squares on every predictor
SMALL = dgp.INDEPENDENT.replace(n_noise=3)


def additive_data(n, seed, slope=2.0):
    gen = np.random.default_rng(seed)
    x, z, w = gen.standard_normal((3, n))
    y = slope * x + np.sin(z) + gen.standard_normal(n)
    return Dataset.from_arrays({"x": x, "z": z, "w": w, "y": y}, outcome="y")


def estimate(point, reps=(1.0,)):
    reps = np.asarray(reps, dtype=float)
    return ImportanceEstimate("X1", CVIM, point, reps, float(reps.std()), 1.0, 1.0 + point)


class TestConfig:
    def test_defaults(self):
        c = EstimatorConfig()
        assert (c.outer_reps, c.splits_per_rep, c.permutations) == (1, 10, 5)
        assert c.train_fraction == pytest.approx(2 / 3)
        assert (c.small_n_threshold, c.m_small) == (5000, 10)

    @pytest.mark.parametrize("kw", [dict(outer_reps=0), dict(splits_per_rep=0), dict(permutations=0),
                                    dict(train_fraction=1.0), dict(train_fraction=0.0), dict(outer_mode="x")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EstimatorConfig(**kw)

    def test_small_n_raises_permutations(self):
        c = EstimatorConfig()
        assert c.permutations_for(4999) == 10
        assert c.permutations_for(5000) == 5


class TestMvim:
    def test_oracle_independent_x1(self):
        d = dgp.generate(1500, SMALL, RngStream(1))
        e = estimate_mvim(d, "X1", OracleSpec(), EstimatorConfig(), RngStream(2))
        assert e.kind == MVIM and e.m == 10 and len(e.replicate_values) == 10
        assert abs(e.point - 8.0) <= 3 * e.spread + 0.5

    def test_point_is_switch_minus_orig(self):
        d = dgp.generate(600, SMALL, RngStream(3))
        e = estimate_mvim(d, "X5", OracleSpec(), EstimatorConfig(splits_per_rep=3), RngStream(4))
        assert e.point == pytest.approx(e.e_switch_hat - e.e_orig_hat, abs=1e-12)
        assert e.point == pytest.approx(e.replicate_values.mean())

    def test_noise_predictor_exactly_zero_for_oracle(self):
        d = dgp.generate(600, SMALL, RngStream(5))
        assert estimate_mvim(d, "X6", OracleSpec(), EstimatorConfig(splits_per_rep=2), 1).point == 0.0

    def test_many_matches_single(self):
        d = dgp.generate(400, SMALL, RngStream(6))
        spec = GradientBoostingSpec(n_trees=30, max_depth=2)
        cfg = EstimatorConfig(splits_per_rep=2, outer_reps=2)
        many = estimate_mvim_many(d, ["X1", "C2", "X7"], spec, cfg, RngStream(7))
        for e in many:
            single = estimate_mvim(d, e.predictor, spec, cfg, RngStream(7))
            assert single.point == e.point
            assert np.array_equal(single.replicate_values, e.replicate_values)

    def test_deterministic_across_workers(self):
        d = dgp.generate(400, SMALL, RngStream(8))
        spec = GradientBoostingSpec(n_trees=20, max_depth=2)
        a = estimate_mvim(d, "X1", spec, EstimatorConfig(splits_per_rep=3), RngStream(9))
        b = estimate_mvim(d, "X1", spec, EstimatorConfig(splits_per_rep=3, workers=2), RngStream(9))
        assert np.array_equal(a.replicate_values, b.replicate_values)

    @pytest.mark.parametrize("mode", ["subsample", "bootstrap"])
    def test_outer_replicates(self, mode):
        d = dgp.generate(600, SMALL, RngStream(10))
        cfg = EstimatorConfig(outer_reps=3, splits_per_rep=2, outer_mode=mode)
        e = estimate_mvim(d, "X5", OracleSpec(), cfg, RngStream(11))
        assert len(e.replicate_values) == 6 and e.B == 3
        assert e.n_train == round(2 / 3 * 300) or mode == "bootstrap"

    def test_degenerate_predictor(self):
        d = dgp.generate(300, SMALL, RngStream(12))
        d = d.with_column("X7", np.zeros(300))
        with pytest.warns(DegeneratePermutationWarning):
            e = estimate_mvim(d, "X7", LINEAR, EstimatorConfig(splits_per_rep=2), 1)
        assert e.point == 0.0

    def test_errors(self):
        d = dgp.generate(300, SMALL, RngStream(13))
        with pytest.raises(SchemaError):
            estimate_mvim(d, "Y", OracleSpec(), EstimatorConfig(), 1)
        with pytest.raises(ValueError):
            estimate_mvim(d.take(np.arange(20)), "X1", OracleSpec(), EstimatorConfig(), 1)

    def test_exact_stub_converges_to_truth(self):
        d = dgp.generate(150_000, dgp.INDEPENDENT.replace(n_noise=0), RngStream(14))
        truth = dgp.analytic_truths("X1", dgp.INDEPENDENT).mi_true
        e = estimate_mvim(d, "X1", ExactSpec(), EstimatorConfig(splits_per_rep=1, permutations=1), RngStream(15))
        assert abs(e.point - truth) <= 0.02 * truth


class TestConditionalModel:
    def test_strong_residual_sd(self):
        d = dgp.generate(30_000, dgp.STRONG.replace(n_noise=2), RngStream(1))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(2))
        assert cm.residual_sd == pytest.approx(0.2575, rel=0.10)
        assert cm.residual_sd >= 0

    def test_independent_target_keeps_marginal_sd(self):
        d = dgp.generate(6000, SMALL, RngStream(3))
        cm = fit_conditional_model(d, "X2", LINEAR, EstimatorConfig(), RngStream(4))
        assert cm.residual_sd == pytest.approx(1.0, abs=0.05)

    def test_binary_constant_probability(self):
        gen = np.random.default_rng(5)
        n = 20000
        d = Dataset.from_arrays(
            {"c": gen.integers(0, 2, n), "a": gen.standard_normal(n), "b": gen.standard_normal(n)},
            kinds={"c": BINARY},
        )
        cm = fit_conditional_model(d, "c", GradientBoostingSpec(n_trees=20, max_depth=2, learning_rate=0.1,
                                                                min_leaf=500), EstimatorConfig(), RngStream(6))
        p = cm.probabilities(d)
        assert p.shape == (n, 2)
        assert np.allclose(p.sum(axis=1), 1.0)
        assert np.all(np.abs(p[:, 1] - 0.5) <= 0.05)

    def test_multinomial_probabilities_valid(self):
        d = dgp.generate(1500, SMALL, RngStream(7))
        cm = fit_conditional_model(d, "C2", GradientBoostingSpec(n_trees=30), EstimatorConfig(), RngStream(8))
        p = cm.probabilities(d)
        assert p.shape == (1500, 3)
        assert np.all((p >= 0) & (p <= 1)) and np.allclose(p.sum(axis=1), 1.0)
        switched = conditional_switch(d, cm, RngStream(9))["C2"]
        assert set(np.unique(switched)) <= {1, 2, 3}

    def test_single_predictor_rejected(self):
        d = Dataset.from_arrays({"a": np.arange(50.0), "y": np.arange(50.0)}, outcome="y")
        with pytest.raises(ValueError):
            fit_conditional_model(d, "a", LINEAR, EstimatorConfig(), 1)


class TestConditionalSwitch:
    def test_zero_residuals_give_fitted_means(self):
        gen = np.random.default_rng(1)
        a, b = gen.standard_normal((2, 200))
        d = Dataset.from_arrays({"x": 3 * a - b, "a": a, "b": b})
        exact_ls = AdditiveSplineSpec(basis_per_var=1, ridge=0.0)
        cm = fit_conditional_model(d, "x", exact_ls, EstimatorConfig(), RngStream(2))
        out = conditional_switch(d, cm, RngStream(3))
        assert np.allclose(out["x"], cm.mean(d), atol=1e-9)
        assert np.allclose(out["x"], d["x"], atol=1e-9)

    @given(st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_residual_multiset_and_mean(self, seed):
        d = dgp.generate(300, dgp.WEAK.replace(n_noise=1), RngStream(seed))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(seed, 1))
        out = conditional_switch(d, cm, RngStream(seed, 2))
        mu = cm.mean(d)
        assert np.allclose(np.sort(out["X1"] - mu), np.sort(d["X1"] - mu), atol=1e-12)
        assert out["X1"].mean() == pytest.approx(d["X1"].mean(), abs=1e-10)
        for c in d.names:
            if c != "X1":
                assert np.array_equal(out[c], d[c])

    def test_schema_mismatch(self):
        d = dgp.generate(300, SMALL, RngStream(4))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(5))
        with pytest.raises(SchemaError):
            conditional_switch(d.drop("X1"), cm, 1)
        wrong = ConditionalModel("C1", "continuous", cm.mean_model, 1.0)
        with pytest.raises(SchemaError):
            conditional_switch(d, wrong, 1)


class TestCvim:
    def test_independent_agrees_with_mvim(self):
        d = dgp.generate(1500, SMALL, RngStream(1))
        cfg = EstimatorConfig(splits_per_rep=10)
        m = estimate_mvim(d, "X1", OracleSpec(), cfg, RngStream(2))
        c = estimate_cvim(d, "X1", OracleSpec(), LINEAR, cfg, RngStream(2))
        combined = math.hypot(m.spread, c.spread)
        assert c.kind == CVIM
        assert abs(c.point - m.point) <= 3 * combined

    def test_point_is_cond_minus_orig(self):
        d = dgp.generate(600, dgp.MODERATE.replace(n_noise=1), RngStream(3))
        c = estimate_cvim(d, "X1", OracleSpec(), LINEAR, EstimatorConfig(splits_per_rep=2), RngStream(4))
        assert c.point == pytest.approx(c.e_switch_hat - c.e_orig_hat, abs=1e-12)
        assert 0 <= c.r_squared <= 1

    def test_true_law_with_exact_stub(self):
        sc = dgp.MODERATE.replace(n_noise=0)
        d = dgp.generate(60_000, sc, RngStream(5))
        cond = true_conditional_model("X1", sc)
        c = estimate_cvim(d, "X1", ExactSpec(), None, EstimatorConfig(splits_per_rep=1, permutations=2),
                          RngStream(6), conditional=cond)
        assert c.point == pytest.approx(8 * 0.5075**2, rel=0.05)

    def test_too_few_predictors(self):
        d = Dataset.from_arrays({"a": np.arange(50.0), "y": np.arange(50.0)}, outcome="y")
        with pytest.raises(ValueError):
            estimate_cvim(d, "a", LINEAR, LINEAR, EstimatorConfig(), 1)


class TestRSquared:
    @pytest.mark.parametrize("sc,target,tol", [(dgp.WEAK, 0.48, 0.03), (dgp.STRONG, 0.93, 0.02)])
    def test_scenarios(self, sc, target, tol):
        d = dgp.generate(30_000, sc.replace(n_noise=2), RngStream(1))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(2))
        assert estimate_r_squared(d, "X1", cm) == pytest.approx(target, abs=tol)

    def test_independent(self):
        d = dgp.generate(6000, SMALL, RngStream(3))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(4))
        assert estimate_r_squared(d, "X1", cm) <= 0.05

    def test_errors(self):
        d = dgp.generate(300, SMALL, RngStream(5))
        cm = fit_conditional_model(d, "X1", LINEAR, EstimatorConfig(), RngStream(6))
        with pytest.raises(ValueError):
            estimate_r_squared(d.with_column("X1", np.ones(300)), "X1", cm)
        with pytest.raises(SchemaError):
            estimate_r_squared(d, "C1", cm)


class TestAmvim:
    def test_arithmetic(self):
        assert estimate_amvim(estimate(2.0608), 0.78).point == pytest.approx(9.367, abs=1e-3)
        assert estimate_amvim(estimate(0.53), 0.934).point == pytest.approx(8.03, abs=0.005)
        assert estimate_amvim(estimate(3.3), 0.0).point == 3.3

    def test_replicates_scaled(self):
        a = estimate_amvim(estimate(2.0, [1.0, 3.0]), 0.5)
        assert a.kind == AMVIM
        assert np.allclose(a.replicate_values, [2.0, 6.0])
        assert a.spread == pytest.approx(2.0)

    @given(st.floats(1 - 1e-6, 1.0))
    def test_positivity_error(self, r2):
        with pytest.raises(PositivityError, match="indeterminable"):
            estimate_amvim(estimate(1.0), r2)


class TestLoco:
    def test_additive_link(self):
        d = additive_data(6000, 1)
        cfg = EstimatorConfig(splits_per_rep=5)
        psi = estimate_loco(d, "x", LINEAR, cfg, RngStream(2))
        mi = estimate_mvim(d, "x", LINEAR, cfg, RngStream(3))
        assert psi.point == pytest.approx(4.0, rel=0.1)
        assert mi.point == pytest.approx(2 * psi.point, rel=0.1)

    def test_noise_predictor(self):
        d = additive_data(3000, 4)
        assert estimate_loco(d, "w", LINEAR, EstimatorConfig(splits_per_rep=3), RngStream(5)).point < 0.01

    def test_x5_independent(self):
        d = dgp.generate(30_000, dgp.INDEPENDENT.replace(n_noise=2), RngStream(6))
        psi = estimate_loco(d, "X5", LINEAR, EstimatorConfig(splits_per_rep=2), RngStream(7))
        assert psi.point == pytest.approx(4.0, rel=0.1)
