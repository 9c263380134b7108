import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vimlab import dgp
from vimlab.data import SchemaError
from vimlab.dgp import (
    INDEPENDENT,
    MODERATE,
    MULTIVARIATE,
    SCENARIOS,
    SIMPLE,
    STRONG,
    WEAK,
    AnalyticFormUnavailable,
    UnknownConditionalLaw,
    analytic_truths,
    f0,
    generate,
    r_squared_true,
    true_cvim,
    true_mvim,
)
from vimlab.rng import RngStream

ZERO_ROW = {k: np.array([0.0]) for k in ("X1", "X2", "X3", "X4", "X5", "U1", "U2")}
ZERO_ROW.update(C1=np.array([0]), C2=np.array([1]))


def row(**kw):
    r = dict(ZERO_ROW)
    r.update({k: np.array([v]) for k, v in kw.items()})
    return r


class TestF0:
    def test_zero_row(self):
        expected = 2 * math.log(0.1) + (-0.5) ** 3
        assert f0(row())[0] == pytest.approx(expected, abs=1e-12)
        assert f0(row())[0] == pytest.approx(-4.730170, abs=1e-6)

    def test_interaction_cancels(self):
        assert f0(row(X1=1.0, C1=1))[0] == pytest.approx(f0(row())[0], abs=1e-12)

    def test_c2_indicator(self):
        assert f0(row(C2=3))[0] - f0(row(C2=1))[0] == pytest.approx(2.0, abs=1e-12)
        assert f0(row(C2=2))[0] - f0(row(C2=1))[0] == pytest.approx(-1.0, abs=1e-12)

    @given(st.floats(-5, 5), st.integers(0, 1))
    def test_x1_slope_squared_is_four(self, x, c1):
        d = f0(row(X1=x + 1.0, C1=c1))[0] - f0(row(X1=x, C1=c1))[0]
        assert d**2 == pytest.approx(4.0, rel=1e-9)


class TestGenerate:
    def test_deterministic(self):
        a = generate(100, WEAK, RngStream(1))
        b = generate(100, WEAK, RngStream(1))
        assert a.equals(b)

    def test_columns(self):
        d = generate(10, INDEPENDENT, RngStream(1))
        assert d.predictors[:9] == list(dgp.SIGNAL)
        assert len(d.predictors) == 54 and d.outcome_name == "Y"
        assert d.meta("C2").levels == 3

    def test_marginals(self):
        d = generate(200_000, INDEPENDENT.replace(n_noise=1), RngStream(2))
        assert abs(d["X2"].mean()) < 0.02 and abs(d["X2"].var() - 1) < 0.02
        assert abs(d["C1"].mean() - 0.5) < 0.01
        assert set(np.unique(d["C2"])) == {1, 2, 3}
        assert d["U1"].min() >= -1 and d["U1"].max() <= 1
        assert abs(d["U1"].var() - 1 / 3) < 0.01

    def test_multivariate_x1_moments(self):
        d = generate(1_000_000, MULTIVARIATE.replace(n_noise=0), RngStream(3))
        assert abs(d["X1"].mean()) < 0.01
        assert abs(d["X1"].var() - 1) < 0.02

    def test_independent_noise_variance(self):
        d = generate(1_000_000, INDEPENDENT.replace(n_noise=0), RngStream(4))
        assert abs(np.var(d.outcome - dgp.f0_dataset(d)) - 1) < 0.02

    def test_weak_x1_variance(self):
        d = generate(1_000_000, WEAK.replace(n_noise=0), RngStream(5))
        assert abs(d["X1"].var() - 1.93) < 0.03

    def test_simple_correlation(self):
        d = generate(200_000, SIMPLE.replace(n_noise=0), RngStream(6))
        assert np.corrcoef(d["X1"], d["X5"])[0, 1] == pytest.approx(0.9, abs=0.01)

    def test_multivariate_corr_with_x5(self):
        d = generate(200_000, MULTIVARIATE.replace(n_noise=0), RngStream(7))
        assert np.corrcoef(d["X1"], d["X5"])[0, 1] == pytest.approx(-0.3, abs=0.01)


class TestTruths:
    def test_noise_predictor_exact_zero(self):
        t = true_mvim("X6", INDEPENDENT, 10_000, RngStream(1))
        assert t.mi_true == 0.0 and t.mc_se == 0.0
        assert analytic_truths("X30", STRONG).mi_true == 0.0

    def test_report_consistency(self):
        t = true_mvim("X1", WEAK, 20_000, RngStream(2))
        assert t.mi_true == pytest.approx(t.e_switch_true - t.e_orig_true)
        assert t.e_orig_true == 1.0
        assert abs(t.e_orig_mc - 1.0) < 0.05

    def test_small_population_rejected(self):
        with pytest.raises(ValueError):
            true_mvim("X1", INDEPENDENT, 999, RngStream(1))

    def test_unknown_predictor(self):
        with pytest.raises(SchemaError):
            true_mvim("Q", INDEPENDENT, 10_000, RngStream(1))

    @pytest.mark.parametrize("name", sorted(SCENARIOS))
    @pytest.mark.parametrize("pred", ["X1", "X5", "C1"])
    def test_mc_agrees_with_analytic(self, name, pred):
        sc = SCENARIOS[name]
        mc = true_mvim(pred, sc, 200_000, RngStream(11))
        an = analytic_truths(pred, sc)
        assert abs(mc.mi_true - an.mi_true) <= 3 * mc.mc_se

    @pytest.mark.parametrize("sc,expected", [(WEAK, 8.0), (MODERATE, 2.06), (STRONG, 0.53)])
    def test_cvim_x1(self, sc, expected):
        mc = true_cvim("X1", sc, 200_000, RngStream(12))
        an = analytic_truths("X1", sc)
        assert an.ci_true == pytest.approx(8 * sc.x1_law.nu_sd**2)
        assert abs(mc.ci_true - an.ci_true) <= 3 * mc.mc_se
        assert an.ci_true == pytest.approx(expected, abs=0.01)

    def test_cvim_reduces_to_mvim_when_independent(self):
        m = true_mvim("X2", INDEPENDENT, 50_000, RngStream(13))
        c = true_cvim("X2", INDEPENDENT, 50_000, RngStream(13))
        assert c.ci_true == pytest.approx(m.mi_true)

    def test_cvim_for_parent_uses_posterior(self):
        # X5 given the rest under WEAK: posterior variance 1 / (1 + 0.09).
        an = analytic_truths("X5", WEAK)
        assert an.ci_true == pytest.approx(8 / 1.09)
        mc = true_cvim("X5", WEAK, 200_000, RngStream(14))
        assert abs(mc.ci_true - an.ci_true) <= 3 * mc.mc_se

    def test_unknown_conditional_law(self):
        with pytest.raises(UnknownConditionalLaw):
            dgp.conditional_law("C2", WEAK)

    def test_analytic_examples(self):
        assert analytic_truths("X1", WEAK).mi_true == pytest.approx(8 * 1.93, abs=1e-9)
        assert analytic_truths("X1", STRONG).ci_true == pytest.approx(0.5305, abs=1e-4)
        assert analytic_truths("X5", INDEPENDENT).mi_true == 8.0
        assert analytic_truths("C1", INDEPENDENT).mi_true == pytest.approx(10.0)

    @pytest.mark.parametrize("pred", ["X2", "X4", "U1", "C2"])
    def test_analytic_unavailable(self, pred):
        with pytest.raises(AnalyticFormUnavailable):
            analytic_truths(pred, INDEPENDENT)

    def test_moderate_mvim_by_variance_algebra(self):
        assert analytic_truths("X1", MODERATE).mi_true == pytest.approx(8 * 1.18756, abs=1e-3)

    def test_c2_closed_form(self):
        # values (0, -1, 2) at prob 1/3: E[(g(C') - g(C))^2] = 2 Var(g) = 28/9
        t = true_mvim("C2", INDEPENDENT, 400_000, RngStream(15))
        assert abs(t.mi_true - 28 / 9) <= 3 * t.mc_se

    def test_x4_closed_form(self):
        # 2 Var((Z - 0.5)^3) for Z ~ N(0, 1)
        z = np.polynomial.hermite_e.hermegauss(40)
        nodes, w = z[0], z[1] / np.sqrt(2 * np.pi)
        g = (nodes - 0.5) ** 3
        expected = 2 * (w @ g**2 - (w @ g) ** 2)
        assert expected == pytest.approx(49.125, abs=1e-9)
        t = true_mvim("X4", INDEPENDENT, 400_000, RngStream(16))
        assert abs(t.mi_true - expected) <= 3 * t.mc_se

    def test_log_offset_controls_x2_truth(self):
        # A 0.01 offset inside the log gives the larger X2 importance (about 7.3);
        # the 0.1 offset of the mean function gives about 3.6.
        wide = true_mvim("X2", INDEPENDENT, 400_000, RngStream(17))
        narrow = true_mvim("X2", INDEPENDENT.replace(log_offset=0.01), 400_000, RngStream(17))
        assert wide.mi_true == pytest.approx(3.62, abs=0.1)
        assert narrow.mi_true == pytest.approx(7.30, abs=0.15)

    def test_doubling_population_is_stable(self):
        a = true_mvim("U1", INDEPENDENT, 100_000, RngStream(18))
        b = true_mvim("U1", INDEPENDENT, 200_000, RngStream(19))
        assert abs(a.mi_true - b.mi_true) <= 3 * math.hypot(a.mc_se, b.mc_se)


class TestRSquared:
    def test_values(self):
        assert r_squared_true("X1", WEAK) == pytest.approx(0.48, abs=0.005)
        assert r_squared_true("X1", STRONG) == pytest.approx(0.93, abs=0.005)
        assert r_squared_true("X1", MODERATE) == pytest.approx(0.783, abs=0.005)
        assert r_squared_true("X1", INDEPENDENT) == 0.0

    @given(st.floats(0.05, 3.0))
    @settings(max_examples=30)
    def test_in_unit_interval(self, nu):
        sc = WEAK.replace(x1_law=dgp.LinearParents(nu))
        assert 0 <= r_squared_true("X1", sc) < 1
