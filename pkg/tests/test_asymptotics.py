import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benedicks.analytic import halfspace_kernel, halfspace_survival
from benedicks.asymptotics import (
    Dimension,
    FitError,
    classify_cone_dimension,
    fit_bound_constants,
    fit_rate,
    thm1_prediction,
    thm2_prediction,
)
from benedicks.estimators import SurvivalCurve


def series(t, v, se=None):
    return SurvivalCurve.from_values(t, v, se)


class TestFitRate:
    def test_pure_power(self):
        t = np.geomspace(10, 1e4, 40)
        fit = fit_rate(series(t, 3 * t**-1.5))
        assert fit.model == "PurePower"
        assert fit.p == pytest.approx(1.5, abs=1e-6)
        assert fit.C == pytest.approx(3.0, rel=1e-6)
        assert fit.q is None

    def test_log_corrected(self):
        t = np.geomspace(1e2, 1e6, 50)
        v = t**-1.0 * np.log(t) ** -2.0
        fit = fit_rate(series(t, v))
        assert fit.model == "LogCorrectedPower"
        assert fit.p == pytest.approx(1.0, abs=0.05)
        assert fit.q == pytest.approx(2.0, abs=0.3)
        assert fit.criterion_scores["LogCorrectedPower"] < fit.criterion_scores["PurePower"]
        # the pure-power description of the same data is visibly off
        forced = fit_rate(series(t, v), model="PurePower")
        assert abs(forced.p - 1.0) > 0.15

    def test_plateau(self):
        t = np.geomspace(1, 1e3, 30)
        P = 0.8 / np.sqrt(t)
        fit = fit_rate(series(t, np.sqrt(t) * P))
        assert fit.model == "Plateau"
        assert fit.C == pytest.approx(0.8, rel=1e-9)
        assert fit.p == 0.0

    def test_noisy_power_ci_covers_truth(self):
        rng = np.random.default_rng(4)
        t = np.geomspace(10, 1e3, 30)
        v = 2 * t**-1.5 * (1 + 0.01 * rng.standard_normal(t.size))
        fit = fit_rate(series(t, v, 0.01 * v), model="PurePower")
        assert fit.ci_p[0] <= 1.5 <= fit.ci_p[1]
        assert fit.ci_p[1] - fit.ci_p[0] < 0.05

    def test_bootstrap_is_reproducible(self):
        rng = np.random.default_rng(5)
        t = np.geomspace(10, 1e3, 20)
        v = t**-1.2 * np.exp(0.02 * rng.standard_normal(t.size))
        a, b = fit_rate(series(t, v)), fit_rate(series(t, v))
        assert a.ci_p == b.ci_p and a.ci_C == b.ci_C

    def test_window(self):
        t = np.geomspace(1, 1e4, 60)
        v = np.where(t < 10, 1.0, 3 * t**-1.5)
        fit = fit_rate(series(t, v), window=(10, 1e4))
        assert fit.p == pytest.approx(1.5, abs=1e-6)
        assert fit.window == (10.0, 1e4)

    @pytest.mark.parametrize(
        "t, v, kw",
        [
            (np.geomspace(1, 10, 5), np.ones(5), {}),
            (np.geomspace(1, 10, 20), -np.ones(20), {}),
            (np.geomspace(1, 10, 20), np.ones(20), {"window": (5, 5)}),
            (np.geomspace(10, 100, 20), np.geomspace(10, 100, 20) ** -1.0, {"model": "LogCorrectedPower"}),
            (np.geomspace(0.1, 1e3, 20), np.geomspace(0.1, 1e3, 20) ** -1.0, {"model": "LogCorrectedPower"}),
        ],
    )
    def test_refusals(self, t, v, kw):
        with pytest.raises(FitError):
            fit_rate(series(t, v), **kw)

    def test_short_window_never_picks_log_model(self):
        t = np.geomspace(10, 100, 20)
        assert fit_rate(series(t, t**-1.0 * np.log(t) ** -2)).model != "LogCorrectedPower"

    @given(st.floats(0.01, 100), st.floats(0.3, 2.5))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, c, p):
        t = np.geomspace(10, 1e4, 25)
        a = fit_rate(series(t, t**-p), model="PurePower", n_boot=20)
        b = fit_rate(series(t, c * t**-p), model="PurePower", n_boot=20)
        assert b.p == pytest.approx(a.p, abs=1e-9)
        assert b.C == pytest.approx(c * a.C, rel=1e-9)


class TestClassify:
    t = np.geomspace(1, 1e3, 40)

    def test_two(self):
        assert classify_cone_dimension(series(self.t, 0.7 / np.sqrt(self.t))).dimension is Dimension.TWO

    def test_one(self):
        rep = classify_cone_dimension(series(self.t, 0.7 * self.t**-0.25))
        assert rep.dimension is Dimension.ONE
        assert rep.final_slope == pytest.approx(0.25, abs=1e-9)

    def test_halfspace_closed_form(self):
        rep = classify_cone_dimension(series(self.t, halfspace_survival(self.t, 1.0)))
        assert rep.dimension is Dimension.TWO

    def test_short_curve(self):
        t = np.geomspace(1, 10, 20)
        assert classify_cone_dimension(series(t, 1 / np.sqrt(t))).dimension is Dimension.INCONCLUSIVE

    def test_between_thresholds(self):
        rep = classify_cone_dimension(series(self.t, self.t ** (-0.5 + 0.07)))
        assert rep.dimension is Dimension.INCONCLUSIVE and rep.hint

    @given(st.floats(1e-3, 1e3), st.sampled_from([0.5, 0.25, 0.1]))
    @settings(max_examples=20, deadline=None)
    def test_scale_invariance(self, c, p):
        base = classify_cone_dimension(series(self.t, self.t**-p))
        scaled = classify_cone_dimension(series(self.t, c * self.t**-p))
        assert base.dimension is scaled.dimension
        assert scaled.final_slope == pytest.approx(base.final_slope, abs=1e-9)

    def test_report_dict(self):
        d = classify_cone_dimension(series(self.t, 1 / np.sqrt(self.t))).to_dict()
        assert d["dimension"] == "Two" and len(d["dyadic_t"]) == len(d["g"])


class TestPredictions:
    def test_thm1_matches_halfspace_limit(self):
        assert thm1_prediction(2, 1.0, 2.0, 0.0, 0.0) == pytest.approx(4 / (2 * math.pi), rel=1e-15)
        assert thm1_prediction(2, 1.0, 1.0, 1.0, 1.0) == pytest.approx(0.63662, abs=5e-6)
        assert thm1_prediction(3, 0, 0, 0, 0) == 0.0

    def test_thm2(self):
        assert thm2_prediction(1.0) == pytest.approx(0.79788456, abs=5e-9)
        assert thm2_prediction(0.0) == 0.0
        with pytest.raises(ValueError):
            thm2_prediction(-1.0)


class TestBoundConstants:
    ts = np.geomspace(1.5, 1e3, 30)

    def test_two_halfspace(self):
        xs = [(0.0, 0.5), (0.0, 1.0), (0.0, 2.0)]
        surv = [(t, x, float(halfspace_survival(t, x[1]))) for t in self.ts for x in xs]
        kern = [(t, x, y, float(halfspace_kernel(t, x, y))) for t in self.ts for x in xs for y in xs]
        rep = fit_bound_constants(kern, surv, lambda p: abs(p[-1]))
        assert rep.applicable and not rep.growth_flag
        assert rep.K_hat < 0.8
        for t, x, y, p in kern:
            assert rep.Gamma_hat >= t**2 * p / ((1 + abs(x[1])) * (1 + abs(y[1])))

    def test_growth_flag(self):
        x = (0.0, 1.0)
        kern = [(t, x, x, 1.0 / t) for t in self.ts]
        rep = fit_bound_constants(kern, [], lambda p: 1.0)
        assert rep.growth_flag

    def test_dimension_one_flagged(self):
        rep = fit_bound_constants([], [(2.0, (0.0, 1.0), 0.5)], lambda p: 1.0, dimension="One")
        assert not rep.applicable and rep.note
