import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from benedicks import geometry as G
from benedicks.analytic import halfspace_kernel, halfspace_survival
from benedicks.estimators import SurvivalCurve
from benedicks.geometry import ReflectionFrame
from benedicks.pde import kernel_field
from benedicks.studies import PDESettings, axis_frames, lemma3_triples_closed_form, lemmaA_points
from benedicks.verify import (
    CheckReport,
    _report,
    check_duhamel,
    check_lemma3,
    check_lemmaA,
    check_reflection,
    check_thm_limits,
    check_time_ratio,
)


class TestReport:
    @given(
        st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 0.5)), min_size=1, max_size=20),
        st.floats(0, 0.1),
    )
    def test_pass_invariant(self, items, tol):
        viol, sig = zip(*items)
        rep = _report("x", "d", [{}] * len(items), viol, sig, tol)
        assert rep.passed == (rep.max_violation <= rep.tolerance + rep.stat_margin)
        excess = np.asarray(viol) - 3 * np.asarray(sig)
        assert rep.max_violation - rep.stat_margin == pytest.approx(excess.max(), abs=1e-12)
        assert rep.passed == bool(np.all(excess <= tol))

    def test_json_roundtrip(self):
        rep = _report("lemma3", "slit", [{"x": [0.0, 1.0]}], [0.1], [0.01], 0.0, details={"a": np.float64(1.0)})
        back = CheckReport.from_json(rep.to_json())
        assert back == CheckReport.from_dict(rep.to_dict())
        assert back.to_dict()["pass"] is False and back.status == "fail"

    def test_empty_inventory(self):
        with pytest.raises(ValueError):
            _report("x", "d", [], [], [], 0.0)


class TestLemma3:
    def test_closed_form_example(self):
        (tr,) = lemma3_triples_closed_form(1, [1.0], [1.0], [1.0])
        assert tr["p3t"] == pytest.approx(O.f(O.halfspace_kernel(3, [1], [1])), rel=1e-13)
        assert tr["p3t"] == pytest.approx(0.11207, abs=5e-6)
        rhs = tr["Px"] * tr["Py"] / math.sqrt(2 * math.pi)
        assert rhs == pytest.approx(0.18593, abs=5e-6)
        rep = check_lemma3([tr], 1, "two half-spaces")
        assert rep.passed and rep.inventory[0]["rhs"] == pytest.approx(rhs)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_saturating(self, d):
        t = 2.0
        rep = check_lemma3([{"t": t, "p3t": (2 * math.pi * t) ** (-d / 2), "Px": 1.0, "Py": 1.0}], d)
        assert rep.passed and rep.max_violation == pytest.approx(0.0, abs=1e-15)

    def test_rhs_halved_fails(self):
        t = 2.0
        rep = check_lemma3([{"t": t, "p3t": (2 * math.pi * t) ** -1, "Px": 0.5, "Py": 1.0}], 2)
        assert not rep.passed and rep.max_violation == pytest.approx(1.0)

    def test_noise_margin(self):
        tr = {"t": 1.0, "p3t": 0.105, "p3t_se": 0.01, "Px": 1.0, "Py": 0.6}
        assert check_lemma3([tr], 2).passed
        assert not check_lemma3([dict(tr, p3t_se=0.0)], 2).passed

    def test_two_halfspace_inventory(self):
        trs = lemma3_triples_closed_form(2, [0.5, 1, 2, -1], [0.5, 1, 3], np.geomspace(0.5, 50, 10))
        assert check_lemma3(trs, 2).passed


FRAME = ReflectionFrame((0.0, 5.0), (1.0,))


class TestLemmaA:
    def test_two_halfspace_example(self):
        y = np.array([0.0, 5.0])
        rep = check_lemmaA(lambda p: halfspace_kernel(1.0, p, y), FRAME, [[3.0, 1.0]], 1.0)
        assert rep.passed
        # the S- image is across the hyperplane and contributes nothing
        assert halfspace_kernel(1.0, [-1.0, -3.0], y) == 0.0

    def test_fixed_hyperplane(self):
        y = np.array([0.0, 5.0])
        rep = check_lemmaA(lambda p: halfspace_kernel(2.0, p, y), FRAME, [[2.0, 2.0], [4.0, 4.0]], 2.0)
        assert rep.passed and rep.max_violation <= 0

    def test_skips_outside(self):
        y = np.array([0.0, 5.0])
        rep = check_lemmaA(lambda p: halfspace_kernel(1.0, p, y), FRAME, [[3.0, 1.0], [0.5, 1.0]], 1.0)
        assert rep.details["skipped_outside_omega_plus"] == 1 and len(rep.inventory) == 1
        with pytest.raises(ValueError):
            check_lemmaA(lambda p: halfspace_kernel(1.0, p, y), FRAME, [[0.5, 1.0]], 1.0)

    def test_slit_pde(self):
        s = PDESettings(L=10.0)
        g = s.grid(G.slit_plane())
        y = (0.0, 2.0)
        run = kernel_field(g, y, [2.0], s.dt, dt_rel=s.dt_rel)
        for frame in axis_frames(y):
            pts = lemmaA_points(frame)
            assert len(pts) >= 20
            rep = check_lemmaA(lambda p: run.snapshots[0].at(p), frame, pts, 2.0, "slit plane", solver_tol=1e-3)
            assert rep.passed, rep.max_violation


class TestReflection:
    def test_two_halfspace_zero(self):
        rows = [{"t": t, "x": (0.0, 1.0), "y": (0.5, 2.0), "p": float(halfspace_kernel(t, [0.0, 1.0], [0.5, 2.0])), "p_star": 0.0}
                for t in (1.0, 2.0, 4.0)]
        rep = check_reflection(rows)
        assert rep.passed and rep.max_violation == 0.0

    def test_rejects_opposite_sides(self):
        with pytest.raises(ValueError):
            check_reflection([{"t": 1.0, "x": (0, 1), "y": (0, -1), "p": 1.0, "p_star": 1.0}])

    def test_detects_mismatch(self):
        rep = check_reflection([{"t": 1.0, "x": (0, 1), "y": (0, 2), "p": 0.2, "p_star": 0.0}])
        assert not rep.passed


class TestDuhamel:
    def test_zero_zero(self):
        rep = check_duhamel([{"t": 1.0, "x": (0, 1), "y": (0, -1), "p": 0.0, "rhs": 0.0}])
        assert rep.passed and rep.max_violation == 0.0

    def test_relative(self):
        rep = check_duhamel([{"t": 1.0, "x": (0, 1), "y": (0, 2), "p": 1.0, "rhs": 1.06}])
        assert not rep.passed and rep.max_violation == pytest.approx(0.06 / 1.06)


class TestTimeRatio:
    def test_halfspace(self):
        t = np.array([10.0, 11.0, 50.0, 51.0, 100.0, 101.0])
        curve = SurvivalCurve.from_values(t, halfspace_survival(t, 1.0))
        rep = check_time_ratio(curve, 1.0, "two half-spaces")
        exact = O.f(O.halfspace_survival(101, 1) / O.halfspace_survival(100, 1))
        assert rep.details["ratios"][-1] == pytest.approx(exact, rel=1e-12)
        assert exact == pytest.approx(0.99504, abs=2e-5)
        assert math.sqrt(100 / 101) == pytest.approx(exact, abs=2e-5)
        assert rep.passed and rep.details["trend_toward_one"]

    def test_zero_shift(self):
        t = np.geomspace(1, 10, 5)
        rep = check_time_ratio(SurvivalCurve.from_values(t, 1 / t), 0.0)
        assert rep.details["ratios"] == [1.0] * 5 and rep.max_violation == 0.0

    def test_not_converging(self):
        t = np.array([1.0, 2.0, 10.0, 11.0])
        rep = check_time_ratio(SurvivalCurve.from_values(t, np.exp(-t)), 1.0)
        assert not rep.passed

    def test_no_pairs(self):
        with pytest.raises(ValueError):
            check_time_ratio(SurvivalCurve.from_values([1.0, 3.0], [0.5, 0.4]), 1.0)


class TestThmLimits:
    def test_two_halfspace_survival(self):
        t = np.geomspace(1, 64, 25)
        rows = [{"x": (0.0, 1.0), "v_s": 1.0, "t": t, "P": halfspace_survival(t, 1.0)}]
        rep = check_thm_limits(rows, dimension="Two")
        assert rep.passed
        assert rep.inventory[0]["prediction"] == pytest.approx(0.797885, abs=1e-6)

    def test_two_halfspace_kernel(self):
        t = np.geomspace(250, 2500, 20)
        x, y = np.array([0.0, 1.0]), np.array([0.0, 2.0])
        rows = [{"x": x, "y": y, "u1x": 1.0, "u1y": 2.0, "u2x": 0.0, "u2y": 0.0, "t": t, "p": halfspace_kernel(t, x, y)}]
        rep = check_thm_limits(kernel_rows=rows)
        assert rep.passed and rep.max_violation < 0.05
        assert rep.inventory[0]["prediction"] == pytest.approx(0.63662, abs=5e-6)

    def test_zero_profile(self):
        t = np.geomspace(1, 1000, 30)
        fast = [{"x": (0.0, 0.0), "v_s": 0.0, "t": t, "P": 0.3 / t}]
        assert check_thm_limits(fast).passed
        slow = [{"x": (0.0, 0.0), "v_s": 0.0, "t": t, "P": 0.3 / np.sqrt(t)}]
        assert not check_thm_limits(slow).passed

    def test_dimension_one(self):
        rep = check_thm_limits([], [], dimension="One")
        assert rep.status == "not_applicable" and not rep.passed
