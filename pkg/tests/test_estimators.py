import math
from dataclasses import replace

import numpy as np
import pytest

import oracles as O
from benedicks import geometry as G
from benedicks.estimators import (
    KernelEstimate,
    MergeError,
    SurvivalCurve,
    default_smoothing,
    kernel_checkpoints,
    kernel_estimate,
    merge,
    survival_estimate,
)
from benedicks.sampler import Ensemble, SimConfig, run_ensemble

H2 = G.two_halfspace()


def fake_ensemble(survivors, N, cps=(1.0,)):
    cfg = SimConfig(N=N, checkpoints=cps)
    return Ensemble({}, (0.0, 1.0), cfg, N, [(0, N)], np.asarray(survivors), None, None, {}, "h")


class TestSurvivalEstimate:
    def test_all_survive(self):
        c = survival_estimate(fake_ensemble([7], 7))
        assert c.estimate[0] == 1.0 and c.stderr[0] == 0.0

    def test_half_of_four(self):
        c = survival_estimate(fake_ensemble([2], 4))
        assert c.estimate[0] == 0.5 and c.stderr[0] == 0.25

    def test_monotone_violations(self):
        c = SurvivalCurve.from_values([1, 2, 3], [0.5, 0.6, 0.4], [0.01, 0.01, 0.01])
        assert c.monotone_violations() == 1

    def test_at(self):
        c = SurvivalCurve.from_values([1, 2], [0.5, 0.4])
        assert c.at(2.0) == (0.4, 0.0)
        with pytest.raises(KeyError):
            c.at(1.5)


@pytest.fixture(scope="module")
def diag_kernel():
    cfg = SimConfig(N=100_000, checkpoints=kernel_checkpoints([1.0], 0.1))
    return run_ensemble(H2, (0.0, 1.0), cfg)


class TestKernelEstimate:
    def test_halfspace_oracle(self, diag_kernel):
        ref = O.f(O.halfspace_kernel(1, [0, 1], [0, 1]))
        assert ref == pytest.approx(O.f(O.mp.exp(-1) * O.mp.sinh(1) / O.mp.pi), rel=1e-20)
        est = kernel_estimate(H2, (0.0, 1.0), (0.0, 1.0), 1.0, 0.1, diag_kernel)
        assert est.value <= ref + 3 * est.stderr
        assert abs(est.value - ref) <= max(3 * est.stderr, 0.02 * ref)

    def test_target_on_hyperplane(self, diag_kernel):
        est = kernel_estimate(H2, (0.0, 1.0), (0.5, 0.0), 1.0, None, diag_kernel)
        assert est.value == 0.0 and est.stderr == 0.0

    def test_target_across(self, diag_kernel):
        est = kernel_estimate(H2, (0.0, 1.0), (0.0, -1.0), 1.0, 0.1, diag_kernel)
        assert est.value == 0.0

    def test_gaussian_bound(self, diag_kernel):
        for y in [(0.0, 1.0), (0.3, 0.8), (-0.5, 1.5)]:
            est = kernel_estimate(H2, (0.0, 1.0), y, 1.0, 0.1, diag_kernel)
            assert est.value <= 1 / (2 * math.pi) + 3 * est.stderr

    def test_errors(self, diag_kernel):
        with pytest.raises(ValueError):
            kernel_estimate(H2, (0.0, 1.0), (0.0, 1.0), 1.0, 1.0, diag_kernel)
        with pytest.raises(ValueError):
            kernel_estimate(H2, (0.0, 2.0), (0.0, 1.0), 1.0, 0.1, diag_kernel)
        with pytest.raises(KeyError):
            kernel_estimate(H2, (0.0, 1.0), (0.0, 1.0), 1.0, 0.2, diag_kernel)

    def test_smoothing_default(self):
        assert default_smoothing((0, 2.0), (0, 0.5)) == pytest.approx(0.025)
        assert default_smoothing((0, 3.0), (0, 2.0)) == 0.1

    def test_lower_bias_shrinks_with_window(self):
        # same paths; a shorter window must not move the estimate down beyond noise
        hs = (0.4, 0.1)
        cps = tuple(sorted(set(kernel_checkpoints([1.0], hs[0])) | {0.9}))
        ens = run_ensemble(H2, (0.0, 1.0), SimConfig(N=40_000, checkpoints=cps))
        wide, narrow = (kernel_estimate(H2, (0.0, 1.0), (0.0, 1.0), 1.0, h, ens) for h in hs)
        ref = O.f(O.halfspace_kernel(1, [0, 1], [0, 1]))
        for est in (wide, narrow):
            assert abs(est.value - ref) < 3 * est.stderr + 0.02 * ref

    def test_symmetry(self):
        x, y = (0.0, 1.0), (0.5, 1.5)
        cps = kernel_checkpoints([2.0], 0.1)
        cfg = SimConfig(N=60_000, seed=21, checkpoints=cps)
        dom = G.window_gap()
        a = kernel_estimate(dom, x, y, 2.0, 0.1, run_ensemble(dom, x, cfg))
        b = kernel_estimate(dom, y, x, 2.0, 0.1, run_ensemble(dom, y, replace(cfg, seed=22)))
        assert abs(a.value - b.value) < 3 * math.hypot(a.stderr, b.stderr)


class TestMerge:
    cfg = SimConfig(N=50_000, checkpoints=(0.9, 1.0), block_size=10_000)

    @pytest.fixture(scope="class")
    @classmethod
    def parts(cls):
        x = (0.0, 1.0)
        a = run_ensemble(H2, x, cls.cfg)
        b = run_ensemble(H2, x, replace(cls.cfg, path_offset=50_000))
        pooled = run_ensemble(H2, x, replace(cls.cfg, N=100_000))
        return a, b, pooled

    def test_halves_equal_pooled(self, parts):
        a, b, pooled = parts
        m = merge(a, b)
        assert np.array_equal(m.survivors, pooled.survivors)
        assert all(np.array_equal(p, q) for p, q in zip(m.endpoints, pooled.endpoints))
        sa, sb, sp = (survival_estimate(e) for e in parts)
        ms = merge(sa, sb)
        assert ms.estimate.tobytes() == sp.estimate.tobytes() and ms.stderr.tobytes() == sp.stderr.tobytes()
        ka, kb, kp = (kernel_estimate(H2, (0.0, 1.0), (0.2, 1.2), 1.0, 0.1, e) for e in parts)
        mk = merge(ka, kb)
        assert (mk.value, mk.stderr, mk.n) == (kp.value, kp.stderr, kp.n)

    def test_commutative_and_identity(self, parts):
        a, b, _ = parts
        sa, sb = survival_estimate(a), survival_estimate(b)
        ab, ba = merge(sa, sb), merge(sb, sa)
        assert ab.estimate.tobytes() == ba.estimate.tobytes() and ab.ranges == ba.ranges == [(0, 100_000)]
        assert merge(sa, None) is sa and merge(None, sa) is sa
        ka = kernel_estimate(H2, (0.0, 1.0), (0.2, 1.2), 1.0, 0.1, a)
        kb = kernel_estimate(H2, (0.0, 1.0), (0.2, 1.2), 1.0, 0.1, b)
        assert merge(ka, kb).value == merge(kb, ka).value

    def test_rejects_overlap(self, parts):
        a, _, _ = parts
        with pytest.raises(MergeError):
            merge(survival_estimate(a), survival_estimate(a))

    def test_rejects_hash_mismatch(self, parts):
        a, _, _ = parts
        other = run_ensemble(H2, (0.0, 1.0), replace(self.cfg, N=100, seed=9, path_offset=60_000), keep_endpoints=False)
        with pytest.raises(MergeError):
            merge(survival_estimate(a), survival_estimate(other))
        with pytest.raises(MergeError):
            merge(a, other)

    def test_rejects_pde_curves(self):
        c = SurvivalCurve.from_values([1.0], [0.5])
        with pytest.raises(MergeError):
            merge(c, c)

    def test_rejects_mixed_types(self, parts):
        with pytest.raises(MergeError):
            merge(parts[0], survival_estimate(parts[1]))

    def test_kernel_row(self):
        assert KernelEstimate.header(2) == ["t", "x1", "x2", "y1", "y2", "value", "stderr"]
