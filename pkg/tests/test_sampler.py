import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from benedicks import geometry as G
from benedicks.analytic import halfspace_survival
from benedicks.geometry import DomainError, Where
from benedicks.sampler import (
    SimConfig,
    advance_step,
    bridge_zero_crossing_prob,
    path_stream,
    run_ensemble,
    simulate_path,
)

# discrete monitoring of a barrier misses crossings; shifting the barrier by
# beta * sqrt(dt) with beta = -zeta(1/2)/sqrt(2 pi) corrects for it
BETA = 0.5826


class TestBridge:
    def test_sign_change(self):
        assert bridge_zero_crossing_prob(1.0, -1.0, 0.3) == 1.0
        assert bridge_zero_crossing_prob(0.0, 2.0, 0.3) == 1.0

    def test_same_side(self):
        assert bridge_zero_crossing_prob(1.0, 1.0, 1.0) == pytest.approx(O.f(O.mp.exp(-2)), rel=1e-14)
        assert bridge_zero_crossing_prob(10.0, 10.0, 1.0) < 1e-80
        assert bridge_zero_crossing_prob(-1.0, -1.0, 1.0) == pytest.approx(math.exp(-2), rel=1e-14)

    def test_rejects_nonpositive_duration(self):
        with pytest.raises(ValueError):
            bridge_zero_crossing_prob(1.0, 1.0, 0.0)

    def test_fine_discretization_oracle(self):
        rng = np.random.default_rng(12345)
        n_paths, n_steps = 20_000, 1000
        dt = 1.0 / n_steps
        s = np.linspace(0, 1, n_steps + 1)[1:-1]
        hits = 0
        for _ in range(n_paths // 2000):
            W = np.cumsum(rng.standard_normal((2000, n_steps)) * math.sqrt(dt), axis=1)
            # bridge from 1 to 1 over unit time
            B = 1.0 + W[:, :-1] - s * W[:, -1:]
            hits += int(np.sum(B.min(axis=1) <= 0))
        p_hat = hits / n_paths
        se = math.sqrt(p_hat * (1 - p_hat) / n_paths)
        shifted = 1.0 + BETA * math.sqrt(dt)
        corrected = math.exp(-2 * shifted * shifted)
        assert abs(p_hat - corrected) < 3 * se
        # and the exact law sits above the discretely monitored estimate
        assert bridge_zero_crossing_prob(1.0, 1.0, 1.0) > p_hat


class TestAdvanceStep:
    def test_far_from_plane_survives(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            assert advance_step(G.two_halfspace(), [0.0, 5.0], 0.01, 1e-4, rng).alive

    def test_crossing_in_two_halfspace_kills(self):
        rng = np.random.default_rng(1)
        res = [advance_step(G.two_halfspace(), [0.0, 0.05], 1.0, 1e-4, rng) for _ in range(50)]
        killed = [r for r in res if not r.alive]
        assert killed
        for r in killed:
            assert 0 <= r.time_offset <= 1.0
            assert abs(r.point[-1]) < 1e-9

    def test_window_lets_paths_through(self):
        # a huge window around the start: crossings never kill
        dom = G.BenedicksDomain(2, G.windows([-1e6, 1e6]))
        rng = np.random.default_rng(2)
        assert all(advance_step(dom, [0.0, 0.05], 1.0, 1e-4, rng).alive for _ in range(50))


class TestSimulatePath:
    cfg = SimConfig(checkpoints=(0.5, 1.0), h=0.01)

    def test_deterministic(self):
        a = simulate_path(G.slit_plane(), (0.0, 0.5), self.cfg, 17)
        b = simulate_path(G.slit_plane(), (0.0, 0.5), self.cfg, 17)
        assert a.killed == b.killed and a.kill_time == b.kill_time
        assert all(np.array_equal(p, q) for (_, p), (_, q) in zip(a.snapshots, b.snapshots))

    def test_kill_location_in_holes(self):
        dom = G.window_gap()
        n_killed = 0
        for k in range(60):
            out = simulate_path(dom, (0.0, 0.3), self.cfg, k)
            if out.killed:
                n_killed += 1
                loc = out.kill_location
                assert abs(loc[-1]) < 1e-12
                # localisation error of the crossing point is far below 1e-2
                near = [dom.classify([loc[0] + e]) for e in (-1e-2, 0.0, 1e-2)]
                assert Where.IN_HOLES in near
                assert 0 < out.kill_time <= 1.0
        assert n_killed > 5

    def test_rejects_start_on_hole(self):
        with pytest.raises(DomainError):
            simulate_path(G.slit_plane(), (1.0, 0.0), self.cfg, 0)

    def test_start_in_window_is_allowed(self):
        simulate_path(G.window_gap(), (0.0, 0.0), self.cfg, 0)

    def test_survival_indicator_mean(self):
        cfg = SimConfig(checkpoints=(1.0,), h=0.05)
        alive = [not simulate_path(G.two_halfspace(), (0.0, 1.0), cfg, k).killed for k in range(2000)]
        p = np.mean(alive)
        assert abs(p - 0.682689492) < 3 * math.sqrt(p * (1 - p) / len(alive))

    def test_streams_are_distinct(self):
        assert path_stream(0, 1).random() != path_stream(0, 2).random()


@pytest.fixture(scope="module")
def halfspace_1e5():
    return run_ensemble(G.two_halfspace(), (0.0, 1.0), SimConfig(N=100_000, checkpoints=(1.0, 4.0)), keep_endpoints=False)


class TestRunEnsemble:
    @pytest.mark.parametrize("t, ref", [(1.0, 0.682689492137), (4.0, 0.382924922548)])
    def test_halfspace_oracle(self, halfspace_1e5, t, ref):
        assert ref == pytest.approx(O.f(O.halfspace_survival(t, 1)), rel=1e-11)
        p = halfspace_1e5.survivors[list(halfspace_1e5.checkpoints).index(t)] / halfspace_1e5.N
        assert abs(p - ref) < 3 * math.sqrt(ref * (1 - ref) / halfspace_1e5.N)

    def test_workers_do_not_change_results(self):
        cfg = SimConfig(N=3000, block_size=1000, checkpoints=(0.5, 1.0))
        a = run_ensemble(G.window_gap(), (0.5, 0.5), cfg, workers=1)
        b = run_ensemble(G.window_gap(), (0.5, 0.5), cfg, workers=2)
        assert np.array_equal(a.survivors, b.survivors)
        assert all(np.array_equal(p, q) for p, q in zip(a.endpoints, b.endpoints))

    def test_non_increasing(self):
        e = run_ensemble(G.segment_exterior(), (0.0, 0.5), SimConfig(N=4000, checkpoints=(0.25, 0.5, 1, 2)), keep_endpoints=False)
        assert np.all(np.diff(e.survivors) <= 0)

    def test_more_holes_never_help(self):
        # coupled seeds: the window gap minus part of its window
        cfg = SimConfig(N=4000, checkpoints=(0.5, 1, 2))
        big = run_ensemble(G.window_gap(), (0.0, 1.0), cfg, keep_endpoints=False)
        small = run_ensemble(G.BenedicksDomain(2, G.windows([-1, 0])), (0.0, 1.0), cfg, keep_endpoints=False)
        p_big, p_small = big.survivors / cfg.N, small.survivors / cfg.N
        se = np.sqrt(p_big * (1 - p_big) / cfg.N)
        assert np.all(p_small <= p_big + 3 * se)

    def test_symmetric_domain_symmetric_survival(self):
        cfg = SimConfig(N=6000, checkpoints=(1.0, 2.0))
        up = run_ensemble(G.segment_exterior(), (0.3, 0.5), cfg, keep_endpoints=False).survivors / cfg.N
        down = run_ensemble(G.segment_exterior(), (0.3, -0.5), replace_seed(cfg, 1), keep_endpoints=False).survivors / cfg.N
        se = np.sqrt(up * (1 - up) / cfg.N + down * (1 - down) / cfg.N)
        assert np.all(np.abs(up - down) < 3 * se)

    def test_step_size_consistency(self):
        # exact crossing detection: halving h only reshuffles randomness
        coarse = run_ensemble(G.two_halfspace(), (0.0, 0.5), SimConfig(N=20_000, h=0.02, checkpoints=(1.0,)), keep_endpoints=False)
        fine = run_ensemble(G.two_halfspace(), (0.0, 0.5), SimConfig(N=20_000, h=0.01, seed=3, checkpoints=(1.0,)), keep_endpoints=False)
        pc, pf = coarse.survivors[0] / 20_000, fine.survivors[0] / 20_000
        ref = float(halfspace_survival(1.0, 0.5))
        se = math.sqrt(ref * (1 - ref) / 20_000)
        assert abs(pc - ref) < 3 * se and abs(pf - ref) < 3 * se
        assert abs(pc - pf) < 3 * math.sqrt(2) * se


def replace_seed(cfg, seed):
    from dataclasses import replace

    return replace(cfg, seed=seed)


class TestSimConfig:
    @pytest.mark.parametrize(
        "kw",
        [{"h": 0}, {"delta_geo": -1}, {"N": 0}, {"checkpoints": (2.0, 1.0)}, {"checkpoints": (0.0,)},
         {"block_size": 10, "path_offset": 5}, {"seed": -1}],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)

    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=5, unique=True))
    @settings(max_examples=25)
    def test_checkpoints_hit_exactly(self, cps):
        cps = tuple(sorted(cps))
        out = simulate_path(G.two_halfspace(), (0.0, 50.0), SimConfig(h=0.3, checkpoints=cps), 0)
        assert [t for t, _ in out.snapshots] == list(cps)
