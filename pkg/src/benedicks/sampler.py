"""Brownian motion (generator (1/2)Laplacian) killed on the holes of a Benedicks domain.

Paths advance by exact Gaussian macro steps.  Whether a step meets a hole is
decided exactly in distribution: the last coordinate of the Brownian bridge
between the two endpoints hits zero with probability ``exp(-2ab/h)``, and an
interval that may cross is refined by sampling bridge midpoints until either

* the crossing probability is negligible (< 1e-12),
* the in-plane bridge provably (up to 1e-12) stays inside a ball that lies in
  the holes (kill with the crossing probability) or in a window (no kill), or
* the interval is shorter than ``delta_geo`` in time-scale and in height, in
  which case the crossing point is read off and classified.

Because detection is exact, the macro step ``h`` only sets how often
positions are refreshed; only ``delta_geo`` controls the localisation bias.

Random streams: an ensemble is cut into blocks of ``block_size`` paths and
block ``k`` draws from ``SeedSequence(seed, spawn_key=(0, k))``.  Results are
therefore identical for any number of workers, and runs over path ranges that
start on block boundaries reproduce the corresponding part of a pooled run.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import BenedicksDomain, DomainError, as_point

NEGLIGIBLE = 1e-12
MAX_DEPTH = 64
WORKERS_ENV = "BENEDICKS_WORKERS"


@dataclass(frozen=True)
class SimConfig:
    h: float = 1e-2
    delta_geo: float = 1e-4
    N: int = 10_000
    seed: int = 0
    checkpoints: tuple = (1.0,)
    block_size: int = 10_000
    path_offset: int = 0

    def __post_init__(self):
        cps = tuple(float(c) for c in np.atleast_1d(self.checkpoints))
        object.__setattr__(self, "checkpoints", cps)
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.delta_geo > 0:
            raise ValueError("delta_geo must be positive")
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if not cps or cps[0] <= 0 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be positive and strictly increasing")
        if self.block_size < 1 or self.path_offset % self.block_size:
            raise ValueError("path_offset must be a multiple of block_size")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def identity(self) -> dict:
        """Everything that determines individual paths (not how many are run)."""
        return {
            "h": self.h,
            "delta_geo": self.delta_geo,
            "seed": int(self.seed),
            "checkpoints": list(self.checkpoints),
            "block_size": self.block_size,
        }


def bridge_zero_crossing_prob(a, b, h):
    """P(a Brownian bridge from a to b over time h, unit diffusion, hits 0).

    Equals 1 when ``a * b <= 0`` and ``exp(-2ab/h)`` otherwise.  Broadcasts.
    """
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise ValueError(f"duration must be positive, got {h}")
    ab = np.asarray(a, dtype=float) * np.asarray(b, dtype=float)
    out = np.where(ab <= 0, 1.0, np.exp(-2 * np.maximum(ab, 0.0) / h))
    return float(out) if out.ndim == 0 else out


def _crossing(a, b, tau):
    ab = a * b
    return np.where(ab <= 0, 1.0, np.exp(-2 * np.maximum(ab, 0.0) / tau))


def _leave_prob(A, B, tau, r):
    """Union bound on P(in-plane bridge from A to B leaves the ball B(A, r))."""
    k = A.shape[-1]
    if k == 0:
        return np.zeros(A.shape[:-1])
    m = (r / math.sqrt(k))[..., None]
    b = B - A
    with np.errstate(invalid="ignore", over="ignore"):
        up = np.exp(-2 * m * (m - b) / tau[..., None])
        down = np.exp(-2 * m * (m + b) / tau[..., None])
        p = np.sum(up + down, axis=-1)
    p = np.where(np.isinf(r), 0.0, p)
    outside = np.any(np.abs(b) >= m, axis=-1) & np.isfinite(r)
    return np.where(outside | ~(r > 0), 1.0, p)


def _zero_point(A, B):
    """Point on the hyperplane where the chord from A to B meets x_d = 0."""
    a, b = A[..., -1], B[..., -1]
    denom = a - b
    w = np.where(np.abs(denom) > 0, a / np.where(denom == 0, 1.0, denom), 0.5)
    w = np.clip(w, 0.0, 1.0)
    return A[..., :-1] + w[..., None] * (B[..., :-1] - A[..., :-1]), w


def _bump(diag, key, n=1):
    diag[key] = diag.get(key, 0) + int(n)


def resolve_steps(domain: BenedicksDomain, A, B, tau, delta_geo, rng, diag=None):
    """Kill indicators for a batch of bridges (A_i -> B_i over tau_i).

    Breadth-first refinement; each interval is decided by the rules in the
    module docstring, and a path is killed if any of its sub-intervals is.
    """
    diag = {} if diag is None else diag
    n = len(A)
    killed = np.zeros(n, dtype=bool)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,)).copy()
    c = _crossing(A[:, -1], B[:, -1], tau)
    live = c >= NEGLIGIBLE
    owner = np.flatnonzero(live)
    A, B, tau = A[live], B[live], tau[live]
    depth = np.zeros(len(owner), dtype=np.int64)
    holes = domain.holes
    while len(owner):
        keep = ~killed[owner]
        owner, A, B, tau, depth = owner[keep], A[keep], B[keep], tau[keep], depth[keep]
        if not len(owner):
            break
        a, b = A[:, -1], B[:, -1]
        c = _crossing(a, b, tau)
        active = c >= NEGLIGIBLE
        in_holes, dist = holes.boundary_distance(A[:, :-1])
        safe = active & (_leave_prob(A[:, :-1], B[:, :-1], tau, dist) < NEGLIGIBLE)
        leaf = active & ~safe & (np.maximum(np.maximum(np.abs(a), np.abs(b)), np.sqrt(tau)) < delta_geo)
        capped = active & ~safe & ~leaf & (depth >= MAX_DEPTH)
        decide = (safe & in_holes) | leaf
        u = rng.random(int(decide.sum()))
        crossed = np.zeros(len(owner), dtype=bool)
        crossed[decide] = u < c[decide]
        kill = crossed & safe & in_holes
        if leaf.any():
            z, _ = _zero_point(A[leaf], B[leaf])
            leaf_kill = np.zeros(len(owner), dtype=bool)
            leaf_kill[leaf] = crossed[leaf] & holes.in_holes(z)
            kill |= leaf_kill
        kill |= capped
        killed[owner[kill]] = True
        _bump(diag, "leaves", leaf.sum())
        _bump(diag, "safe_holes", (safe & in_holes).sum())
        _bump(diag, "safe_windows", (safe & ~in_holes).sum())
        _bump(diag, "depth_cap_kills", capped.sum())
        split = active & ~safe & ~leaf & ~capped
        if not split.any():
            break
        As, Bs, ts = A[split], B[split], tau[split]
        M = 0.5 * (As + Bs) + np.sqrt(ts / 4)[:, None] * rng.standard_normal(As.shape)
        _bump(diag, "splits", len(As))
        diag["max_depth"] = max(diag.get("max_depth", 0), int(depth[split].max()) + 1)
        owner = np.concatenate([owner[split], owner[split]])
        A = np.concatenate([As, M])
        B = np.concatenate([M, Bs])
        tau = np.concatenate([ts / 2, ts / 2])
        depth = np.concatenate([depth[split] + 1, depth[split] + 1])
    return killed


# --------------------------------------------------------------------------
# single paths (time-ordered, with kill times and locations)

@dataclass
class StepResult:
    alive: bool
    point: np.ndarray
    time_offset: float | None = None

    @classmethod
    def Alive(cls, p):
        return cls(True, np.asarray(p, dtype=float))

    @classmethod
    def Killed(cls, dt, p):
        return cls(False, np.asarray(p, dtype=float), float(dt))


def _first_crossing(A, B, tau, delta_geo, rng, diag, max_tries=100_000):
    """Sample where the bridge A -> B first meets x_d = 0, given that it does.

    Midpoints are drawn from the bridge law conditioned on a crossing (by
    rejection), and the descent follows the first half that crosses.
    Returns (time offset, point on the hyperplane).
    """
    t0 = 0.0
    for _ in range(MAX_DEPTH):
        a, b = A[-1], B[-1]
        if max(abs(a), abs(b), math.sqrt(tau)) < delta_geo:
            z, w = _zero_point(A, B)
            return t0 + w * tau, z
        for _ in range(max_tries):
            M = 0.5 * (A + B) + math.sqrt(tau / 4) * rng.standard_normal(A.shape)
            c1 = float(_crossing(a, M[-1], tau / 2))
            c2 = float(_crossing(M[-1], b, tau / 2))
            both = 1 - (1 - c1) * (1 - c2)
            if rng.random() < both:
                break
        else:
            _bump(diag, "descent_giveups")
            z, w = _zero_point(A, B)
            return t0 + w * tau, z
        if rng.random() < c1 / both:
            B = M
        else:
            A = M
            t0 += tau / 2
        tau /= 2
    _bump(diag, "depth_cap_kills")
    z, w = _zero_point(A, B)
    return t0 + w * tau, z


def _locate_kill(domain, A, B, tau, delta_geo, rng, diag):
    """First kill on the bridge A -> B (time offset, point) or None; depth-first in time order."""
    holes = domain.holes
    stack = [(A, B, 0.0, tau, 0)]
    while stack:
        A, B, t0, tau, depth = stack.pop()
        a, b = A[-1], B[-1]
        c = float(_crossing(a, b, tau))
        if c < NEGLIGIBLE:
            continue
        in_holes, dist = holes.boundary_distance(A[None, :-1])
        safe = _leave_prob(A[None, :-1], B[None, :-1], np.array([tau]), dist)[0] < NEGLIGIBLE
        if safe:
            if not in_holes[0]:
                continue
            if rng.random() < c:
                dt, z = _first_crossing(A, B, tau, delta_geo, rng, diag)
                return t0 + dt, np.append(z, 0.0)
            continue
        if max(abs(a), abs(b), math.sqrt(tau)) < delta_geo:
            if rng.random() < c:
                z, w = _zero_point(A, B)
                if holes.in_holes(z):
                    return t0 + w * tau, np.append(z, 0.0)
            continue
        if depth >= MAX_DEPTH:
            _bump(diag, "depth_cap_kills")
            z, w = _zero_point(A, B)
            return t0 + w * tau, np.append(z, 0.0)
        M = 0.5 * (A + B) + math.sqrt(tau / 4) * rng.standard_normal(A.shape)
        # second half pushed first so the earlier half is resolved first
        stack.append((M, B, t0 + tau / 2, tau / 2, depth + 1))
        stack.append((A, M, t0, tau / 2, depth + 1))
    return None


def advance_step(domain: BenedicksDomain, position, h: float, delta_geo: float, rng, diag=None) -> StepResult:
    """One exact Gaussian step of length ``h`` with hole detection along the bridge."""
    diag = {} if diag is None else diag
    p = np.asarray(position, dtype=float)
    q = p + math.sqrt(h) * rng.standard_normal(p.shape)
    hit = _locate_kill(domain, p, q, h, delta_geo, rng, diag)
    if hit is None:
        return StepResult.Alive(q)
    return StepResult.Killed(*hit)


@dataclass
class PathOutcome:
    killed: bool
    kill_time: float | None
    kill_location: np.ndarray | None
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def _check_start(domain: BenedicksDomain, x0) -> np.ndarray:
    x0 = as_point(x0, domain.d)
    if not domain.contains(x0):
        raise DomainError(f"start point {tuple(x0)} lies on a hole: the path is killed at t = 0")
    return x0


def _macro_times(h: float, checkpoints):
    """Step lengths that land exactly on every checkpoint."""
    t = 0.0
    for cp in checkpoints:
        while cp - t > 1e-12 * max(1.0, cp):
            step = min(h, cp - t)
            if cp - (t + step) < 1e-9 * h:
                step = cp - t
            land = step == cp - t
            yield step, False
            t = cp if land else t + step
        yield 0.0, True


def path_stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1, int(stream_id)))))


def block_stream(seed: int, block_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(0, int(block_id)))))


def simulate_path(domain: BenedicksDomain, x0, cfg: SimConfig, stream_id: int) -> PathOutcome:
    """One path up to the last checkpoint, with exact kill time and place."""
    p = _check_start(domain, x0)
    rng = path_stream(cfg.seed, stream_id)
    diag: dict = {}
    t = 0.0
    snaps = []
    cp_iter = iter(cfg.checkpoints)
    for step, at_cp in _macro_times(cfg.h, cfg.checkpoints):
        if at_cp:
            snaps.append((next(cp_iter), p.copy()))
            continue
        res = advance_step(domain, p, step, cfg.delta_geo, rng, diag)
        if not res.alive:
            return PathOutcome(True, t + res.time_offset, res.point, snaps, diag)
        p = res.point
        t += step
    return PathOutcome(False, None, None, snaps, diag)


# --------------------------------------------------------------------------
# ensembles

@dataclass
class Ensemble:
    """Raw ensemble output: survivor counts and surviving endpoints per checkpoint."""

    domain: dict
    x0: tuple
    cfg: SimConfig
    N: int
    ranges: list
    survivors: np.ndarray
    endpoint_ids: list | None
    endpoints: list | None
    diagnostics: dict
    config_hash: str

    @property
    def checkpoints(self):
        return self.cfg.checkpoints

    def curve(self):
        from .estimators import survival_estimate

        return survival_estimate(self)

    def endpoints_at(self, t: float) -> np.ndarray:
        if self.endpoints is None:
            raise ValueError("endpoints were not kept for this ensemble")
        k = _checkpoint_index(self.cfg.checkpoints, t)
        return self.endpoints[k]


def _checkpoint_index(cps, t) -> int:
    for k, c in enumerate(cps):
        if abs(c - t) <= 1e-12 * max(1.0, abs(t)):
            return k
    raise KeyError(f"t = {t} is not a checkpoint")


def _run_block(args):
    domain, x0, cfg, block_id, n_paths, keep = args
    rng = block_stream(cfg.seed, block_id)
    first = block_id * cfg.block_size
    P = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    ids = np.arange(first, first + n_paths, dtype=np.int64)
    diag: dict = {}
    counts, end_ids, ends = [], [], []
    for step, at_cp in _macro_times(cfg.h, cfg.checkpoints):
        if at_cp:
            counts.append(len(P))
            if keep:
                end_ids.append(ids.copy())
                ends.append(P.copy())
            continue
        if not len(P):
            continue
        Q = P + math.sqrt(step) * rng.standard_normal(P.shape)
        killed = resolve_steps(domain, P, Q, step, cfg.delta_geo, rng, diag)
        P, ids = Q[~killed], ids[~killed]
    return counts, end_ids, ends, diag


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_ensemble(
    domain: BenedicksDomain,
    x0,
    cfg: SimConfig,
    workers: int | None = None,
    keep_endpoints: bool = True,
) -> Ensemble:
    """Simulate paths ``cfg.path_offset .. cfg.path_offset + N`` from ``x0``.

    ``workers`` (or the BENEDICKS_WORKERS variable) only sets parallelism;
    the output does not depend on it.
    """
    from .io import config_hash

    x0 = _check_start(domain, x0)
    B = cfg.block_size
    start, stop = cfg.path_offset, cfg.path_offset + int(cfg.N)
    jobs = []
    for first in range(start, stop, B):
        jobs.append((domain, tuple(x0), cfg, first // B, min(B, stop - first), keep_endpoints))
    nw = _workers(workers)
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    ncp = len(cfg.checkpoints)
    survivors = np.zeros(ncp, dtype=np.int64)
    diag: dict = {}
    end_ids = [[] for _ in range(ncp)] if keep_endpoints else None
    ends = [[] for _ in range(ncp)] if keep_endpoints else None
    for counts, bid, bend, bdiag in results:
        survivors += np.asarray(counts, dtype=np.int64)
        for key, v in bdiag.items():
            diag[key] = max(diag.get(key, 0), v) if key == "max_depth" else diag.get(key, 0) + v
        if keep_endpoints:
            for k in range(ncp):
                end_ids[k].append(bid[k])
                ends[k].append(bend[k])
    if keep_endpoints:
        end_ids = [np.concatenate(v) for v in end_ids]
        ends = [np.concatenate(v).reshape(-1, domain.d) for v in ends]
    dom = domain.to_dict()
    return Ensemble(
        domain=dom,
        x0=tuple(float(v) for v in x0),
        cfg=cfg,
        N=int(cfg.N),
        ranges=[(start, stop)],
        survivors=survivors,
        endpoint_ids=end_ids,
        endpoints=ends,
        diagnostics=diag,
        config_hash=config_hash({"domain": dom, "x0": [float(v) for v in x0], "mc": cfg.identity()}),
    )
