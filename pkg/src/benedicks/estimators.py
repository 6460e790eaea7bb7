"""Survival curves and heat-kernel estimates built from ensembles, and their merging.

Every estimate keeps exact integer counts or the full list of per-path
contributions summed with ``math.fsum`` (correctly rounded), so merging
partial runs is associative, commutative and bit-identical to a pooled run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import halfspace_kernel
from .geometry import BenedicksDomain, as_point
from .sampler import Ensemble


class MergeError(ValueError):
    pass


def _join_ranges(r1, r2):
    ranges = sorted([tuple(r) for r in r1] + [tuple(r) for r in r2])
    out: list[list[int]] = []
    for a, b in ranges:
        if out and a < out[-1][1]:
            raise MergeError(f"path ranges overlap: {out[-1]} and {(a, b)}")
        if out and a == out[-1][1]:
            out[-1][1] = b
        else:
            out.append([a, b])
    return [tuple(r) for r in out]


@dataclass
class SurvivalCurve:
    """Rows (t, estimate, stderr, n) of P_x(T > t).

    Monte Carlo curves carry integer ``survivors`` and ``stderr =
    sqrt(p (1 - p) / n)``; deterministic curves (PDE) have ``n = 0`` and
    ``stderr = 0``.
    """

    t: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    n: np.ndarray
    survivors: np.ndarray | None = None
    config_hash: str | None = None
    ranges: list = field(default_factory=list)
    label: str = ""

    @classmethod
    def from_counts(cls, t, survivors, n, config_hash=None, ranges=(), label=""):
        t = np.asarray(t, dtype=float)
        survivors = np.asarray(survivors, dtype=np.int64)
        n = np.full(t.shape, int(n), dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(n > 0, survivors / np.maximum(n, 1), 0.0)
            se = np.where(n > 0, np.sqrt(p * (1 - p) / np.maximum(n, 1)), 0.0)
        return cls(t, p, se, n, survivors, config_hash, list(ranges), label)

    @classmethod
    def from_values(cls, t, values, stderr=None, label=""):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        se = np.zeros_like(v) if stderr is None else np.asarray(stderr, dtype=float)
        return cls(t, v, se, np.zeros(t.shape, dtype=np.int64), None, None, [], label)

    def rows(self):
        return [(float(a), float(b), float(c), int(d)) for a, b, c, d in zip(self.t, self.estimate, self.stderr, self.n)]

    def at(self, t: float) -> tuple[float, float]:
        k = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not on the curve")
        return float(self.estimate[k]), float(self.stderr[k])

    def monotone_violations(self, k: float = 2.0) -> int:
        """Count increases larger than ``k`` combined standard errors."""
        d = np.diff(self.estimate)
        tol = k * np.hypot(self.stderr[1:], self.stderr[:-1])
        return int(np.sum(d > tol + 1e-15))

    def to_csv(self, path):
        from .io import write_csv

        return write_csv(path, ["t", "estimate", "stderr", "n"], self.rows())


def survival_estimate(ensemble: Ensemble) -> SurvivalCurve:
    """Empirical survival fraction and binomial standard error per checkpoint."""
    if ensemble.N < 1:
        raise ValueError("empty ensemble")
    return SurvivalCurve.from_counts(
        ensemble.checkpoints,
        ensemble.survivors,
        ensemble.N,
        ensemble.config_hash,
        ensemble.ranges,
        label=f"MC from {ensemble.x0}",
    )


@dataclass
class KernelEstimate:
    """Lower-biased estimate of p_t(x, y) with its per-path contributions."""

    t: float
    x: tuple
    y: tuple
    value: float
    stderr: float
    smoothing_window: float
    n: int
    contributions: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    config_hash: str | None = None
    ranges: list = field(default_factory=list)

    def row(self):
        return (self.t, *self.x, *self.y, self.value, self.stderr)

    @staticmethod
    def header(d: int):
        return ["t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["value", "stderr"]


def default_smoothing(x, y) -> float:
    """h_f = 0.1 min(1, x_d^2, y_d^2)."""
    return 0.1 * min(1.0, float(x[-1]) ** 2, float(y[-1]) ** 2)


def _moments(contrib: np.ndarray, n: int):
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(contrib) / n
    if n < 2:
        return mean, 0.0
    second = math.fsum(contrib * contrib) / n
    var = max(second - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def kernel_estimate(domain: BenedicksDomain, x, y, t: float, h_f: float | None, ensemble: Ensemble) -> KernelEstimate:
    """Chapman-Kolmogorov smoothing over the last ``h_f`` of the path.

    ``(1/N) sum_paths 1[T > t - h_f] p^H_{h_f}(X_{t-h_f}, y)``: the half-space
    kernel is below the domain kernel, so this is a consistent lower bound
    whose bias vanishes as ``h_f -> 0``.  ``ensemble`` must start at ``x`` and
    have ``t - h_f`` among its checkpoints.
    """
    x = as_point(x, domain.d)
    y = as_point(y, domain.d)
    if x[-1] == 0:
        raise ValueError("x must lie off the hyperplane")
    if h_f is None:
        # y on the hyperplane gives 0 for any window; size it by x alone
        h_f = default_smoothing(x, y) if y[-1] != 0 else default_smoothing(x, x)
    h_f = float(h_f)
    if not 0 < h_f < t:
        raise ValueError(f"need 0 < h_f < t, got h_f = {h_f}, t = {t}")
    if not np.allclose(ensemble.x0, x):
        raise ValueError("the ensemble does not start at x")
    ends = ensemble.endpoints_at(t - h_f)
    # the half-space kernel vanishes for y on the hyperplane: exactly 0
    contrib = np.sort(halfspace_kernel(h_f, ends, y)) if len(ends) else np.zeros(0)
    value, se = _moments(contrib, ensemble.N)
    return KernelEstimate(
        float(t), tuple(map(float, x)), tuple(map(float, y)), value, se, h_f, ensemble.N,
        contrib, ensemble.config_hash, list(ensemble.ranges),
    )


def kernel_checkpoints(times, h_f: float):
    """Checkpoints an ensemble needs so that kernels can be estimated at ``times``."""
    return tuple(sorted({float(t) for t in times} | {float(t) - h_f for t in times}))


# --------------------------------------------------------------------------
# merging

def _check_hash(a, b):
    if a.config_hash is None or a.config_hash != b.config_hash:
        raise MergeError(f"config hashes differ: {a.config_hash} vs {b.config_hash}")


def merge(e1, e2):
    """Pool two partial results of the same configuration over disjoint path ranges.

    ``None`` acts as the empty result.  Works for Ensemble, SurvivalCurve and
    KernelEstimate.
    """
    if e2 is None:
        return e1
    if e1 is None:
        return e2
    if type(e1) is not type(e2):
        raise MergeError("cannot merge different result types")
    if isinstance(e1, SurvivalCurve):
        if e1.n.sum() == 0 and e1.survivors is not None:
            return e2
        if e2.n.sum() == 0 and e2.survivors is not None:
            return e1
        if e1.survivors is None or e2.survivors is None:
            raise MergeError("only Monte Carlo curves can be merged")
        _check_hash(e1, e2)
        if not np.array_equal(e1.t, e2.t):
            raise MergeError("time grids differ")
        return SurvivalCurve.from_counts(
            e1.t, e1.survivors + e2.survivors, int(e1.n[0] + e2.n[0]), e1.config_hash,
            _join_ranges(e1.ranges, e2.ranges), e1.label,
        )
    if isinstance(e1, KernelEstimate):
        if e1.n == 0:
            return e2
        if e2.n == 0:
            return e1
        _check_hash(e1, e2)
        if (e1.t, e1.x, e1.y, e1.smoothing_window) != (e2.t, e2.x, e2.y, e2.smoothing_window):
            raise MergeError("kernel estimates of different (t, x, y, h_f)")
        ranges = _join_ranges(e1.ranges, e2.ranges)
        contrib = np.sort(np.concatenate([e1.contributions, e2.contributions]))
        n = e1.n + e2.n
        value, se = _moments(contrib, n)
        return replace(e1, value=value, stderr=se, n=n, contributions=contrib, ranges=ranges)
    if isinstance(e1, Ensemble):
        _check_hash(e1, e2)
        ranges = _join_ranges(e1.ranges, e2.ranges)
        diag = dict(e1.diagnostics)
        for k, v in e2.diagnostics.items():
            diag[k] = max(diag.get(k, 0), v) if k == "max_depth" else diag.get(k, 0) + v
        ids = ends = None
        if e1.endpoints is not None and e2.endpoints is not None:
            ids, ends = [], []
            for i1, p1, i2, p2 in zip(e1.endpoint_ids, e1.endpoints, e2.endpoint_ids, e2.endpoints):
                i = np.concatenate([i1, i2])
                order = np.argsort(i, kind="stable")
                ids.append(i[order])
                ends.append(np.concatenate([p1, p2])[order])
        return replace(
            e1, N=e1.N + e2.N, ranges=ranges, survivors=e1.survivors + e2.survivors,
            endpoint_ids=ids, endpoints=ends, diagnostics=diag,
            cfg=replace(e1.cfg, N=e1.N + e2.N, path_offset=ranges[0][0]),
        )
    raise MergeError(f"cannot merge {type(e1).__name__}")
