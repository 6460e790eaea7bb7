"""Heat equation u_t = (1/2) Laplacian(u) with u = 0 on the grid mask.

Time stepping is a factored ADI scheme: second order in time, unconditionally
stable, and each sweep is a batch of tridiagonal (Thomas) solves.  In space
the default is the compact (Mehrstellen) three-point scheme, which keeps the
systems tridiagonal but is fourth order, so Gaussian tails stay accurate.
Masked nodes enter the tridiagonal systems as identity rows, which is how the
hole nodes on the line x_2 = 0 are embedded.  The first steps after a start
use backward-Euler splitting (Rannacher start-up) to damp the high modes of
non-smooth data such as the survival initial condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from ..analytic import free_kernel, halfspace_kernel
from .grid import Field, Grid


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


def _coefficients(z: np.ndarray, compact: bool):
    """Three-point weights of D = (1/2) d^2/dz^2 and of the mass matrix B.

    With ``compact`` the pair (B, D) is the Mehrstellen discretisation
    ``B u'' = 2 D u``, fourth order on uniform stretches and third order on
    smoothly stretched ones; otherwise B is the identity.
    """
    n = len(z)
    lo, up = np.zeros(n), np.zeros(n)
    bl, bd, bu = np.zeros(n), np.ones(n), np.zeros(n)
    hm = z[1:-1] - z[:-2]
    hp = z[2:] - z[1:-1]
    s = hm + hp
    lo[1:-1] = 1.0 / (hm * s)
    up[1:-1] = 1.0 / (hp * s)
    if compact:
        bl[1:-1] = (hm**2 + hm * hp - hp**2) / (6 * hm * s)
        bu[1:-1] = (hp**2 + hm * hp - hm**2) / (6 * hp * s)
        bd[1:-1] = 1.0 - bl[1:-1] - bu[1:-1]
    return lo, up, bl, bd, bu


@njit(cache=True)
def _thomas_rows(u, rows, a, cp, inv_den):
    # in-place tridiagonal solve along axis 1 for each listed row
    n = u.shape[1]
    for i in rows:
        u[i, 0] = u[i, 0] * inv_den[0]
        for k in range(1, n):
            u[i, k] = (u[i, k] - a[k] * u[i, k - 1]) * inv_den[k]
        for k in range(n - 2, -1, -1):
            u[i, k] -= cp[k] * u[i, k + 1]


@njit(cache=True)
def _thomas_cols(u, cols, a, cp, inv_den):
    # in-place tridiagonal solve along axis 0 for each listed column
    n = u.shape[0]
    for j in cols:
        u[0, j] = u[0, j] * inv_den[0]
    for k in range(1, n):
        ak = a[k]
        dk = inv_den[k]
        for j in cols:
            u[k, j] = (u[k, j] - ak * u[k - 1, j]) * dk
    for k in range(n - 2, -1, -1):
        ck = cp[k]
        for j in cols:
            u[k, j] -= ck * u[k + 1, j]


@njit(cache=True)
def _apply_axis0(u, mask, cl, cd, cu, out):
    n0, n1 = u.shape
    for i in range(n0):
        for j in range(n1):
            if mask[i, j]:
                out[i, j] = 0.0
            else:
                out[i, j] = cl[i] * u[i - 1, j] + cd[i] * u[i, j] + cu[i] * u[i + 1, j]


@njit(cache=True)
def _apply_axis1(u, mask, cl, cd, cu, out):
    n0, n1 = u.shape
    for i in range(n0):
        for j in range(n1):
            if mask[i, j]:
                out[i, j] = 0.0
            else:
                out[i, j] = cl[j] * u[i, j - 1] + cd[j] * u[i, j] + cu[j] * u[i, j + 1]


class _Axis:
    """Tridiagonal systems (B - tau D) along one axis, grouped by mask pattern."""

    def __init__(self, z: np.ndarray, mask_lines: np.ndarray, compact: bool):
        # mask_lines: (n_lines, n) mask pattern of each line along this axis
        self.lo, self.up, self.bl, self.bd, self.bu = _coefficients(z, compact)
        patterns, inverse = np.unique(mask_lines, axis=0, return_inverse=True)
        self.patterns = patterns
        groups = [np.flatnonzero(inverse.ravel() == g) for g in range(len(patterns))]
        self.groups = [(g, idx.astype(np.int64)) for g, idx in enumerate(groups) if not patterns[g].all()]
        self._cache: dict = {}

    def explicit(self, tau: float):
        """Diagonals of B + tau D (masked neighbours hold zero, so no special case)."""
        return self.bl + tau * self.lo, self.bd - tau * (self.lo + self.up), self.bu + tau * self.up

    def factor(self, g: int, tau: float):
        key = (g, tau)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        free = ~self.patterns[g]
        n = len(free)
        b = np.where(free, self.bd + tau * (self.lo + self.up), 1.0)
        # a masked neighbour holds u = 0, so dropping its coefficient is exact
        a = np.zeros(n)
        c = np.zeros(n)
        a[1:] = np.where(free[1:] & free[:-1], self.bl[1:] - tau * self.lo[1:], 0.0)
        c[:-1] = np.where(free[:-1] & free[1:], self.bu[:-1] - tau * self.up[:-1], 0.0)
        cp = np.zeros(n)
        inv_den = np.zeros(n)
        inv_den[0] = 1.0 / b[0]
        cp[0] = c[0] * inv_den[0]
        for k in range(1, n):
            den = b[k] - a[k] * cp[k - 1]
            if not den > 0:
                raise SolverError("tridiagonal system lost diagonal dominance")
            inv_den[k] = 1.0 / den
            cp[k] = c[k] * inv_den[k]
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = (a, cp, inv_den)
        return self._cache[key]


class ADIStepper:
    """Factored ADI steps ``(B0 - tau D0)(B1 - tau D1) u' = (B0 + tau D0)(B1 + tau D1) u``.

    ``step_pr`` is the Crank-Nicolson-type step (tau = dt/2, second order in
    time); ``step_be`` is the backward-Euler variant used for start-up.
    """

    def __init__(self, grid: Grid, compact: bool = True):
        self.grid = grid
        self.mask = np.ascontiguousarray(grid.mask)
        # lines along axis 0 are columns u[:, j]; along axis 1 rows u[i, :]
        self.ax0 = _Axis(grid.xs, grid.mask.T, compact)
        self.ax1 = _Axis(grid.ys, grid.mask, compact)

    def _step(self, u, tau_exp, tau_imp):
        r = np.empty_like(u)
        w = np.empty_like(u)
        _apply_axis1(u, self.mask, *self.ax1.explicit(tau_exp), r)
        _apply_axis0(r, self.mask, *self.ax0.explicit(tau_exp), w)
        for g, cols in self.ax0.groups:
            _thomas_cols(w, cols, *self.ax0.factor(g, tau_imp))
        w[self.mask] = 0.0
        for g, rows in self.ax1.groups:
            _thomas_rows(w, rows, *self.ax1.factor(g, tau_imp))
        w[self.mask] = 0.0
        return w

    def step_pr(self, u, dt):
        return self._step(u, dt / 2, dt / 2)

    def step_be(self, u, dt):
        return self._step(u, 0.0, dt)


@dataclass
class HeatRun:
    snapshots: list
    times: list
    steps: int = 0
    min_value: float = 0.0
    masses: list = field(default_factory=list)


def heat_solve(
    grid: Grid,
    init: Field | np.ndarray,
    t_grid: Sequence[float],
    dt: float,
    *,
    t_start: float | None = None,
    dt_rel: float = 0.0,
    dt_max: float | None = None,
    startup_steps: int = 2,
    compact: bool = True,
    record: Callable[[float, np.ndarray], None] | None = None,
    extract: Callable[[np.ndarray], object] | None = None,
) -> HeatRun:
    """Evolve ``init`` and return snapshots at the absolute times ``t_grid``.

    The step is ``clip(max(dt, dt_rel * t), None, dt_max)``, shortened to land
    on every requested time.  ``record(t, u)`` is called after every step and
    ``extract(u)`` (default: a Field copy) builds each snapshot.

    Raises
    ------
    SolverError
        If the max-norm of a nonnegative solution grows, which the continuous
        problem forbids.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(init, Field):
        u = np.array(init.values, dtype=float)
        t = init.t if t_start is None else t_start
    else:
        u = np.array(init, dtype=float)
        t = 0.0 if t_start is None else t_start
    if u.shape != grid.shape:
        raise ValueError("initial data does not match the grid")
    if np.any(u[grid.mask] != 0.0):
        raise ValueError("initial data must vanish on the mask")
    targets = sorted(float(s) for s in t_grid)
    if targets and targets[0] < t - 1e-12:
        raise ValueError(f"requested time {targets[0]} precedes the start time {t}")
    dt_max = math.inf if dt_max is None else dt_max
    stepper = ADIStepper(grid, compact)
    nonneg = bool(np.all(u >= 0))
    max0 = float(np.max(np.abs(u)))
    history = []
    run = HeatRun([], [], min_value=float(u.min()))
    take = extract if extract is not None else (lambda v: Field(grid, v.copy(), t))
    startup_left = startup_steps
    for target in targets:
        while t < target - 1e-12:
            h = min(max(dt, dt_rel * t), dt_max, target - t)
            if startup_left > 0:
                u = stepper.step_be(u, h / 2)
                u = stepper.step_be(u, h / 2)
                startup_left -= 1
            else:
                u = stepper.step_pr(u, h)
            t = t + h if target - (t + h) > 1e-12 else target
            run.steps += 1
            m = float(np.max(np.abs(u)))
            history.append((t, m))
            if nonneg and m > max0 * (1 + 1e-3) + 1e-300:
                raise SolverError(f"max-norm grew from {max0:.6g} to {m:.6g} at t = {t:.6g}", history)
            if not np.isfinite(m):
                raise SolverError(f"non-finite values at t = {t:.6g}", history)
            run.min_value = min(run.min_value, float(u.min()))
            if record is not None:
                record(t, u)
        snap = take(u)
        if isinstance(snap, Field):
            snap.t = target
        run.snapshots.append(snap)
        run.times.append(target)
        run.masses.append(float(np.sum(u * grid.weights())))
    return run


def survival_field(grid: Grid, t_grid, dt: float, **kw) -> HeatRun:
    """P_x(T > t) for every node x: evolve the indicator of the open nodes.

    The indicator jumps to zero at the mask; where that jump is unresolved
    (coarse outer cells) the compact stencil overshoots, so the standard
    monotone-leaning stencil is the default here.
    """
    init = np.where(grid.mask, 0.0, 1.0)
    kw.setdefault("startup_steps", 4)
    kw.setdefault("compact", False)
    return heat_solve(grid, Field(grid, init, 0.0), t_grid, dt, **kw)


class KernelSetupError(ValueError):
    pass


def kernel_start(grid: Grid, x, t0: float | None = None):
    """Pick exact small-time data for p_{t0}(x, .) and the admissible ``t0``.

    Off the line the half-space kernel is exact until paths reach a window or
    the box; otherwise the free kernel is used until paths reach the mask.
    The start time obeys ``sqrt(t0) >= 4 h`` (local spacing ``h``) and
    ``t0 <= (dist / 4)^2`` for the relevant distance.
    """
    x = np.asarray(x, dtype=float)
    h = grid.local_spacing(x)
    t_min = (4 * h) ** 2
    options = []
    if x[1] != 0.0:
        options.append(("halfspace", (grid.dist_to_open_line(x) / 4) ** 2))
    options.append(("free", (grid.dist_to_mask(x) / 4) ** 2))
    kind, t_max = max(options, key=lambda o: o[1])
    if t_max < t_min:
        raise KernelSetupError(
            f"x = {tuple(x)} is too close to the mask: need (4 dx)^2 = {t_min:.4g} <= t0 <= "
            f"(dist/4)^2 = {t_max:.4g}; refine dx or move x"
        )
    if t0 is None:
        t0 = t_min
    elif not (t_min <= t0 <= t_max):
        raise KernelSetupError(f"t0 = {t0} outside the admissible range [{t_min:.4g}, {t_max:.4g}]")
    nodes = grid.nodes()
    if kind == "halfspace":
        xs = x if x[1] > 0 else np.array([x[0], -x[1]])
        ys = nodes if x[1] > 0 else nodes * np.array([1.0, -1.0])
        vals = halfspace_kernel(t0, xs, ys)
    else:
        vals = free_kernel(t0, x, nodes)
    vals = np.where(grid.mask, 0.0, vals)
    return Field(grid, vals, t0), kind


def kernel_field(grid: Grid, x, t_grid, dt: float, t0: float | None = None, **kw) -> HeatRun:
    """Snapshots of p_t(x, .) at the requested times (all must be >= t0)."""
    init, _ = kernel_start(grid, x, t0)
    kw.setdefault("startup_steps", 0)
    return heat_solve(grid, init, t_grid, dt, **kw)
