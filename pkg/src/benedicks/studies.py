"""Experiment drivers shared by the command line and the acceptance suite.

Each driver turns a domain plus solver settings into the plain inputs the
checks in ``verify`` and the fitters in ``asymptotics`` consume.  Kernel
values p_t(x, y) for many x come from a single solve started at y (the
Dirichlet kernel is symmetric).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .analytic import halfspace_kernel, halfspace_survival
from .estimators import SurvivalCurve, default_smoothing, kernel_checkpoints, kernel_estimate, survival_estimate
from .geometry import BenedicksDomain, ReflectionFrame, mirror_across_hyperplane
from .pde import LineHistory, build_grid, duhamel_rhs, harmonic_profile, kernel_field, kernel_with_line_history, survival_field
from .sampler import SimConfig, run_ensemble


@dataclass
class PDESettings:
    """Grid and time-stepping knobs (see ``build_grid`` and ``heat_solve``).

    ``dt_max`` caps the step: near window edges the splitting error of the
    ADI scheme grows with the step, and 1.0 keeps long runs converged.
    """

    L: float = 20.0
    dx: float = 0.05
    core: float | None = None
    ratio: float = 1.05
    dt: float = 0.0025
    dt_rel: float = 0.01
    dt_max: float = 1.0
    compact: bool = True
    t0: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PDESettings":
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})

    def grid(self, domain: BenedicksDomain):
        return build_grid(domain, self.L, self.dx, core=self.core, ratio=self.ratio)

    def step_kw(self) -> dict:
        return {"dt_rel": self.dt_rel, "dt_max": self.dt_max}


def _pts(points) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float))


# --------------------------------------------------------------------------
# PDE series

def pde_survival(grid, points, t_grid, s: PDESettings) -> np.ndarray:
    """P_x(T > t) at each point (columns) and time (rows)."""
    pts = _pts(points)
    run = survival_field(grid, t_grid, s.dt, extract=lambda u: grid.interpolate(u, pts), **s.step_kw())
    return np.array(run.snapshots)


def pde_kernel(grid, y, points, t_grid, s: PDESettings) -> np.ndarray:
    """p_t(x, y) at each point x (columns) and time (rows), from one solve at y."""
    pts = _pts(points)
    run = kernel_field(
        grid, y, t_grid, s.dt, t0=s.t0, compact=s.compact,
        extract=lambda u: grid.interpolate(u, pts), **s.step_kw(),
    )
    return np.array(run.snapshots)


def pde_survival_curves(grid, points, t_grid, s: PDESettings) -> list[SurvivalCurve]:
    P = pde_survival(grid, points, t_grid, s)
    return [SurvivalCurve.from_values(t_grid, P[:, k], label=f"PDE from {tuple(p)}") for k, p in enumerate(_pts(points))]


def harmonic_values(grid, points, **kw) -> dict:
    """v_s, u_1 and u_2 at the given points, plus the profile checks."""
    hp = harmonic_profile(grid, **kw)
    pts = _pts(points)
    return {"v_s": hp.v_s.at(pts), "u1": hp.u1.at(pts), "u2": hp.u2.at(pts), "checks": hp.checks()}


# --------------------------------------------------------------------------
# inventories for the checks

def lemma3_triples_closed_form(d: int, xs_d, ys_d, ts) -> list[dict]:
    """Two half-spaces: the kernel and survival in closed form (points on the d-axis)."""
    out = []
    for a, b, t in itertools.product(xs_d, ys_d, ts):
        x = np.zeros(d)
        y = np.zeros(d)
        x[-1], y[-1] = a, b
        out.append({
            "x": x, "y": y, "t": t,
            "p3t": float(halfspace_kernel(3 * t, x, y)) if a * b > 0 else 0.0,
            "Px": float(halfspace_survival(t, abs(a))), "Py": float(halfspace_survival(t, abs(b))),
        })
    return out


def lemma3_triples_pde(grid, ys, xs, ts, s: PDESettings) -> list[dict]:
    xs = _pts(xs)
    ys = _pts(ys)
    ts = np.asarray(ts, dtype=float)
    P = pde_survival(grid, np.vstack([xs, ys]), ts, s)
    Px, Py = P[:, : len(xs)], P[:, len(xs):]
    out = []
    for j, y in enumerate(ys):
        K = pde_kernel(grid, y, xs, 3 * ts, s)
        for i, x in enumerate(xs):
            for k, t in enumerate(ts):
                out.append({"x": x, "y": y, "t": float(t), "p3t": float(K[k, i]), "Px": float(Px[k, i]), "Py": float(Py[k, j])})
    return out


def lemmaA_points(frame: ReflectionFrame, offsets=(0.5, 1.0, 1.5, 2.0, 3.0), fractions=(-1.0, -0.5, -0.25, 0.25, 0.5, 1.0)):
    """Sample points of Omega+ of a planar frame: along n at distance s, |x_d| <= s."""
    y1 = frame.y[0]
    n = frame.n[0]
    return np.array([(y1 + s * n, f * s) for s in offsets for f in fractions])


def axis_frames(y) -> list[ReflectionFrame]:
    """The coordinate frames (n = +e_1, -e_1) of a planar base point."""
    return [ReflectionFrame(tuple(y), (1.0,)), ReflectionFrame(tuple(y), (-1.0,))]


def reflection_rows_pde(grid, pairs, ts, s: PDESettings) -> list[dict]:
    """p_t(x, y) and p_t(x, y*) for (x, y) on the same side, from one solve at x."""
    rows = []
    for x, y in pairs:
        y = np.asarray(y, dtype=float)
        ystar = mirror_across_hyperplane(y)
        K = pde_kernel(grid, x, [y, ystar], ts, s)
        for k, t in enumerate(ts):
            rows.append({"t": float(t), "x": x, "y": y, "p": float(K[k, 0]), "p_star": float(K[k, 1])})
    return rows


def duhamel_rows_pde(grid, pairs, ts, s: PDESettings, **kw) -> list[dict]:
    """Window representation against the direct kernel, one recorded solve per y."""
    rows = []
    ts = sorted(float(t) for t in ts)
    for x, y in pairs:
        pt = _pts([x])
        run, hist = kernel_with_line_history(
            grid, y, ts, s.dt, t0=s.t0, compact=s.compact,
            extract=lambda u: grid.interpolate(u, pt)[0], **s.step_kw(),
        )
        for t, p in zip(ts, run.snapshots):
            rows.append({"t": t, "x": x, "y": y, "p": float(p), "rhs": duhamel_rhs(hist, x, y, t, **kw)})
    return rows


def duhamel_rows_closed_form(pairs, ts) -> list[dict]:
    """Two half-spaces: no windows, so the representation is evaluated with an
    empty line history and compared with the exact kernel."""
    empty = LineHistory(np.zeros(1), np.zeros(1, dtype=bool))
    rows = []
    for x, y in pairs:
        for t in ts:
            p = float(halfspace_kernel(t, np.asarray(x, float), np.asarray(y, float)))
            rows.append({"t": float(t), "x": x, "y": y, "p": p, "rhs": duhamel_rhs(empty, x, y, float(t))})
    return rows


# --------------------------------------------------------------------------
# Monte Carlo

def mc_survival(domain, x, cfg: SimConfig, workers=None) -> SurvivalCurve:
    ens = run_ensemble(domain, x, cfg, workers=workers, keep_endpoints=False)
    return survival_estimate(ens)


def mc_kernel(domain, x, y, times, cfg: SimConfig, h_f=None, workers=None):
    """Kernel estimates at ``times`` from one ensemble started at x."""
    h_f = default_smoothing(x, y) if h_f is None else h_f
    cps = kernel_checkpoints(times, h_f)
    ens = run_ensemble(domain, x, replace(cfg, checkpoints=cps), workers=workers)
    return [kernel_estimate(domain, x, y, t, h_f, ens) for t in times]


# --------------------------------------------------------------------------
# convergence

def convergence_study(domain, x, t: float, dxs, base: PDESettings, quantity: str = "survival") -> list[dict]:
    """Value at (x, t) for a ladder of grid spacings, with successive differences
    and the observed order where three levels are available."""
    rows = []
    for dx in dxs:
        s = replace(base, dx=float(dx))
        g = s.grid(domain)
        if quantity == "survival":
            v = float(pde_survival(g, [x], [t], s)[0, 0])
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
        rows.append({"dx": float(dx), "value": v})
    for k in range(1, len(rows)):
        rows[k]["diff"] = rows[k]["value"] - rows[k - 1]["value"]
    for k in range(2, len(rows)):
        d1, d2 = rows[k - 1]["diff"], rows[k]["diff"]
        r = rows[k - 1]["dx"] / rows[k]["dx"]
        rows[k]["order"] = math.log(abs(d1 / d2)) / math.log(r) if d1 and d2 else float("nan")
    return rows
