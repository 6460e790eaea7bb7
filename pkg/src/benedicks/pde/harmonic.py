"""Nonnegative harmonic profiles u_1, u_2 and v_s on a truncated box.

The Laplace equation is discretised with the symmetric finite-volume form of
the 5-point stencil (it reduces to the usual stencil on uniform spacing) and
solved with algebraic multigrid.  Far-field behaviour is imposed as Dirichlet
data on the box, so the truncation error has to be measured (``L`` doubling),
not assumed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pyamg
import scipy.sparse as sp

from .grid import Field, Grid, _nodal_width


class FarData(enum.Enum):
    ABS_XD = "AbsXd"
    XD_PLUS = "XdPlus"
    XD_MINUS = "XdMinus"
    CUSTOM = "Custom"


class HarmonicError(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = list(residuals or [])


def far_values(kind: FarData | str, X: np.ndarray, Y: np.ndarray, custom: Callable | None = None):
    kind = FarData(kind)
    if kind is FarData.ABS_XD:
        return np.abs(Y)
    if kind is FarData.XD_PLUS:
        return np.maximum(Y, 0.0)
    if kind is FarData.XD_MINUS:
        return np.maximum(-Y, 0.0)
    if custom is None:
        raise ValueError("Custom far data needs a callable f(x, y)")
    return np.asarray(custom(X, Y), dtype=float)


def _system(grid: Grid):
    """Sparse SPD matrix on free nodes plus the coupling to Dirichlet nodes."""
    nx, ny = grid.shape
    wx, wy = _nodal_width(grid.xs), _nodal_width(grid.ys)
    free = ~grid.mask
    idx = -np.ones(grid.shape, dtype=np.int64)
    idx[free] = np.arange(int(free.sum()))
    # edges (node, neighbour, conductance): axis-0 neighbours are +ny apart in
    # the flattened C-order index, axis-1 neighbours are +1 apart
    flat = np.arange(nx * ny).reshape(nx, ny)
    cx = wy[None, :] / np.diff(grid.xs)[:, None]
    cy = wx[:, None] / np.diff(grid.ys)[None, :]
    a_flat = np.concatenate([flat[:-1, :].ravel(), flat[:, :-1].ravel()])
    b_flat = np.concatenate([flat[1:, :].ravel(), flat[:, 1:].ravel()])
    cond = np.concatenate([cx.ravel(), cy.ravel()])
    ia, ib = idx.ravel()[a_flat], idx.ravel()[b_flat]
    n = int(free.sum())
    diag = np.zeros(n)
    np.add.at(diag, ia[ia >= 0], cond[ia >= 0])
    np.add.at(diag, ib[ib >= 0], cond[ib >= 0])
    both = (ia >= 0) & (ib >= 0)
    rows = np.concatenate([ia[both], ib[both], np.arange(n)])
    cols = np.concatenate([ib[both], ia[both], np.arange(n)])
    vals = np.concatenate([-cond[both], -cond[both], diag])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # Dirichlet coupling: b[free end] += cond * g[dirichlet end]
    half_a = (ia >= 0) & (ib < 0)
    half_b = (ib >= 0) & (ia < 0)
    return A, idx, diag, (ia, ib, a_flat, b_flat, cond, half_a, half_b)


def laplace_harmonic(
    grid: Grid,
    far_data: FarData | str = FarData.ABS_XD,
    custom: Callable | None = None,
    rtol: float = 1e-10,
    max_cycles: int = 400,
) -> Field:
    """Solve Laplace's equation with zero on the holes and far data on the box.

    ``far_data`` selects |x_d| (v_s), x_d^+ (u_1), x_d^- (u_2) or a ``custom``
    callable ``f(x, y)``.  Convergence is declared when the Jacobi-normalised
    residual ``max |u_i - (weighted neighbour mean)_i|`` drops below
    ``rtol * max|u|``.

    Raises
    ------
    HarmonicError
        If the residual target is not met within ``max_cycles`` multigrid
        cycles; the residual history is attached.
    """
    X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    g = np.zeros(grid.shape)
    box = np.zeros(grid.shape, dtype=bool)
    box[0, :] = box[-1, :] = box[:, 0] = box[:, -1] = True
    g[box] = far_values(far_data, X[box], Y[box], custom)
    A, idx, diag, (ia, ib, a_flat, b_flat, cond, half_a, half_b) = _system(grid)
    gf = g.ravel()
    b = np.zeros(A.shape[0])
    np.add.at(b, ia[half_a], cond[half_a] * gf[b_flat[half_a]])
    np.add.at(b, ib[half_b], cond[half_b] * gf[a_flat[half_b]])

    # evolution strength copes with the strongly anisotropic cells of stretched grids
    ml = pyamg.smoothed_aggregation_solver(
        A, symmetry="symmetric", strength=("evolution", {"k": 2, "epsilon": 4.0}), max_coarse=500
    )
    u = np.zeros_like(b)
    history = []
    scale = max(float(np.max(np.abs(gf))), 1e-300)
    cycles = 0
    while True:
        u = ml.solve(b, x0=u, tol=1e-14, maxiter=20, accel="cg")
        cycles += 20
        res = float(np.max(np.abs(A @ u - b) / diag))
        history.append(res)
        scale = max(scale, float(np.max(np.abs(u))))
        if res < rtol * scale:
            break
        if cycles >= max_cycles:
            raise HarmonicError(f"Laplace solve stalled at residual {res:.3g} (target {rtol * scale:.3g})", history)
    out = g.copy()
    out[idx >= 0] = u
    out[grid.mask & ~box] = 0.0
    fld = Field(grid, out, 0.0)
    fld.residuals = history
    return fld


@dataclass
class HarmonicProfile:
    """The fields v_s, u_1, u_2 of one domain together with their invariant checks."""

    v_s: Field
    u1: Field
    u2: Field
    far_data: dict = field(default_factory=dict)

    def checks(self) -> dict:
        g = self.v_s.grid
        _, Y = np.meshgrid(g.xs, g.ys, indexing="ij")
        open_ = ~g.mask
        v, u1, u2 = self.v_s.values, self.u1.values, self.u2.values
        mirrored = u1[:, ::-1]
        symmetric_grid = np.allclose(g.ys, -g.ys[::-1])
        return {
            # v_s >= |x_d| (minimum of the gap; >= -tol means the bound holds)
            "vs_minus_abs_xd_min": float(np.min((v - np.abs(Y))[open_])),
            "vs_minus_u1_u2_max": float(np.max(np.abs(v - u1 - u2))),
            "u2_minus_mirror_u1_max": float(np.max(np.abs(u2 - mirrored))) if symmetric_grid else float("nan"),
            # u_1 - u_2 = x_d is not assumed; this is the measured residual
            "u1_minus_u2_minus_xd_max": float(np.max(np.abs((u1 - u2 - Y)[open_]))),
        }

    def to_dict(self) -> dict:
        return {"far_data": self.far_data, "checks": self.checks()}


def harmonic_profile(grid: Grid, **kw) -> HarmonicProfile:
    v = laplace_harmonic(grid, FarData.ABS_XD, **kw)
    u1 = laplace_harmonic(grid, FarData.XD_PLUS, **kw)
    u2 = laplace_harmonic(grid, FarData.XD_MINUS, **kw)
    return HarmonicProfile(v, u1, u2, {"v_s": "AbsXd", "u1": "XdPlus", "u2": "XdMinus", "L": grid.L})
