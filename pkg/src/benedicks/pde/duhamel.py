"""Boundary-integral representation of p_t(x, y) through the windows.

Paths from ``x`` either stay in their half-plane (half-space kernel) or first
reach the hyperplane inside D at some time ``t - r`` and restart from there:

    p_t(x, y) = p^H_t(x, y) 1[x_d y_d > 0]
              + x_d / (2 pi) int_0^t r^-2 int_D exp(-(x_d^2 + |x - xi|^2) / 2r)
                                      p_{t-r}((xi, 0), y) dxi dr

With ``u = x_d^2 / 2r`` the weight becomes ``(2 / x_d^2) e^{-u} du``, which is
bounded, so a plain trapezoid rule in ``u`` (and in ``xi`` on the grid nodes)
suffices.  Line values ``p_s((xi, 0), y)`` come from one kernel solve started
at ``y`` (symmetry of the kernel), recorded at every time step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ..analytic import halfspace_kernel
from .grid import Grid, _nodal_width
from .heat import kernel_field


@dataclass
class LineHistory:
    """Values of a solution on the hyperplane row, one row per recorded time."""

    xs: np.ndarray
    open_: np.ndarray
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def record(self, t, u, j0):
        self.times.append(float(t))
        self.rows.append(u[:, j0].copy())

    def values(self, s: np.ndarray) -> np.ndarray:
        """Linear interpolation in time; zero before the first recorded time."""
        times = np.asarray(self.times)
        rows = np.asarray(self.rows)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.clip(np.searchsorted(times, s) - 1, 0, len(times) - 2)
        w = ((s - times[k]) / (times[k + 1] - times[k]))[:, None]
        out = (1 - w) * rows[k] + w * rows[k + 1]
        out[s < times[0]] = 0.0
        out[s > times[-1] + 1e-12] = np.nan
        return out


def kernel_with_line_history(grid: Grid, y, t_grid, dt: float, **kw):
    """Kernel solve from ``y`` that also records the hyperplane row at every step."""
    hist = LineHistory(grid.xs.copy(), grid.line_open.copy())
    run = kernel_field(grid, y, t_grid, dt, record=lambda t, u: hist.record(t, u, grid.j0), **kw)
    return run, hist


def duhamel_rhs(hist: LineHistory, x, y, t: float, n_u: int = 4000, u_max: float = 40.0) -> float:
    """Right-hand side of the window representation of p_t(x, y) (planar case).

    ``hist`` holds ``p_s((xi, 0), y)`` on the hyperplane nodes.  For ``x_d < 0``
    the mirrored formulation is used (the same formula with ``|x_d|``).

    Raises
    ------
    ValueError
        If ``x`` lies on the hyperplane or the history does not reach ``t``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = abs(x[1])
    if a == 0.0:
        raise ValueError("x must lie off the hyperplane")
    base = float(halfspace_kernel(t, x, y))
    open_ = hist.open_
    if not open_.any():
        return base
    if not hist.times or hist.times[-1] < t - 1e-9:
        raise ValueError(f"line history stops before t = {t}")
    xi = hist.xs[open_]
    wxi = _nodal_width(hist.xs)[open_]
    u = np.linspace(a * a / (2 * t), u_max, n_u)
    s = t - a * a / (2 * u)
    s[0] = 0.0
    line = hist.values(s)[:, open_]
    gauss = np.exp(-u[:, None] * (x[0] - xi[None, :]) ** 2 / (a * a))
    inner = (gauss * line) @ wxi
    integral = trapezoid(np.exp(-u) * inner, u)
    return base + a / (2 * np.pi) * (2 / (a * a)) * integral
