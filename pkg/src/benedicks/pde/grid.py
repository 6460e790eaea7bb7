"""Planar grids on [-L, L]^2 with the hole line x_2 = 0 embedded as Dirichlet nodes.

Axis 0 of every field is the in-plane coordinate x_1, axis 1 is x_d = x_2.
A grid is uniform with spacing ``dx`` unless a stretch is requested, in which
case the spacing is ``dx`` on the core ``[-core, core]`` and then grows
geometrically out to ``L``.  Stretched grids exist for long-time runs where
the box has to be much larger than the region where the holes live.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..geometry import BenedicksDomain, FiniteHoles, FiniteWindows


class GridError(ValueError):
    pass


def _axis(L: float, dx: float, core: float | None, ratio: float) -> np.ndarray:
    if core is None or core >= L:
        n = round(L / dx)
        if abs(n * dx - L) > 1e-9 * L:
            raise GridError(f"dx = {dx} must divide L = {L}")
        half = np.arange(0, n + 1) * dx
        half[-1] = L
    else:
        n = round(core / dx)
        if abs(n * dx - core) > 1e-9 * core:
            raise GridError(f"dx = {dx} must divide the core half-width {core}")
        nodes = list(np.arange(0, n + 1) * dx)
        h = dx
        while nodes[-1] < L:
            h *= ratio
            nodes.append(nodes[-1] + h)
        if nodes[-1] - L > 0.5 * h:
            nodes.pop()
        nodes[-1] = L
        half = np.asarray(nodes)
    return np.concatenate([-half[:0:-1], half])


@dataclass
class Grid:
    domain: BenedicksDomain
    xs: np.ndarray
    ys: np.ndarray
    L: float
    dx: float
    mask: np.ndarray
    j0: int
    snap: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(np.diff(self.xs), self.dx) and np.allclose(np.diff(self.ys), self.dx))

    @property
    def line_open(self) -> np.ndarray:
        """Boolean over ``xs``: hyperplane nodes that are in D (not masked)."""
        return ~self.mask[:, self.j0]

    def weights(self):
        """Trapezoid-style nodal areas, for discrete integrals over the box."""
        return np.outer(_nodal_width(self.xs), _nodal_width(self.ys))

    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def node_index(self, p, tol: float = 1e-9):
        """Index of the node at ``p``, or None when ``p`` is not a node."""
        i = int(np.argmin(np.abs(self.xs - p[0])))
        j = int(np.argmin(np.abs(self.ys - p[1])))
        if abs(self.xs[i] - p[0]) <= tol and abs(self.ys[j] - p[1]) <= tol:
            return i, j
        return None

    def local_spacing(self, p) -> float:
        i = int(np.clip(np.searchsorted(self.xs, p[0]), 1, len(self.xs) - 1))
        j = int(np.clip(np.searchsorted(self.ys, p[1]), 1, len(self.ys) - 1))
        return float(max(self.xs[i] - self.xs[i - 1], self.ys[j] - self.ys[j - 1]))

    def interpolate(self, values: np.ndarray, pts) -> np.ndarray:
        """Bilinear interpolation of nodal ``values`` at points (exact at nodes)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(len(pts))
        for k, (px, py) in enumerate(pts):
            if not (self.xs[0] <= px <= self.xs[-1] and self.ys[0] <= py <= self.ys[-1]):
                out[k] = 0.0
                continue
            i = int(np.clip(np.searchsorted(self.xs, px) - 1, 0, len(self.xs) - 2))
            j = int(np.clip(np.searchsorted(self.ys, py) - 1, 0, len(self.ys) - 2))
            sx = (px - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
            sy = (py - self.ys[j]) / (self.ys[j + 1] - self.ys[j])
            out[k] = (
                (1 - sx) * (1 - sy) * values[i, j]
                + sx * (1 - sy) * values[i + 1, j]
                + (1 - sx) * sy * values[i, j + 1]
                + sx * sy * values[i + 1, j + 1]
            )
        return out

    def dist_to_mask(self, p) -> float:
        """Distance from ``p`` to the nearest masked node (holes or outer box)."""
        p = np.asarray(p, dtype=float)
        d_box = min(p[0] - self.xs[0], self.xs[-1] - p[0], p[1] - self.ys[0], self.ys[-1] - p[1])
        hole_x = self.xs[~self.line_open]
        d_hole = np.min(np.hypot(hole_x - p[0], p[1])) if hole_x.size else math.inf
        return float(min(d_box, d_hole))

    def dist_to_open_line(self, p) -> float:
        """Distance from ``p`` to the windows on the line, or to the outer box."""
        p = np.asarray(p, dtype=float)
        d_box = min(p[0] - self.xs[0], self.xs[-1] - p[0], p[1] - self.ys[0], self.ys[-1] - p[1])
        open_x = self.xs[self.line_open]
        d_open = np.min(np.hypot(open_x - p[0], p[1])) if open_x.size else math.inf
        return float(min(d_box, d_open))


def _nodal_width(z: np.ndarray) -> np.ndarray:
    w = np.zeros_like(z)
    h = np.diff(z)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def build_grid(
    domain: BenedicksDomain,
    L: float,
    dx: float,
    core: float | None = None,
    ratio: float = 1.05,
) -> Grid:
    """Grid on [-L, L]^2 with hole nodes and the outer boundary masked.

    Parameters
    ----------
    domain : planar Benedicks domain (d = 2).
    L : box half-width.
    dx : node spacing (on the core when stretched).
    core : half-width of the uniform core; ``None`` gives a uniform grid.
    ratio : geometric growth of the spacing outside the core.

    Raises
    ------
    GridError
        When the domain is not planar, ``dx`` does not divide ``L`` (or the
        core), or a hole or window contains no grid node.  Windows
        narrower than ``dx`` are closed instead and listed under
        ``snap["dropped_windows"]``.
    """
    if domain.d != 2:
        raise GridError("the PDE lab is planar (d = 2)")
    if not (L > 0 and dx > 0):
        raise GridError("L and dx must be positive")
    xs = _axis(L, dx, core, ratio)
    ys = xs.copy()
    j0 = int(np.argmin(np.abs(ys)))
    ys[j0] = 0.0
    line_holes = domain.in_holes(xs[:, None])
    mask = np.zeros((len(xs), len(ys)), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    mask[:, j0] |= line_holes

    snap = {"max_snap": 0.0, "endpoints": [], "dropped_windows": []}
    for b in domain.holes.boxes:
        lo, hi = max(b.lo[0], -L), min(b.hi[0], L)
        if lo >= hi:
            continue
        closed = isinstance(domain.holes, FiniteHoles)
        inside = (xs >= lo) & (xs <= hi) if closed else (xs > lo) & (xs < hi)
        inside &= (xs > -L) & (xs < L)
        what = "hole" if closed else "window"
        if not closed and hi - lo < dx:
            # unresolvable: a single open node would widen it to ~dx
            mask[inside, j0] = True
            snap["dropped_windows"].append((float(lo), float(hi)))
            continue
        if not inside.any():
            raise GridError(f"{what} [{lo}, {hi}] contains no grid node: refine dx")
        if closed and hi - lo < dx and not (math.isinf(b.lo[0]) or math.isinf(b.hi[0])):
            raise GridError(f"hole [{lo}, {hi}] is narrower than dx = {dx}: refine dx")
        for e in (b.lo[0], b.hi[0]):
            if math.isfinite(e) and -L < e < L:
                k = int(np.argmin(np.abs(xs - e)))
                s = abs(xs[k] - e)
                snap["endpoints"].append((e, float(xs[k]), float(s)))
                snap["max_snap"] = max(snap["max_snap"], float(s))
    if isinstance(domain.holes, FiniteWindows) and not (~mask[:, j0]).any():
        raise GridError("no window node survives on the grid")
    return Grid(domain, xs, ys, float(L), float(dx), mask, j0, snap)


# --------------------------------------------------------------------------
# fields and their persistence

@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def at(self, pts) -> np.ndarray:
        return self.grid.interpolate(self.values, pts)

    def min_value(self) -> float:
        return float(self.values.min())

    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.weights()))


def write_field_csv(field_: Field, path) -> None:
    g = field_.grid
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,value\n")
        for i, x in enumerate(g.xs):
            for j, y in enumerate(g.ys):
                fh.write(f"{x:.17g},{y:.17g},{field_.values[i, j]:.17g}\n")


_MAGIC = b"BNDKGRID"


def write_field_binary(field_: Field, path) -> None:
    """Compact dump: magic, header (nx, ny, L, dx, t), xs, ys, values (float64, C order)."""
    g = field_.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqddd", len(g.xs), len(g.ys), g.L, g.dx, field_.t))
        fh.write(np.ascontiguousarray(g.xs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(g.ys, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field_.values, dtype="<f8").tobytes())


def read_field_binary(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a grid dump")
        nx, ny, L, dx, t = struct.unpack("<qqddd", fh.read(40))
        xs = np.frombuffer(fh.read(8 * nx), dtype="<f8")
        ys = np.frombuffer(fh.read(8 * ny), dtype="<f8")
        values = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(nx, ny)
    return {"L": L, "dx": dx, "t": t, "xs": xs, "ys": ys, "values": values}
