"""Benedicks domains: R^d minus a closed hole set lying in the hyperplane x_d = 0.

Holes (or their complement, the windows) are finite unions of axis-aligned
boxes in R^{d-1}.  Hole boxes may have infinite sides, which is how the
two-half-space domain and the slit plane are written down; window boxes must
be bounded.

Points are plain numpy arrays whose last coordinate is x_d.  Everything here
is immutable and safe to share between workers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """Rejected input: bad dimensions, non-finite coordinates, bad frames."""


class Where(enum.Enum):
    IN_D = "InD"
    IN_HOLES = "InHoles"


def as_point(coords, d: int | None = None) -> np.ndarray:
    p = np.asarray(coords, dtype=float)
    if p.ndim != 1:
        raise DomainError(f"a point must be a flat vector, got shape {p.shape}")
    if d is not None and p.size != d:
        raise DomainError(f"expected a point in R^{d}, got length {p.size}")
    if p.size < 2:
        raise DomainError("domain points need d >= 2")
    if not np.all(np.isfinite(p)):
        raise DomainError(f"non-finite coordinates {p}")
    return p


def split(p):
    """Return ``(x_vec, x_d)`` for a point or a stack of points."""
    p = np.asarray(p, dtype=float)
    return p[..., :-1], p[..., -1]


def mirror_across_hyperplane(p) -> np.ndarray:
    """(x_vec, x_d) -> (x_vec, -x_d).  Works on stacks of points too."""
    q = np.array(p, dtype=float, copy=True)
    q[..., -1] = -q[..., -1]
    return q


# --------------------------------------------------------------------------
# boxes

@dataclass(frozen=True)
class Box:
    """Axis-aligned box in R^k given by per-axis bounds ``lo < hi``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @classmethod
    def of(cls, spec) -> "Box":
        """Build from ``[lo, hi]`` (k = 1) or ``[[lo1, hi1], [lo2, hi2], ...]``."""
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(1, 2) if arr.size == 2 else arr
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DomainError(f"cannot read a box from {spec!r}")
        return cls(tuple(float(v) for v in arr[:, 0]), tuple(float(v) for v in arr[:, 1]))

    @property
    def k(self) -> int:
        return len(self.lo)

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.lo + self.hi)

    def degenerate(self) -> bool:
        return any(not (h > l) for l, h in zip(self.lo, self.hi))

    def as_list(self):
        return [[_jsonable(l), _jsonable(h)] for l, h in zip(self.lo, self.hi)]

    def _arrays(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def contains(self, xi, closed: bool) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        lo, hi = self._arrays()
        if closed:
            inside = (xi >= lo) & (xi <= hi)
        else:
            inside = (xi > lo) & (xi < hi)
        return np.all(inside, axis=-1)

    def inner_distance(self, xi) -> np.ndarray:
        """Distance from an inside point to the box boundary (<= 0 outside)."""
        xi = np.asarray(xi, dtype=float)
        lo, hi = self._arrays()
        return np.min(np.minimum(xi - lo, hi - xi), axis=-1)

    def outer_distance(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        lo, hi = self._arrays()
        gap = np.maximum(np.maximum(lo - xi, xi - hi), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=-1))


def _jsonable(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _merge_intervals(boxes: list[Box], closed: bool) -> list[Box]:
    ivs = sorted((b.lo[0], b.hi[0]) for b in boxes)
    out: list[list[float]] = []
    for lo, hi in ivs:
        if out and (lo <= out[-1][1] if closed else lo < out[-1][1]):
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [Box((lo,), (hi,)) for lo, hi in out]


def _merge_boxes(boxes: list[Box], closed: bool) -> list[Box]:
    # k >= 2: drop contained boxes, fuse pairs whose union is again a box
    work = list(dict.fromkeys(boxes))
    changed = True
    while changed:
        changed = False
        for i in range(len(work)):
            for j in range(len(work)):
                if i == j:
                    continue
                a, b = work[i], work[j]
                if all(la <= lb and hb <= ha for la, ha, lb, hb in zip(a.lo, a.hi, b.lo, b.hi)):
                    del work[j]
                    changed = True
                    break
                diff = [ax for ax in range(a.k) if (a.lo[ax], a.hi[ax]) != (b.lo[ax], b.hi[ax])]
                if len(diff) == 1:
                    ax = diff[0]
                    touch = b.lo[ax] <= a.hi[ax] and a.lo[ax] <= b.hi[ax]
                    if not closed:
                        touch = b.lo[ax] < a.hi[ax] and a.lo[ax] < b.hi[ax]
                    if touch:
                        lo = list(a.lo)
                        hi = list(a.hi)
                        lo[ax] = min(a.lo[ax], b.lo[ax])
                        hi[ax] = max(a.hi[ax], b.hi[ax])
                        work[i] = Box(tuple(lo), tuple(hi))
                        del work[j]
                        changed = True
                        break
            if changed:
                break
    return sorted(work, key=lambda b: (b.lo, b.hi))


def canonical_boxes(boxes: Sequence[Box], closed: bool) -> tuple[Box, ...]:
    boxes = list(boxes)
    if not boxes:
        return ()
    if boxes[0].k == 1:
        return tuple(_merge_intervals(boxes, closed))
    return tuple(_merge_boxes(boxes, closed))


# --------------------------------------------------------------------------
# hole specifications

@dataclass(frozen=True)
class FiniteHoles:
    """D^c is the union of closed boxes."""

    boxes: tuple[Box, ...]

    kind = "holes"

    def in_holes(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        hit = np.zeros(xi.shape[:-1], dtype=bool)
        for b in self.boxes:
            hit |= b.contains(xi, closed=True)
        return hit

    def boundary_distance(self, xi):
        """Classify and give a lower bound on the distance to the edge of D^c."""
        xi = np.asarray(xi, dtype=float)
        holes = self.in_holes(xi)
        inner = np.zeros(xi.shape[:-1])
        outer = np.full(xi.shape[:-1], np.inf)
        for b in self.boxes:
            inner = np.maximum(inner, np.where(b.contains(xi, True), b.inner_distance(xi), 0.0))
            outer = np.minimum(outer, b.outer_distance(xi))
        return holes, np.where(holes, inner, outer)

    def covers_hyperplane(self) -> bool:
        return any(all(math.isinf(l) and math.isinf(h) for l, h in zip(b.lo, b.hi)) for b in self.boxes)


@dataclass(frozen=True)
class FiniteWindows:
    """D is the union of bounded open boxes; D^c is everything else."""

    boxes: tuple[Box, ...]

    kind = "windows"

    def in_holes(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        inside = np.zeros(xi.shape[:-1], dtype=bool)
        for b in self.boxes:
            inside |= b.contains(xi, closed=False)
        return ~inside

    def boundary_distance(self, xi):
        xi = np.asarray(xi, dtype=float)
        holes = self.in_holes(xi)
        inner = np.zeros(xi.shape[:-1])
        outer = np.full(xi.shape[:-1], np.inf)
        for b in self.boxes:
            inner = np.maximum(inner, np.where(b.contains(xi, False), b.inner_distance(xi), 0.0))
            outer = np.minimum(outer, b.outer_distance(xi))
        return holes, np.where(holes, outer, inner)

    def covers_hyperplane(self) -> bool:
        return False


HoleSpec = FiniteHoles | FiniteWindows


def _read_boxes(specs: Iterable) -> tuple[Box, ...]:
    out = []
    for s in specs:
        out.append(s if isinstance(s, Box) else Box.of(_floatify(s)))
    return tuple(out)


def _floatify(s):
    if isinstance(s, str):
        return float(s)
    if isinstance(s, (list, tuple)):
        return [_floatify(v) for v in s]
    return s


def holes(*specs) -> FiniteHoles:
    return FiniteHoles(_read_boxes(specs))


def windows(*specs) -> FiniteWindows:
    return FiniteWindows(_read_boxes(specs))


# --------------------------------------------------------------------------
# the domain

@dataclass(frozen=True)
class BenedicksDomain:
    d: int
    holes: HoleSpec
    label: str = ""

    def __post_init__(self):
        # canonical merge on construction; validation is separate and never raises
        if isinstance(self.holes, (FiniteHoles, FiniteWindows)) and self.holes.boxes:
            try:
                merged = canonical_boxes(self.holes.boxes, closed=isinstance(self.holes, FiniteHoles))
            except Exception:  # malformed boxes are reported by validate_domain
                return
            object.__setattr__(self, "holes", type(self.holes)(merged))

    def in_holes(self, xi) -> np.ndarray:
        return self.holes.in_holes(xi)

    def classify(self, xi) -> Where:
        return classify_hyperplane_point(self, xi)

    def contains(self, p) -> bool:
        """True if ``p`` is in Omega (off the hyperplane, or on it inside D)."""
        xv, xd = split(as_point(p, self.d))
        return bool(xd != 0.0 or not self.in_holes(xv))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "variant": self.holes.kind,
            "boxes": [b.as_list() for b in self.holes.boxes],
            "label": self.label,
        }

    @property
    def is_two_halfspace(self) -> bool:
        return isinstance(self.holes, FiniteHoles) and self.holes.covers_hyperplane()


def classify_hyperplane_point(domain: BenedicksDomain, xi) -> Where:
    """Tell whether ``xi`` in R^{d-1} lies in the windows D or in the closed holes.

    Boundary points of D count as holes.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != domain.d - 1:
        raise DomainError(f"hyperplane point must have length {domain.d - 1}, got {xi.size}")
    if not np.all(np.isfinite(xi)):
        raise DomainError(f"non-finite hyperplane point {xi}")
    return Where.IN_HOLES if bool(domain.in_holes(xi)) else Where.IN_D


# --------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    checks: list[tuple[str, bool, str]] = field(default_factory=list)
    canonical: list | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failures(self) -> list[str]:
        return [f"{name}: {msg}" for name, ok, msg in self.checks if not ok]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "checks": [{"name": n, "pass": ok, "message": m} for n, ok, m in self.checks],
            "canonical_boxes": self.canonical,
            "notes": self.notes,
        }


def validate_domain(domain: BenedicksDomain) -> ValidationReport:
    rep = ValidationReport()

    def check(name, ok, msg_fail, msg_ok="ok"):
        rep.checks.append((name, bool(ok), msg_ok if ok else msg_fail))
        return ok

    check("dimension", isinstance(domain.d, int) and domain.d >= 2, f"d must be an integer >= 2, got {domain.d!r}")
    hs = domain.holes
    if not isinstance(hs, (FiniteHoles, FiniteWindows)):
        check("variant", False, f"unknown hole variant {type(hs).__name__}")
        return rep
    empty_msg = "D empty: no windows given" if isinstance(hs, FiniteWindows) else "D^c empty: no holes given"
    if not check("nonempty", len(hs.boxes) > 0, empty_msg):
        return rep
    k = domain.d - 1 if isinstance(domain.d, int) else -1
    check("box dimension", all(b.k == k for b in hs.boxes), f"every box must live in R^{k}")
    nan = any(math.isnan(v) for b in hs.boxes for v in b.lo + b.hi)
    check("finite bounds", not nan, "NaN in box bounds")
    check(
        "nondegenerate",
        not any(b.degenerate() for b in hs.boxes),
        "degenerate hole: every box side needs positive length"
        if isinstance(hs, FiniteHoles)
        else "degenerate window: every box side needs positive length",
    )
    if isinstance(hs, FiniteWindows):
        check("bounded windows", all(b.bounded for b in hs.boxes), "windows must be bounded boxes")
    elif hs.covers_hyperplane():
        rep.notes.append("D is empty: the hyperplane is entirely absorbing (two half-spaces)")
    if rep.valid:
        rep.canonical = [b.as_list() for b in hs.boxes]
    return rep


# --------------------------------------------------------------------------
# oblique reflections used in the symmetry estimate

@dataclass(frozen=True)
class ReflectionFrame:
    """Base point ``y`` (off the hyperplane) and a unit direction ``n`` in R^{d-1}."""

    y: tuple[float, ...]
    n: tuple[float, ...]

    def __post_init__(self):
        y = as_point(self.y)
        n = np.asarray(self.n, dtype=float).reshape(-1)
        if n.size != y.size - 1:
            raise DomainError("n must live in R^{d-1}")
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-12:
            raise DomainError(f"|n| must be 1 (got {np.linalg.norm(n)!r})")
        if y[-1] == 0.0:
            raise DomainError("frame base point must satisfy y_d != 0")
        object.__setattr__(self, "y", tuple(float(v) for v in y))
        object.__setattr__(self, "n", tuple(float(v) for v in n))

    @property
    def d(self) -> int:
        return len(self.y)

    def _proj(self, x):
        xv, xd = split(x)
        return xv, xd, (xv - np.asarray(self.y[:-1])) @ np.asarray(self.n)

    def s_plus(self, x) -> np.ndarray:
        xv, xd, s = self._proj(x)
        n = np.asarray(self.n)
        return np.concatenate([xv + (xd - s)[..., None] * n, s[..., None]], axis=-1)

    def s_minus(self, x) -> np.ndarray:
        xv, xd, s = self._proj(x)
        n = np.asarray(self.n)
        return np.concatenate([xv - (xd + s)[..., None] * n, (-s)[..., None]], axis=-1)

    def in_omega_plus(self, x) -> np.ndarray:
        _, xd, s = self._proj(x)
        return np.abs(xd) <= s

    def in_omega_minus(self, x) -> np.ndarray:
        _, xd, s = self._proj(x)
        return -np.abs(xd) >= s


def oblique_reflections(frame: ReflectionFrame, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != frame.d:
        raise DomainError("point and frame dimensions differ")
    return frame.s_plus(x), frame.s_minus(x)


def in_omega_plus(frame: ReflectionFrame, x):
    return frame.in_omega_plus(np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# bundled reference domains

def two_halfspace(d: int = 2) -> BenedicksDomain:
    inf = math.inf
    return BenedicksDomain(d, FiniteHoles((Box((-inf,) * (d - 1), (inf,) * (d - 1)),)), "two half-spaces")


def slit_plane() -> BenedicksDomain:
    return BenedicksDomain(2, FiniteHoles((Box((0.0,), (math.inf,)),)), "slit plane: hole [0, inf)")


def segment_exterior(a: float = 1.0) -> BenedicksDomain:
    return BenedicksDomain(2, FiniteHoles((Box((-a,), (a,)),)), f"exterior of segment [-{a}, {a}]")


def window_gap(a: float = 1.0) -> BenedicksDomain:
    return BenedicksDomain(2, FiniteWindows((Box((-a,), (a,)),)), f"single window (-{a}, {a})")


def shrinking_windows(n_max: int = 19) -> BenedicksDomain:
    """Windows (n - 2^-|n|, n + 2^-|n|) for |n| <= n_max (pick n_max < L for a box)."""
    boxes = tuple(Box((n - 2.0 ** -abs(n),), (n + 2.0 ** -abs(n),)) for n in range(-n_max, n_max + 1))
    return BenedicksDomain(
        2,
        FiniteWindows(boxes),
        f"windows (n - 2^-|n|, n + 2^-|n|), truncated to |n| <= {n_max}",
    )
