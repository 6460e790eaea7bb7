"""Pass/fail checks of exact identities and inequalities on computed data.

Each check takes plain numbers or callables (so the same code judges closed
forms, Monte Carlo and finite-difference output) and returns a CheckReport.
Slack is split into a deterministic budget (``tolerance``) and a statistical
one (``stat_margin`` = ``sigma_multiple`` standard errors); the reported
``max_violation`` and ``stat_margin`` belong to the worst inventory item, so

    pass  <=>  max_violation <= tolerance + stat_margin.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analytic import halfspace_kernel
from .asymptotics import fit_rate, thm1_prediction, thm2_prediction
from .geometry import ReflectionFrame, as_point

SIGMA = 3.0
# limits this small are "zero" (e.g. points on opposite sides of two half-spaces)
ZERO = 1e-12


@dataclass
class CheckReport:
    check_name: str
    domain: str
    inventory: list
    max_violation: float
    tolerance: float
    stat_margin: float
    passed: bool
    sigma_multiple: float = SIGMA
    status: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return json.loads(json.dumps(d, default=_jsonable))

    @classmethod
    def from_dict(cls, d: dict) -> "CheckReport":
        d = dict(d)
        d["passed"] = d.pop("pass")
        for k in ("max_violation", "tolerance", "stat_margin", "sigma_multiple"):
            d[k] = float(d[k])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, s: str) -> "CheckReport":
        return cls.from_dict(json.loads(s))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def _report(name, domain, inventory, viol, sigma, tolerance, k=SIGMA, details=None) -> CheckReport:
    if not inventory:
        raise ValueError(f"{name}: empty inventory")
    viol = np.asarray(viol, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), viol.shape)
    excess = viol - k * sigma
    j = int(np.nanargmax(excess)) if np.any(np.isfinite(excess)) else 0
    mv, margin = float(viol[j]), float(k * sigma[j])
    ok = bool(np.isfinite(mv) and mv <= tolerance + margin)
    det = {"worst": j, "violations": viol.tolist(), "sigmas": sigma.tolist()}
    det.update(details or {})
    return CheckReport(name, domain, inventory, mv, float(tolerance), margin, ok, k, details=det)


def not_applicable(name: str, domain: str, reason: str, inventory=None) -> CheckReport:
    return CheckReport(name, domain, inventory or [{"reason": reason}], float("nan"), 0.0, 0.0, False,
                       status="not_applicable", details={"reason": reason})


# --------------------------------------------------------------------------

def check_lemma3(triples: Sequence[dict], d: int, domain: str = "", solver_tol: float = 0.0, k: float = SIGMA) -> CheckReport:
    """p_{3t}(x, y) <= (2 pi t)^{-d/2} P_x(T > t) P_y(T > t) on each triple.

    Each triple is a dict with ``t``, ``p3t`` and ``Px``, ``Py``, optionally
    ``p3t_se``, ``Px_se``, ``Py_se`` and ``x``, ``y`` for the inventory.
    Violations are relative to the right-hand side.
    """
    viol, sig, inv = [], [], []
    for tr in triples:
        t = float(tr["t"])
        c = (2 * math.pi * t) ** (-d / 2)
        rhs = c * tr["Px"] * tr["Py"]
        lhs = tr["p3t"]
        se = math.sqrt(tr.get("p3t_se", 0.0) ** 2 + (c * tr["Py"] * tr.get("Px_se", 0.0)) ** 2
                       + (c * tr["Px"] * tr.get("Py_se", 0.0)) ** 2)
        scale = max(rhs, 1e-300)
        viol.append((lhs - rhs) / scale)
        sig.append(se / scale)
        inv.append({"x": _pt(tr.get("x")), "y": _pt(tr.get("y")), "t": t, "lhs": lhs, "rhs": rhs})
    return _report("lemma3", domain, inv, viol, sig, solver_tol, k)


def _pt(p):
    return None if p is None else [float(v) for v in np.atleast_1d(p)]


def check_lemmaA(
    kernel: Callable,
    frame: ReflectionFrame,
    points,
    t: float,
    domain: str = "",
    solver_tol: float = 0.0,
    kernel_se: Callable | None = None,
    k: float = SIGMA,
) -> CheckReport:
    """p_t(x, y) <= p_t(S+ x, y) + p_t(S- x, y) for sample points x in Omega+.

    ``kernel(pts)`` returns p_t(., y) at an (n, d) array; the frame carries y.
    Points outside Omega+ are skipped and counted.  Violations are relative to
    the largest kernel value met on the inventory.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = frame.in_omega_plus(pts)
    skipped = int((~inside).sum())
    pts = pts[inside]
    if not len(pts):
        raise ValueError("lemmaA: no sample point lies in Omega+")
    sp, sm = frame.s_plus(pts), frame.s_minus(pts)
    px, pp, pm = kernel(pts), kernel(sp), kernel(sm)
    scale = max(float(np.max(np.concatenate([px, pp, pm]))), 1e-300)
    viol = (px - pp - pm) / scale
    if kernel_se is not None:
        sig = np.sqrt(kernel_se(pts) ** 2 + kernel_se(sp) ** 2 + kernel_se(sm) ** 2) / scale
    else:
        sig = np.zeros_like(viol)
    inv = [{"x": list(map(float, x)), "t": float(t), "y": list(map(float, frame.y)), "n": list(map(float, frame.n))} for x in pts]
    return _report("lemmaA", domain, inv, viol, sig, solver_tol, k, {"skipped_outside_omega_plus": skipped})


def check_reflection(rows: Sequence[dict], domain: str = "", tol: float = 0.02) -> CheckReport:
    """|p_t(x, y) - p^H_t(x, y) - p_t(x, y*)| / p_t(x, y) < tol for x_d y_d > 0.

    Each row has ``t``, ``x``, ``y``, ``p`` (= p_t(x, y)) and ``p_star``
    (= p_t(x, y*)); the half-space term is evaluated here.
    """
    viol, inv = [], []
    for r in rows:
        x, y = as_point(r["x"]), as_point(r["y"])
        if not x[-1] * y[-1] > 0:
            raise ValueError("the reflection identity needs x and y strictly on the same side")
        ph = float(halfspace_kernel(r["t"], x, y))
        res = abs(r["p"] - ph - r["p_star"]) / max(abs(r["p"]), 1e-300)
        viol.append(res)
        inv.append({"x": _pt(x), "y": _pt(y), "t": float(r["t"]), "p": r["p"], "pH": ph, "p_star": r["p_star"]})
    return _report("reflection", domain, inv, viol, 0.0, tol)


def check_duhamel(rows: Sequence[dict], domain: str = "", tol: float = 0.05) -> CheckReport:
    """Relative residual between the boundary representation and the kernel.

    Rows carry ``t``, ``x``, ``y``, ``rhs`` and ``p``; when both vanish (the
    two sides of the two-half-space) the residual is 0.
    """
    viol, inv = [], []
    for r in rows:
        den = max(abs(r["p"]), abs(r["rhs"]))
        res = 0.0 if den == 0 else abs(r["rhs"] - r["p"]) / den
        viol.append(res)
        inv.append({"x": _pt(r["x"]), "y": _pt(r["y"]), "t": float(r["t"]), "p": r["p"], "rhs": r["rhs"]})
    return _report("duhamel", domain, inv, viol, 0.0, tol)


def check_time_ratio(curve, s: float, domain: str = "", tol: float = 0.01, k: float = SIGMA) -> CheckReport:
    """P_x(T > t + s) / P_x(T > t) -> 1: the final ratio is within ``tol`` of 1
    and |1 - ratio| does not grow (beyond noise) along the curve."""
    t = np.asarray(curve.t, float)
    est = np.asarray(curve.estimate, float)
    n = np.asarray(getattr(curve, "survivors", None) if getattr(curve, "survivors", None) is not None else np.zeros(len(t)))
    pairs = []
    for i, ti in enumerate(t):
        j = np.flatnonzero(np.abs(t - (ti + s)) <= 1e-9 * max(1.0, ti + s))
        if s == 0:
            j = np.array([i])
        if len(j) and est[i] > 0:
            pairs.append((i, int(j[0])))
    if not pairs:
        raise ValueError("time_ratio: the curve has no (t, t + s) pairs")
    ratios, sig, inv = [], [], []
    for i, j in pairs:
        r = est[j] / est[i]
        ratios.append(r)
        # nested events: survivors at t + s are a binomial thinning of those at t
        sig.append(math.sqrt(max(r * (1 - r), 0.0) / n[i]) if n[i] > 0 else 0.0)
        inv.append({"t": float(t[i]), "s": float(s), "ratio": float(r)})
    dev = np.abs(1 - np.asarray(ratios))
    sig = np.asarray(sig)
    trend_ok = bool(dev[-1] <= dev[0] + k * math.hypot(sig[0], sig[-1]) + 1e-15)
    final_viol = np.zeros(len(dev))
    final_viol[:] = -np.inf
    final_viol[-1] = dev[-1]
    rep = _report("time_ratio", domain, inv, final_viol, sig, tol, k, {"ratios": ratios, "trend_toward_one": trend_ok})
    if not trend_ok:
        rep.passed = False
        rep.status = "fail"
    return rep


def plateau(t, g, se=None, window=None) -> tuple[float, float]:
    """Plateau level of a series over ``window`` (default: the final decade)."""
    t = np.asarray(t, float)
    g = np.asarray(g, float)
    se = np.zeros_like(g) if se is None else np.asarray(se, float)
    lo, hi = window if window is not None else (t.max() / 10, t.max())
    sel = (t >= lo) & (t <= hi) & (g > 0)
    if sel.sum() >= 8:
        f = fit_rate((t[sel], g[sel], se[sel]), model="Plateau")
        if np.all(se[sel] > 0):
            rel = 1 / math.sqrt(float(np.sum((g[sel] / se[sel]) ** 2)))
        else:
            rel = 0.0
        return f.C, f.C * rel
    j = int(np.argmax(t))
    return float(g[j]), float(se[j])


def _decays(t, g, window=None, slope_max: float = -0.05) -> bool:
    """Whether a positive series still falls (log-log slope below ``slope_max``) on the window."""
    t = np.asarray(t, float)
    g = np.asarray(g, float)
    lo, hi = window if window is not None else (t.max() / 10, t.max())
    sel = (t >= lo) & (t <= hi) & (g > 0)
    if sel.sum() < 3:
        return False
    return bool(np.polyfit(np.log(t[sel]), np.log(g[sel]), 1)[0] < slope_max)


def _rel_gap(level: float, pred: float, decaying: bool = False, floor: float = ZERO) -> float:
    """|level / pred - 1|.  A vanishing prediction is met by a vanishing level
    or by a series that still decays (it tends to 0, not to a positive limit)."""
    if abs(pred) <= floor:
        return 0.0 if abs(level) <= floor or decaying else math.inf
    return abs(level / pred - 1)


def check_thm_limits(
    survival_rows: Sequence[dict] = (),
    kernel_rows: Sequence[dict] = (),
    dimension: str = "Two",
    d: int = 2,
    domain: str = "",
    tol: float = 0.05,
    k: float = SIGMA,
) -> CheckReport:
    """Plateaus of sqrt(t) P_x and t^{1+d/2} p_t(x, y) against the limit formulas.

    ``survival_rows``: dicts with ``x``, ``v_s``, ``t`` (array), ``P``
    (array), optional ``se`` and ``window``.  ``kernel_rows``: dicts with
    ``x``, ``y``, ``u1x``, ``u1y``, ``u2x``, ``u2y``, ``t``, ``p``, optional
    ``se`` and ``window``.  Not applicable unless the dimension is Two.
    """
    if str(getattr(dimension, "value", dimension)) != "Two":
        return not_applicable("thm_limits", domain, "cone dimension is not Two: only ratio limits apply")
    viol, sig, inv = [], [], []
    for r in survival_rows:
        t = np.asarray(r["t"], float)
        g = np.sqrt(t) * np.asarray(r["P"], float)
        se = np.sqrt(t) * np.asarray(r.get("se", np.zeros_like(t)), float)
        level, level_se = plateau(t, g, se, r.get("window"))
        pred = thm2_prediction(r["v_s"])
        viol.append(_rel_gap(level, pred, pred <= ZERO and _decays(t, g, r.get("window"))))
        sig.append(level_se / pred if pred > ZERO else 0.0)
        inv.append({"kind": "survival", "x": _pt(r["x"]), "plateau": level, "prediction": pred})
    for r in kernel_rows:
        t = np.asarray(r["t"], float)
        scale = t ** (1 + d / 2)
        g = scale * np.asarray(r["p"], float)
        se = scale * np.asarray(r.get("se", np.zeros_like(t)), float)
        level, level_se = plateau(t, g, se, r.get("window"))
        pred = thm1_prediction(d, r["u1x"], r["u1y"], r["u2x"], r["u2y"])
        viol.append(_rel_gap(level, pred, pred <= ZERO and _decays(t, g, r.get("window"))))
        sig.append(level_se / pred if pred > ZERO else 0.0)
        inv.append({"kind": "kernel", "x": _pt(r["x"]), "y": _pt(r["y"]), "plateau": level, "prediction": pred})
    return _report("thm_limits", domain, inv, viol, sig, tol, k)
