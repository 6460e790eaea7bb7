"""Asymptotic laws extracted from curves.

Three models for a positive series v(t):

* ``PurePower``          v = C t^-p
* ``LogCorrectedPower``  v = C t^-p (ln t)^-q      (needs t > 1)
* ``Plateau``            v = C

All three are linear in log space, so each fit is a weighted least-squares
solve for ``ln v``; the model is chosen by the small-sample corrected Akaike
criterion and confidence intervals come from a pairs bootstrap with a fixed
sub-seed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

MODELS = ("PurePower", "LogCorrectedPower", "Plateau")
N_BOOT = 200
BOOT_KEY = 7
# residual variance floor: exact synthetic data would otherwise give log(0)
VAR_FLOOR = 1e-18
# the (ln t)^-q factor is indistinguishable from a power over short windows
MIN_LOG_DECADES = 1.5


class FitError(ValueError):
    pass


@dataclass
class RateFit:
    model: str
    p: float
    q: float | None
    C: float
    ci_p: tuple
    ci_q: tuple | None
    ci_C: tuple
    window: tuple
    n_points: int
    goodness: float
    criterion_scores: dict = field(default_factory=dict)

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        out = self.C * t ** (-self.p)
        if self.q is not None:
            out = out * np.log(t) ** (-self.q)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _series(series):
    """Accept a SurvivalCurve, an (n, 2|3) array or a (t, value[, stderr]) tuple."""
    if hasattr(series, "estimate"):
        return np.asarray(series.t, float), np.asarray(series.estimate, float), np.asarray(series.stderr, float)
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[1] in (2, 3) and arr.shape[0] != arr.shape[1]:
        arr = arr.T
    t, v = arr[0], arr[1]
    se = arr[2] if len(arr) > 2 else np.zeros_like(v)
    return t, v, se


def _design(model: str, t: np.ndarray) -> np.ndarray:
    lt = np.log(t)
    if model == "PurePower":
        return np.column_stack([np.ones_like(t), -lt])
    if model == "LogCorrectedPower":
        return np.column_stack([np.ones_like(t), -lt, -np.log(lt)])
    if model == "Plateau":
        return np.ones((len(t), 1))
    raise FitError(f"unknown model {model!r}")


def _wls(X, y, w):
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    r = y - X @ beta
    return beta, float(np.sum(w * r * r))


def _aicc(wrss: float, wsum: float, n: int, k: int) -> float:
    var = max(wrss / wsum, VAR_FLOOR)
    pen = 2 * k + (2 * k * (k + 1) / (n - k - 1) if n - k - 1 > 0 else math.inf)
    return n * math.log(var) + pen


def _unpack(model, beta):
    C = math.exp(beta[0])
    p = float(beta[1]) if model != "Plateau" else 0.0
    q = float(beta[2]) if model == "LogCorrectedPower" else None
    return p, q, C


def fit_rate(series, window=None, model: str | None = None, n_boot: int = N_BOOT, seed: int = 0) -> RateFit:
    """Fit the asymptotic law of a positive series inside ``window = (t_min, t_max)``.

    Rows with a standard error are weighted by ``(value / stderr)^2`` (the
    variance of ``ln v``); without errors all rows weigh the same.  ``model``
    forces one of ``MODELS``; by default the lowest AICc wins.

    Raises
    ------
    FitError
        Fewer than 8 points in the window, nonpositive values, a degenerate
        window, or a forced log-corrected fit on too short a window.
    """
    t, v, se = _series(series)
    lo, hi = (float(t.min()), float(t.max())) if window is None else map(float, window)
    if not hi > lo:
        raise FitError(f"degenerate window [{lo}, {hi}]")
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    t, v, se = t[sel], v[sel], se[sel]
    if len(t) < 8:
        raise FitError(f"need at least 8 points in the window, got {len(t)}")
    if np.any(~(v > 0)):
        raise FitError("values must be positive")
    if np.any(~(t > 0)):
        raise FitError("times must be positive")
    y = np.log(v)
    rel = np.where(se > 0, se / v, 0.0)
    w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-300) ** 2, 1.0) if np.all(rel > 0) else np.ones_like(v)
    w = w / w.mean()
    decades = math.log10(t.max() / t.min())
    log_ok = t.min() > 1.0 and decades >= MIN_LOG_DECADES
    candidates = [model] if model else [m for m in MODELS if m != "LogCorrectedPower" or log_ok]
    if model == "LogCorrectedPower" and not log_ok:
        raise FitError(
            f"the log-corrected model needs t > 1 and at least {MIN_LOG_DECADES} decades "
            f"(window spans {decades:.2f} from t = {t.min():g})"
        )
    scores, fits = {}, {}
    for m in candidates:
        X = _design(m, t)
        beta, wrss = _wls(X, y, w)
        fits[m] = (beta, wrss)
        scores[m] = _aicc(wrss, float(w.sum()), len(t), X.shape[1])
    best = min(candidates, key=lambda m: (scores[m], MODELS.index(m)))
    beta, wrss = fits[best]
    p, q, C = _unpack(best, beta)

    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(BOOT_KEY,)))
    X = _design(best, t)
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(t), len(t))
        if len(np.unique(t[idx])) < X.shape[1] + 1:
            continue
        b, _ = _wls(X[idx], y[idx], w[idx])
        boots.append(_unpack(best, b))
    def ci(k, point):
        vals = [b[k] for b in boots if b[k] is not None]
        if not vals:
            return (point, point)
        lo_, hi_ = np.percentile(vals, [2.5, 97.5])
        return (float(min(lo_, point)), float(max(hi_, point)))
    tss = float(np.sum(w * (y - np.average(y, weights=w)) ** 2))
    return RateFit(
        model=best,
        p=p,
        q=q,
        C=C,
        ci_p=ci(0, p),
        ci_q=ci(1, q) if q is not None else None,
        ci_C=ci(2, C),
        window=(lo, hi),
        n_points=int(len(t)),
        goodness=1.0 - wrss / tss if tss > 0 else 1.0,
        criterion_scores={m: float(s) for m, s in scores.items()},
    )


# --------------------------------------------------------------------------
# cone dimension

class Dimension(enum.Enum):
    ONE = "One"
    TWO = "Two"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ConeReport:
    dimension: Dimension
    final_slope: float
    slope_stderr: float
    dyadic_t: list
    g: list
    slopes: list
    thresholds: dict
    window: tuple
    hint: str = ""

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "final_slope": self.final_slope,
            "slope_stderr": self.slope_stderr,
            "dyadic_t": self.dyadic_t,
            "g": self.g,
            "slopes": self.slopes,
            "thresholds": self.thresholds,
            "window": list(self.window),
            "hint": self.hint,
        }


def classify_cone_dimension(
    curve,
    slope_tol: float = 0.05,
    slope_min: float = 0.10,
    mixing_time: float = 1.0,
    min_decades: float = 1.5,
) -> ConeReport:
    """Read the cone dimension off the growth of g(t) = sqrt(t) P_x(T > t).

    The log-log slope of g over the final decade decides: |slope| < slope_tol
    gives Two, slope >= slope_min gives One, anything else (or a curve that
    spans fewer than ``min_decades`` beyond ``mixing_time``) is Inconclusive.
    """
    t, v, se = _series(curve)
    keep = (t >= mixing_time) & (v > 0)
    t, v, se = t[keep], v[keep], se[keep]
    thresholds = {"slope_tol": slope_tol, "slope_min": slope_min, "mixing_time": mixing_time, "min_decades": min_decades}
    if len(t) < 3:
        return ConeReport(Dimension.INCONCLUSIVE, float("nan"), float("nan"), [], [], [], thresholds, (mixing_time, mixing_time),
                          "too few positive points beyond the mixing time")
    lt, lg = np.log(t), np.log(np.sqrt(t) * v)
    span = math.log10(t[-1] / t[0])
    dy = 2.0 ** np.arange(math.ceil(math.log2(t[0])), math.floor(math.log2(t[-1])) + 1)
    g_dy = np.exp(np.interp(np.log(dy), lt, lg))
    slopes = list(np.diff(np.log(g_dy)) / np.diff(np.log(dy))) if len(dy) > 1 else []
    final = t >= t[-1] / 10
    if final.sum() < 3:
        return ConeReport(Dimension.INCONCLUSIVE, float("nan"), float("nan"), list(dy), list(g_dy), slopes, thresholds,
                          (float(t[0]), float(t[-1])), "fewer than 3 points in the final decade")
    rel = np.where(se[final] > 0, se[final] / v[final], 0.0)
    w = 1.0 / rel**2 if np.all(rel > 0) else np.ones(final.sum())
    X = np.column_stack([np.ones(final.sum()), lt[final]])
    beta, wrss = _wls(X, lg[final], w / w.mean())
    slope = float(beta[1])
    cov = np.linalg.pinv((X * (w / w.mean())[:, None]).T @ X)
    dof = max(final.sum() - 2, 1)
    slope_se = float(math.sqrt(max(cov[1, 1] * wrss / dof, 0.0))) if not np.all(rel > 0) else float(math.sqrt(cov[1, 1] / w.mean()))
    hint = ""
    if span < min_decades:
        dim = Dimension.INCONCLUSIVE
        hint = f"curve spans {span:.2f} decades beyond the mixing time; need {min_decades}"
    elif abs(slope) < slope_tol:
        dim = Dimension.TWO
    elif slope >= slope_min:
        dim = Dimension.ONE
    else:
        dim = Dimension.INCONCLUSIVE
        hint = "final-decade slope between the thresholds; box truncation (L) may bind or t is not yet asymptotic"
    return ConeReport(dim, slope, slope_se, [float(x) for x in dy], [float(x) for x in g_dy],
                      [float(s) for s in slopes], thresholds, (float(t[0]), float(t[-1])), hint)


# --------------------------------------------------------------------------
# limit predictions

def thm1_prediction(d: int, u1x: float, u1y: float, u2x: float, u2y: float) -> float:
    """Limit of t^{1+d/2} p_t(x, y) in the dimension-two case: 2 (2 pi)^{-d/2} (u1 u1 + u2 u2)."""
    if min(u1x, u1y, u2x, u2y) < 0:
        raise ValueError("harmonic profile values must be nonnegative")
    return 2 * (2 * math.pi) ** (-d / 2) * (u1x * u1y + u2x * u2y)


def thm2_prediction(v_s_at_x: float) -> float:
    """Limit of sqrt(t) P_x(T > t) in the dimension-two case: sqrt(2/pi) v_s(x)."""
    if v_s_at_x < 0:
        raise ValueError("v_s must be nonnegative")
    return math.sqrt(2 / math.pi) * v_s_at_x


# --------------------------------------------------------------------------
# empirical bound constants

@dataclass
class BoundFitReport:
    Gamma_hat: float
    K_hat: float
    applicable: bool
    growth_flag: bool
    growth_slopes: dict
    inventory: dict
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _trend(ts, vals):
    ts, vals = np.asarray(ts, float), np.asarray(vals, float)
    ok = vals > 0
    if ok.sum() < 3:
        return 0.0
    ts, vals = ts[ok], vals[ok]
    final = ts >= ts.max() / 10
    if final.sum() < 3:
        final = np.ones_like(ts, dtype=bool)
    return float(np.polyfit(np.log(ts[final]), np.log(vals[final]), 1)[0])


def fit_bound_constants(
    kernel_samples,
    survival_samples,
    v_s,
    d: int = 2,
    dimension: Dimension | str = Dimension.TWO,
    t_min: float = 1.0,
    growth_tol: float = 0.05,
) -> BoundFitReport:
    """Empirical suprema of the two normalised quantities bounded by constants.

    ``kernel_samples``: rows ``(t, x, y, p_t(x, y))``; ``survival_samples``:
    rows ``(t, x, P_x(T > t))``; ``v_s``: callable on points.  Only ``t > t_min``
    enters.  A series whose normalised value still grows (final-decade log-log
    slope above ``growth_tol``) raises the growth flag.
    """
    dimension = Dimension(dimension)
    gam, kap = [], []
    kseries: dict = {}
    sseries: dict = {}
    for t, x, y, p in kernel_samples:
        if t <= t_min:
            continue
        r = t ** (1 + d / 2) * p / ((1 + v_s(x)) * (1 + v_s(y)))
        gam.append(r)
        kseries.setdefault((tuple(x), tuple(y)), []).append((t, r))
    for t, x, P in survival_samples:
        if t <= t_min:
            continue
        r = math.sqrt(t) * P / (1 + v_s(x))
        kap.append(r)
        sseries.setdefault(tuple(x), []).append((t, r))
    slopes = {}
    for key, rows in list(kseries.items()) + list(sseries.items()):
        rows.sort()
        slopes[str(key)] = _trend([r[0] for r in rows], [r[1] for r in rows])
    growth = any(s > growth_tol for s in slopes.values())
    applicable = dimension is Dimension.TWO
    note = "" if applicable else "the bounds are stated for a two-dimensional cone; values reported for reference only"
    return BoundFitReport(
        Gamma_hat=float(max(gam)) if gam else float("nan"),
        K_hat=float(max(kap)) if kap else float("nan"),
        applicable=applicable,
        growth_flag=bool(growth),
        growth_slopes=slopes,
        inventory={"kernel": len(gam), "survival": len(kap), "t_min": t_min},
        note=note,
    )
