"""Closed-form reference quantities for Brownian motion with generator (1/2)Laplacian.

All kernels broadcast over stacked points (last axis = coordinates), so a whole
grid of ``y`` values can be evaluated against one ``x`` in a single call.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError(f"time must be positive, got {t}")
    return t


def free_kernel(t, x, y):
    """Gaussian transition density (2 pi t)^{-d/2} exp(-|x - y|^2 / 2t)."""
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    r2 = np.sum((x - y) ** 2, axis=-1)
    return (2 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (2 * t))


def halfspace_kernel(t, x, y):
    """Dirichlet heat kernel of R^d minus the hyperplane {x_d = 0}.

    For points on the same side this is the half-space kernel
    ``2 (2 pi t)^{-d/2} exp(-|dx|^2/2t) exp(-(a^2 + b^2)/2t) sinh(ab/t)`` with
    ``a = x_d``, ``b = y_d``; it is zero across or on the hyperplane.  The
    product ``exp(-(a^2+b^2)/2t) sinh(ab/t)`` is rewritten as
    ``-exp(-(a-b)^2/2t) expm1(-2ab/t) / 2`` which neither overflows for large
    ``ab/t`` nor cancels for small ``ab/t``.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    a, b = x[..., -1], y[..., -1]
    ab = a * b
    r2 = np.sum((x[..., :-1] - y[..., :-1]) ** 2, axis=-1)
    same = ab > 0
    core = -np.expm1(-2 * np.where(same, ab, 0.0) / t)
    val = (2 * np.pi * t) ** (-d / 2) * np.exp(-(r2 + (a - b) ** 2) / (2 * t)) * core
    return np.where(same, val, 0.0)


def halfspace_survival(t, x_d):
    """P(T_H > t) from height x_d: the mass (2 pi t)^{-1/2} of [-|x_d|, |x_d|]."""
    t = _check_t(t)
    return erf(np.abs(np.asarray(x_d, dtype=float)) / np.sqrt(2 * t))


def halfspace_kernel_limit(x, y, d: int | None = None):
    """lim_{t -> inf} t^{1+d/2} p^H_t(x, y) = 2 x_d y_d / (2 pi)^{d/2}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1] if d is None else d
    a, b = x[..., -1], y[..., -1]
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("the limit is stated for x_d > 0 and y_d > 0")
    return 2 * a * b / (2 * np.pi) ** (d / 2)


def halfspace_survival_lower_bound(s, x_d):
    """1 - (2/sqrt(2 pi)) (sqrt(s)/x_d) exp(-x_d^2 / 2s), a lower bound for P(T_H > s)."""
    s = _check_t(s)
    x_d = np.asarray(x_d, dtype=float)
    if np.any(x_d <= 0):
        raise ValueError("x_d must be positive")
    return 1 - 2 / np.sqrt(2 * np.pi) * np.sqrt(s) / x_d * np.exp(-(x_d**2) / (2 * s))
