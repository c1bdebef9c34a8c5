"""Scaling-law fits."""
from __future__ import annotations

import numpy as np
from scipy import optimize


def fit_loglog(xs, ys) -> tuple[float, float, float]:
    """Least-squares line through ``(log x, log y)``.

    Returns ``(slope, intercept, slope_stderr)``; the stderr is zero for two points.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and the same length")
    if x.size < 2:
        raise ValueError("need at least two points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("xs are all equal")
    res = np.polyfit(lx, ly, 1, full=False, cov=False)
    slope, intercept = float(res[0]), float(res[1])
    if x.size > 2:
        resid = ly - (slope * lx + intercept)
        s2 = resid @ resid / (x.size - 2)
        err = float(np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        err = 0.0
    return slope, intercept, err


def fit_offset_power(xs, ys) -> tuple[float, float, float]:
    """Fit ``y = c0 + c1 * x**a``; returns ``(a, c0, c1)``.

    Used where a quantity grows like a power of ``x`` on top of an
    ``x``-independent floor.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 4:
        raise ValueError("need at least four points")
    scale = np.abs(y).max()
    yn = y / scale
    a0, _, _ = fit_loglog(x, np.maximum(yn - yn.min() * 0.5, 1e-300))

    def model(x, c0, c1, a):
        return c0 + c1 * x**a

    popt, _ = optimize.curve_fit(model, x, yn, p0=[0.0, yn.max() / x.max() ** a0, a0], maxfev=20000)
    c0, c1, a = popt
    return float(a), float(c0 * scale), float(c1 * scale)
