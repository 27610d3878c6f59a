"""Trajectory post-processing: decay-rate fits and sign-change detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    rate: float          # decay rate (exponential) or exponent (power law)
    amplitude: float
    r_squared: float     # goodness of the straight-line fit in log scale


def _line_fit(u: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    a = np.stack([u, np.ones_like(u)], axis=1)
    coef, *_ = np.linalg.lstsq(a, w, rcond=None)
    resid = w - a @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(w - w.mean(), w - w.mean()))
    r2 = 1.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2


def fit_exponential(t, y) -> RateFit:
    """Least-squares fit of y ~ amplitude * exp(-rate * t) in log scale.

    All samples must be strictly positive and at least 10 are required;
    slice the window before calling.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise AnalysisError("t and y must be 1d arrays of equal length")
    if len(y) < 10:
        raise AnalysisError("need at least 10 samples in the fit window")
    if np.any(y <= 0):
        raise AnalysisError("nonpositive sample in the fit window")
    slope, intercept, r2 = _line_fit(t, np.log(y))
    return RateFit(rate=-slope, amplitude=float(np.exp(intercept)),
                   r_squared=r2)


def fit_power(t, y) -> RateFit:
    """Least-squares fit of y ~ amplitude * t**(-rate) in log-log scale.

    Requires t > 0 and y > 0 throughout and at least 10 samples."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise AnalysisError("t and y must be 1d arrays of equal length")
    if len(y) < 10:
        raise AnalysisError("need at least 10 samples in the fit window")
    if np.any(y <= 0) or np.any(t <= 0):
        raise AnalysisError("nonpositive sample in the fit window")
    slope, intercept, r2 = _line_fit(np.log(t), np.log(y))
    return RateFit(rate=-slope, amplitude=float(np.exp(intercept)),
                   r_squared=r2)


def detect_sign_change(t, y) -> float | None:
    """First time y crosses zero, by linear interpolation; None if it
    keeps its sign.  Exact zeros count as crossings."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise AnalysisError("t and y must be 1d arrays of equal length")
    if len(t) == 0:
        return None
    for i in range(len(y) - 1):
        if y[i] == 0.0:
            return float(t[i])
        if y[i] * y[i + 1] < 0:
            frac = y[i] / (y[i] - y[i + 1])
            return float(t[i] + frac * (t[i + 1] - t[i]))
    if y[-1] == 0.0:
        return float(t[-1])
    return None
