"""Least-squares straight lines for exponent extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit

MIN_POINTS = 4


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    rms_residual: float
    n_points: int

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def linear_fit(x, y, min_points: int = MIN_POINTS) -> LinearFit:
    """Ordinary least squares ``y = intercept + slope * x``.

    Raises DegenerateFit with fewer than ``min_points`` points or when all
    abscissae coincide.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if len(x) < min_points:
        raise DegenerateFit(f"need at least {min_points} usable points, got {len(x)}")
    if np.ptp(x) <= 1e-14 * max(1.0, np.max(np.abs(x))):
        raise DegenerateFit("all abscissae coincide; the slope is undefined")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (intercept + slope * x)
    return LinearFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), len(x))


def log_linear_fit(x, values, min_points: int = MIN_POINTS) -> LinearFit:
    """Fit ``ln(values)`` against ``x``; values must be positive."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise DegenerateFit("log-linear fit needs strictly positive values")
    return linear_fit(x, np.log(values), min_points)
