"""Distances between densities, the H^1 Fourier norm, and decay-rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainTruncationError,
    GridIncompatibilityError,
    InsufficientDataError,
    InversionQualityError,
)

NEGATIVE_TOL = 1e-7
BEURLING_SLACK = 1e-6


@dataclass
class RateFit:
    rate: float
    log_intercept: float
    r_squared: float
    points_used: int


def _clamped(values, strict):
    low = float(values.min())
    if strict and low < -NEGATIVE_TOL:
        raise InversionQualityError(
            "density has a negative lobe beyond tolerance", quantity=low, tolerance=NEGATIVE_TOL
        )
    return np.maximum(values, 0.0)


def l1_distance(f1, f2, strict=True):
    """``int |f1 - f2| dv`` by the trapezoid rule on the common grid.

    Negative values above ``-1e-7`` are clamped to zero; deeper lobes raise
    unless ``strict`` is off (Monte Carlo estimates).
    """
    if not f1.same_grid(f2):
        raise GridIncompatibilityError(
            f"density grids ({f1.v_max}, {f1.n_points}) vs ({f2.v_max}, {f2.n_points})"
        )
    a = _clamped(f1.values, strict) if strict else f1.values
    b = _clamped(f2.values, strict) if strict else f2.values
    return float(np.trapezoid(np.abs(a - b), dx=f1.step))


def _derivative(values, h):
    """Fourth-order central differences; one-sided near the ends, even reflection at 0."""
    n = values.size
    ext = np.concatenate([np.conj(values[2:0:-1]), values])
    d = np.empty(n, dtype=complex)
    core = ext[:-4] - 8 * ext[1:-3] + 8 * ext[3:-1] - ext[4:]
    d[:-2] = core / (12 * h)
    # fourth-order one-sided at the last two points
    for i in (n - 2, n - 1):
        j = np.arange(i - 4, i + 1)
        off = j - i
        vand = off[None, :] ** np.arange(5)[:, None]
        rhs = np.zeros(5)
        rhs[1] = 1.0
        wts = np.linalg.solve(vand.astype(float), rhs)
        d[i] = wts @ values[j] / h
    return d


def h1_fourier_norm(cf_diff, decay_tol=1e-6):
    """``sqrt(int |D|^2 + int |D'|^2)`` over the line, from the half-grid by evenness."""
    tail = abs(cf_diff.values[-1])
    if decay_tol is not None and tail > decay_tol:
        raise DomainTruncationError(
            "CF difference has not decayed at xi_max", quantity=tail, tolerance=decay_tol
        )
    h = cf_diff.step
    vals = cf_diff.values
    dv = _derivative(vals, h)
    a = np.trapezoid(np.abs(vals) ** 2, dx=h)
    b = np.trapezoid(np.abs(dv) ** 2, dx=h)
    return float(math.sqrt(2.0 * (a + b)))


def beurling_check(f1, f2, cf_diff, strict=True, decay_tol=1e-6):
    """``sqrt2 ||f1 - f2||_1 <= ||cf_diff||_{H^1}`` with slack 1e-6.

    ``decay_tol=None`` accepts a CF difference that has not decayed at the
    grid edge; the truncated norm then under-estimates the right-hand side.
    Returns (lhs, rhs, holds).
    """
    lhs = math.sqrt(2.0) * l1_distance(f1, f2, strict=strict)
    rhs = h1_fourier_norm(cf_diff, decay_tol=decay_tol)
    return lhs, rhs, bool(lhs <= rhs + BEURLING_SLACK)


def fit_decay_rate(times, distances, floor=0.0):
    """OLS fit of ``ln d = c - rate t`` over points with ``d > floor``."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if t.shape != d.shape:
        raise ValueError("times and distances differ in length")
    floor = np.broadcast_to(np.asarray(floor, dtype=float), d.shape)
    keep = d > floor
    if keep.sum() < 3:
        raise InsufficientDataError(
            f"only {int(keep.sum())} points above the noise floor; need 3",
            quantity=int(keep.sum()), tolerance=3,
        )
    x, y = t[keep], np.log(d[keep])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    syy = np.sum((y - ym) ** 2)
    r2 = 1.0 if syy == 0 else max(0.0, 1.0 - np.sum(resid**2) / syy)
    return RateFit(float(-slope), float(intercept), float(r2), int(keep.sum()))


def gaussian_density(v, sigma2):
    v = np.asarray(v, dtype=float)
    return np.exp(-0.5 * v**2 / sigma2) / math.sqrt(2.0 * math.pi * sigma2)
