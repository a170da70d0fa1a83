"""Initial velocity laws for the Kac equation.

Every datum exposes its characteristic function, (when it has one) its
density and a sampler, together with exact moment metadata. Built-in
families::

    gaussian        sigma
    uniform         halfwidth
    gaussian_mixture  weights, sigmas[, means]
    power_law       beta in (3, 4)   density beta / (2 |x|^(1+beta)) on |x| >= 1
    cf_series       coeffs a_n       CF sum a_n (1 + xi^2)^(-1/n), no density
    custom_grid     grid_path or (v, f) arrays, piecewise-linear density

Use :func:`make_datum` to build one from a flat descriptor mapping.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import ParameterError, UnsupportedOperationError

SCAN_LIMIT = 1.0e3
POWER_LAW_SERIES_MAX = 1.0
POWER_LAW_QUAD_MIN = 0.5


class MomentSet(NamedTuple):
    m2: float
    m3_abs: float
    m4: float

    @property
    def kurtosis_excess(self):
        if not math.isfinite(self.m4):
            return math.inf
        return self.m4 - 3.0 * self.m2**2


class TailProfile(NamedTuple):
    """Decay exponent ``p`` and ``L_p = sup |xi|^p |cf(xi)|``.

    ``lower_bound`` is set when ``L_p`` comes from a finite grid scan; the
    true supremum may then be larger. ``p`` and ``L_p`` are ``None`` when
    the family has no power-law decay.
    """

    p: float | None
    L_p: float | None
    lower_bound: bool = False


@dataclass(frozen=True, eq=False)
class InitialDatum:
    family: str
    m2: float | None
    m3_abs: float | None
    m4: float | None
    symmetric: bool
    mean: float = 0.0
    tail_p: float | None = None
    params: dict = field(default_factory=dict, repr=False)

    has_density = True

    @property
    def sigma(self):
        return None if self.m2 is None else math.sqrt(self.m2)

    def cf(self, xi):
        raise NotImplementedError

    def density(self, v):
        raise UnsupportedOperationError(f"{self.family} datum has no density")

    def sample(self, rng, size):
        raise UnsupportedOperationError(f"{self.family} datum has no sampler")

    def cell_average(self, v, h):
        """Mean of the density over ``[v - h/2, v + h/2]``; exact where a CDF is known."""
        return self.density(v)

    def moments(self):
        return MomentSet(self.m2, self.m3_abs, self.m4)

    def tail_profile(self):
        raise NotImplementedError

    # cf evaluated on an array, always complex
    def _cf_array(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.cf(xi), dtype=complex)


class GaussianDatum(InitialDatum):
    def cf(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(-0.5 * self.m2 * xi**2) + 0j

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-0.5 * v**2 / self.m2) / math.sqrt(2.0 * math.pi * self.m2)

    def sample(self, rng, size):
        return rng.normal(0.0, self.sigma, size)

    def tail_profile(self):
        p = 4.0 if self.tail_p is None else self.tail_p
        # max_{x>=0} x^k e^{-a x^2} = (k / (2 e a))^{k/2} with a = sigma^2 / 2
        L = (p / (math.e * self.m2)) ** (p / 2.0)
        return TailProfile(p, L, False)


class UniformDatum(InitialDatum):
    @property
    def halfwidth(self):
        return self.params["halfwidth"]

    def cf(self, xi):
        a = self.halfwidth
        return np.sinc(a * np.asarray(xi, dtype=float) / math.pi) + 0j

    def density(self, v):
        a = self.halfwidth
        v = np.asarray(v, dtype=float)
        return np.where(np.abs(v) <= a, 0.5 / a, 0.0)

    def cell_average(self, v, h):
        a = self.halfwidth
        v = np.asarray(v, dtype=float)
        overlap = np.minimum(v + 0.5 * h, a) - np.maximum(v - 0.5 * h, -a)
        return np.maximum(overlap, 0.0) / (2.0 * a * h)

    def sample(self, rng, size):
        a = self.halfwidth
        return rng.uniform(-a, a, size)

    def tail_profile(self):
        return TailProfile(1.0, 1.0 / self.halfwidth, False)


class MixtureDatum(InitialDatum):
    def _parts(self):
        return self.params["weights"], self.params["sigmas"], self.params["means"]

    def cf(self, xi):
        w, s, mu = self._parts()
        xi = np.asarray(xi, dtype=float)
        x = xi[..., None]
        return np.sum(w * np.exp(1j * mu * x - 0.5 * (s * x) ** 2), axis=-1)

    def density(self, v):
        w, s, mu = self._parts()
        v = np.asarray(v, dtype=float)[..., None]
        g = np.exp(-0.5 * ((v - mu) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        return np.sum(w * g, axis=-1)

    def sample(self, rng, size):
        w, s, mu = self._parts()
        comp = rng.choice(w.size, size=size, p=w)
        return rng.normal(mu[comp], s[comp])

    def tail_profile(self):
        p = 4.0 if self.tail_p is None else self.tail_p
        return TailProfile(p, _scan_sup(self, p, refine=True), True)


class PowerLawDatum(InitialDatum):
    """Symmetric Pareto-type law with exponent ``beta``; infinite fourth moment."""

    @property
    def beta(self):
        return self.params["beta"]

    def cf_series_regime(self, xi):
        b = self.beta
        x = np.abs(np.asarray(xi, dtype=float))
        out = (
            1.0
            - b / (2.0 * (b - 2.0)) * x**2
            - math.gamma(1.0 - b) * math.cos(b * math.pi / 2.0) * x**b
        )
        tail = np.zeros_like(x)
        x2 = x**2
        power = x2 * x2
        fact = 24.0
        m = 2
        while True:
            term = power / (fact * (2 * m - b))
            tail += (-1) ** m * term
            if np.all(np.abs(term) < 1e-16) or m > 200:
                break
            m += 1
            power = power * x2
            fact *= (2 * m - 1) * (2 * m)
        return out - b * tail

    def cf_quadrature_regime(self, xi):
        b = self.beta
        x = np.abs(np.atleast_1d(np.asarray(xi, dtype=float)))
        out = np.empty_like(x)
        with warnings.catch_warnings():
            # QAWF flags slowly converging cycles near |xi| ~ 1; accuracy is
            # checked against the series on the overlap band instead.
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for i, w in enumerate(x.flat):
                val, _ = integrate.quad(
                    lambda u: u ** (-1.0 - b), 1.0, np.inf, weight="cos", wvar=w,
                    limlst=200, epsabs=1e-14,
                )
                out.flat[i] = b * val
        return out.reshape(np.shape(xi))

    def cf(self, xi):
        xi = np.asarray(xi, dtype=float)
        x = np.abs(xi)
        out = np.empty(x.shape)
        small = x <= POWER_LAW_SERIES_MAX
        out[small] = self.cf_series_regime(x[small])
        if np.any(~small):
            out[~small] = self.cf_quadrature_regime(x[~small])
        return out + 0j

    def density(self, v):
        b = self.beta
        v = np.abs(np.asarray(v, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(v >= 1.0, 0.5 * b * v ** (-1.0 - b), 0.0)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        tail = 0.5 * np.maximum(np.abs(v), 1.0) ** (-self.beta)
        return np.where(v < 0, tail, 1.0 - tail)

    def cell_average(self, v, h):
        v = np.asarray(v, dtype=float)
        return (self.cdf(v + 0.5 * h) - self.cdf(v - 0.5 * h)) / h

    def sample(self, rng, size):
        u = 1.0 - rng.random(size)
        mag = u ** (-1.0 / self.beta)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * mag

    def tail_profile(self):
        # Integration by parts: |xi cf(xi)| <= b |sin xi| + b (1 + b) int_1^inf x^(-2-b) = 2b.
        return TailProfile(1.0, 2.0 * self.beta, False)


class CfSeriesDatum(InitialDatum):
    has_density = False

    def cf(self, xi):
        a = self.params["coeffs"]
        n = np.arange(1, a.size + 1, dtype=float)
        base = 1.0 / (1.0 + np.asarray(xi, dtype=float) ** 2)
        return np.sum(a * base[..., None] ** (1.0 / n), axis=-1) + 0j

    def moments(self):
        raise UnsupportedOperationError(
            "cf_series datum carries no density; moments are not assigned"
        )

    def tail_profile(self):
        return TailProfile(None, None, False)


class GridDatum(InitialDatum):
    """Piecewise-linear density through user-supplied samples."""

    def _grid(self):
        return self.params["v"], self.params["f"]

    def cf(self, xi):
        v, f = self._grid()
        xi = np.asarray(xi, dtype=float)
        h = np.diff(v)
        mid = 0.5 * (v[1:] + v[:-1])
        fbar = 0.5 * (f[1:] + f[:-1])
        df = np.diff(f)
        flat = xi.reshape(-1)
        out = np.empty(flat.size, dtype=complex)
        for start in range(0, flat.size, 256):
            x = flat[start:start + 256, None]
            z = 0.5 * x * h
            sinc = np.sinc(z / math.pi)
            z2 = z * z
            with np.errstate(invalid="ignore", divide="ignore"):
                odd = np.where(
                    np.abs(z) < 1e-3,
                    z / 3.0 - z * z2 / 30.0,
                    (np.sin(z) - z * np.cos(z)) / np.where(z2 == 0, 1.0, z2),
                )
            seg = h * np.exp(1j * x * mid) * (fbar * sinc + 0.5j * df * odd)
            out[start:start + 256] = seg.sum(axis=1)
        return out.reshape(xi.shape)

    def density(self, v):
        gv, gf = self._grid()
        return np.interp(np.asarray(v, dtype=float), gv, gf, left=0.0, right=0.0)

    def sample(self, rng, size):
        v, f = self._grid()
        h = np.diff(v)
        slope = np.diff(f) / h
        seg_mass = 0.5 * h * (f[1:] + f[:-1])
        cdf = np.concatenate([[0.0], np.cumsum(seg_mass)])
        r = rng.random(size) * cdf[-1]
        j = np.clip(np.searchsorted(cdf, r, side="right") - 1, 0, h.size - 1)
        rem = r - cdf[j]
        f0 = f[j]
        s = slope[j]
        disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * s * rem, 0.0))
        denom = f0 + disc
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(denom > 0, 2.0 * rem / denom, 0.0)
        return v[j] + np.clip(u, 0.0, h[j])

    def tail_profile(self):
        p = 1.0 if self.tail_p is None else self.tail_p
        return TailProfile(p, _scan_sup(self, p, refine=True), True)


class SymmetrizedDatum(InitialDatum):
    """Even part ``(f(x) + f(-x)) / 2`` of another datum."""

    @property
    def base(self):
        return self.params["base"]

    @property
    def has_density(self):
        return self.base.has_density

    def cf(self, xi):
        return np.real(self.base.cf(xi)) + 0j

    def density(self, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * (self.base.density(v) + self.base.density(-v))

    def cell_average(self, v, h):
        v = np.asarray(v, dtype=float)
        return 0.5 * (self.base.cell_average(v, h) + self.base.cell_average(-v, h))

    def sample(self, rng, size):
        x = self.base.sample(rng, size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * x

    def tail_profile(self):
        # |Re cf| <= |cf|, so the base profile still majorizes.
        return self.base.tail_profile()


def _scan_sup(datum, p, refine):
    xi = np.linspace(0.0, SCAN_LIMIT, 20_001)[1:]
    vals = xi**p * np.abs(datum._cf_array(xi))
    k = int(np.argmax(vals))
    best = float(vals[k])
    if refine:
        lo, hi = xi[max(k - 1, 0)], xi[min(k + 1, xi.size - 1)]
        res = optimize.minimize_scalar(
            lambda x: -(x**p) * abs(complex(datum._cf_array(np.array([x]))[0])),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        best = max(best, float(-res.fun))
    return best


def _as_array(name, value):
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ParameterError(name, "must be a list of numbers") from None
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ParameterError(name, "must be a non-empty list of finite numbers")
    return arr


def _positive(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(name, "must be a number") from None
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(name, "must be positive and finite")
    return value


def _require(spec, key, family):
    if key not in spec:
        raise ParameterError(key, f"required for family '{family}'")
    return spec[key]


def read_grid_csv(path):
    """Read ``v,f`` pairs; lines starting with ``#`` and a text header are skipped."""
    v, f = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                v.append(float(row[0]))
                f.append(float(row[1]))
            except (ValueError, IndexError):
                if v:
                    raise ParameterError("grid_path", f"malformed row {row!r}") from None
    return np.array(v), np.array(f)


def _grid_moments(v, f):
    trap = integrate.trapezoid
    return (
        trap(v * f, v),
        trap(v**2 * f, v),
        trap(np.abs(v) ** 3 * f, v),
        trap(v**4 * f, v),
    )


def make_datum(spec):
    """Build an :class:`InitialDatum` from a descriptor mapping.

    >>> make_datum({"family": "gaussian", "sigma": 1.0}).m4
    3.0
    """
    spec = dict(spec)
    family = spec.get("family")
    tail_p = spec.get("tail_p")
    if tail_p is not None:
        tail_p = _positive("tail_p", tail_p)

    if family == "gaussian":
        s = _positive("sigma", _require(spec, "sigma", family))
        return GaussianDatum(
            family, s**2, 2.0 * math.sqrt(2.0 / math.pi) * s**3, 3.0 * s**4,
            True, tail_p=tail_p, params={"sigma": s},
        )

    if family == "uniform":
        a = _positive("halfwidth", _require(spec, "halfwidth", family))
        return UniformDatum(
            family, a**2 / 3.0, a**3 / 4.0, a**4 / 5.0, True,
            params={"halfwidth": a},
        )

    if family == "gaussian_mixture":
        w = _as_array("weights", _require(spec, "weights", family))
        s = _as_array("sigmas", _require(spec, "sigmas", family))
        mu = _as_array("means", spec["means"]) if "means" in spec else np.zeros_like(s)
        if w.size != s.size or mu.size != s.size:
            raise ParameterError("weights", "weights, sigmas and means must have equal length")
        if np.any(w <= 0):
            raise ParameterError("weights", "must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights", f"must sum to 1 (got {w.sum()!r})")
        if np.any(s <= 0):
            raise ParameterError("sigmas", "must be positive")
        m2 = float(np.sum(w * (s**2 + mu**2)))
        m4 = float(np.sum(w * (mu**4 + 6 * mu**2 * s**2 + 3 * s**4)))
        symmetric = bool(np.all(mu == 0))
        params = {"weights": w, "sigmas": s, "means": mu}
        datum = MixtureDatum(
            family, m2, None, m4, symmetric, mean=float(np.sum(w * mu)), tail_p=tail_p,
            params=params,
        )
        if symmetric:
            m3 = float(np.sum(w * 2.0 * math.sqrt(2.0 / math.pi) * s**3))
        else:
            m3 = _numeric_abs_moment(datum.density, 3, centers=mu, scale=s.max())
        return dataclasses.replace(datum, m3_abs=m3)

    if family == "power_law":
        b = float(_require(spec, "beta", family))
        if not (3.0 < b < 4.0):
            raise ParameterError("beta", "beta must lie in (3,4)")
        return PowerLawDatum(
            family, b / (b - 2.0), b / (b - 3.0), math.inf, True,
            params={"beta": b},
        )

    if family == "cf_series":
        a = _as_array("coeffs", _require(spec, "coeffs", family))
        if np.any(a <= 0):
            raise ParameterError("coeffs", "must be positive")
        if abs(a.sum() - 1.0) > 1e-12:
            raise ParameterError("coeffs", f"must sum to 1 (got {a.sum()!r})")
        return CfSeriesDatum(family, None, None, None, True, params={"coeffs": a})

    if family == "custom_grid":
        if "grid_path" in spec:
            v, f = read_grid_csv(spec["grid_path"])
        else:
            v = _as_array("v", _require(spec, "v", family))
            f = _as_array("f", _require(spec, "f", family))
        if v.size < 3 or v.size != f.size:
            raise ParameterError("grid_path", "need at least 3 (v, f) pairs of equal length")
        if np.any(np.diff(v) <= 0):
            raise ParameterError("grid_path", "v must be strictly increasing")
        if np.any(f < 0):
            raise ParameterError("grid_path", "density samples must be non-negative")
        mass = integrate.trapezoid(f, v)
        if abs(mass - 1.0) > 1e-3:
            raise ParameterError("grid_path", f"density integrates to {mass!r}, not 1")
        f = f / mass
        m1, m2, m3, m4 = _grid_moments(v, f)
        for key, value in (("m2", m2), ("m4", m4)):
            if key in spec:
                declared = float(spec[key])
                if abs(declared - value) > 1e-6 * abs(value):
                    raise ParameterError(
                        key, f"declared {declared!r} but grid integrates to {value!r}"
                    )
        symmetric = bool(np.allclose(v, -v[::-1], atol=1e-12) and np.allclose(f, f[::-1], atol=1e-12))
        return GridDatum(
            family, m2, m3, m4, symmetric, mean=m1, tail_p=tail_p,
            params={"v": v, "f": f},
        )

    raise ParameterError("family", f"unknown family {family!r}")


def _numeric_abs_moment(density, k, centers, scale):
    pts = sorted(set([0.0, *np.asarray(centers, dtype=float).tolist()]))
    lo = min(pts) - 40 * scale
    hi = max(pts) + 40 * scale
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, _ = integrate.quad(lambda v: abs(v) ** k * density(v), a, b,
                                    epsrel=1e-12, epsabs=0.0, limit=200)
            total += val
    return total


def symmetrize(datum):
    """Return the even part of ``datum``; symmetric input is returned as is."""
    if datum.symmetric:
        return datum
    return SymmetrizedDatum(
        datum.family, datum.m2, datum.m3_abs, datum.m4, True, mean=0.0,
        tail_p=datum.tail_p, params={"base": datum},
    )


def eval_cf(datum, xi):
    """Characteristic function of ``datum`` at a scalar ``xi``."""
    return complex(datum._cf_array(np.array([float(xi)]))[0])


def moments(datum):
    return datum.moments()


def numeric_moments(datum):
    """Moments by quadrature of the density (trapezoid for grid data)."""
    if not datum.has_density:
        raise UnsupportedOperationError("numeric moments need a density")
    if isinstance(datum, GridDatum):
        _, m2, m3, m4 = _grid_moments(*datum._grid())
        return MomentSet(m2, m3, m4)
    if isinstance(datum, UniformDatum):
        a = datum.halfwidth
        breaks = [-a, 0.0, a]
    elif isinstance(datum, PowerLawDatum):
        breaks = None
    else:
        s = datum.sigma
        breaks = [-60 * s, 0.0, 60 * s]

    def integral(fn):
        if breaks is None:
            val, _ = integrate.quad(lambda v: 2.0 * fn(v) * datum.density(v), 1.0, np.inf,
                                    epsrel=1e-12, limit=400)
            return val
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            val, _ = integrate.quad(lambda v: fn(v) * datum.density(v), a, b,
                                    epsrel=1e-12, epsabs=0.0, limit=400)
            total += val
        return total

    m2 = integral(lambda v: v * v)
    m3 = integral(lambda v: abs(v) ** 3)
    m4 = math.inf if isinstance(datum, PowerLawDatum) else integral(lambda v: v**4)
    return MomentSet(m2, m3, m4)


def tail_profile(datum):
    return datum.tail_profile()
