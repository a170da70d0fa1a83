"""Wild-sum solver for the Fourier-transformed Kac equation.

The solution's characteristic function is the geometric mixture

    phi(xi, t) = sum_n e^{-t} (1 - e^{-t})^{n-1} q_n(xi),
    q_1 = phi_0,   q_n = 1/(n-1) sum_{k=1}^{n-1} q_k * q_{n-k},

where ``*`` is the angular average ``(1/2pi) int g1(xi cos th) g2(xi sin th) dth``.
Since ``|xi cos th| <= |xi|`` the recursion is closed on ``[0, xi_max]``.

For larger ``t`` the series is evaluated over sub-intervals and composed
(the equation is autonomous, so the time-``t`` map is the ``m``-fold
composition of the time-``t/m`` map). The recorded ``tail_bound`` is an
honest sup-norm bound on the accumulated truncation error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from .errors import (
    DomainTruncationError,
    GridIncompatibilityError,
    InversionQualityError,
    ResourceLimitError,
    UnsupportedOperationError,
)
from .grids import DensityGrid, GridFn, derivative_at_zero

CSV_HEADER = "# kac-relax v1"
TAPS = 6  # interpolation stencil width
PAD = TAPS // 2 - 1  # reflected points needed left of 0


@dataclass
class SolverConfig:
    xi_max: float | None = None  # default 40 / sigma
    n_points: int = 4096
    quad_nodes: int = 64
    tol: float = 1e-10
    max_terms: int = 5000
    max_step: float = 0.5  # Wild sums are composed over sub-intervals of this length

    def __post_init__(self):
        if self.n_points < 256:
            raise ValueError("n_points must be at least 256")
        if self.quad_nodes < 8:
            raise ValueError("quad_nodes must be at least 8")
        for name in ("tol", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.xi_max is not None and not self.xi_max > 0:
            raise ValueError("xi_max must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be positive")

    def resolve_xi_max(self, datum):
        if self.xi_max is not None:
            return float(self.xi_max)
        sigma = datum.sigma if datum.sigma else 1.0
        return 40.0 / sigma


@dataclass
class CfSolution:
    t: float
    cf: GridFn
    truncation_N: int
    tail_bound: float
    steps: int = 1
    meta: dict = field(default_factory=dict)


class StarKernel:
    """Angular quadrature and interpolation stencils for one grid."""

    def __init__(self, xi_max, n_points, quad_nodes):
        self.xi_max = float(xi_max)
        self.n_points = int(n_points)
        self.quad_nodes = int(quad_nodes)
        x, w = np.polynomial.legendre.leggauss(self.quad_nodes)
        self.theta = 0.25 * np.pi * (x + 1.0)
        # (2/pi) * (pi/4) from the change of variables folds into the weights
        self.weights = 0.5 * w
        xi = np.linspace(0.0, self.xi_max, self.n_points)
        base, lw = _stencil(xi[:, None] * np.cos(self.theta)[None, :], self.xi_max / (self.n_points - 1), self.n_points)
        # fold the reflected pad into column indices: padded[p] = values[|p - PAD|]
        cols = np.abs(base[None, :, :] + np.arange(TAPS)[:, None, None] - PAD)
        rows = np.broadcast_to(np.arange(base.size).reshape(base.shape), cols.shape)
        self._matrix = sparse.csr_matrix(
            (lw.ravel(), (rows.ravel(), cols.ravel())), shape=(base.size, self.n_points)
        )

    def sample(self, values):
        """Values of an even real grid function at ``xi_k cos(theta_j)``."""
        return (self._matrix @ values).reshape(self.n_points, self.quad_nodes)

    def star(self, a_cos, b_cos):
        """Star product of two sampled functions (outputs of :meth:`sample`).

        ``b(xi sin th_j) = b(xi cos th_{Q-1-j})`` because the nodes are
        symmetric about pi/4.
        """
        return (a_cos * b_cos[:, ::-1]) @ self.weights


def _stencil(x, h, n):
    """6-point Lagrange stencil on a grid padded by ``PAD`` reflected points on the left.

    Returns the padded index of the first node and the weights, shape (TAPS, *x.shape).
    """
    s = x / h
    i = np.floor(s).astype(np.int64)
    i = np.clip(i, 0, n - TAPS + PAD)
    u = s - i
    offs = np.arange(-PAD, TAPS - PAD)
    lw = []
    for j in offs:
        w = np.ones_like(u)
        for k in offs:
            if k != j:
                w = w * (u - k) / (j - k)
        lw.append(w)
    return i, np.stack(lw)


@lru_cache(maxsize=8)
def star_kernel(xi_max, n_points, quad_nodes):
    return StarKernel(xi_max, n_points, quad_nodes)


def _interp_complex(g, x):
    """Interpolation of a hermitian-even grid function at real ``x`` (any sign)."""
    h = g.step
    ax = np.abs(x)
    base, lw = _stencil(ax, h, g.n_points)
    padded = np.concatenate([np.conj(g.values[PAD:0:-1]), g.values])
    val = lw[0] * padded[base]
    for j in range(1, TAPS):
        val = val + lw[j] * padded[base + j]
    return np.where(x < 0, np.conj(val), val)


def wild_convolution(g1, g2, quad_nodes=64, reduced=True):
    """``(g1 * g2)(xi_k)`` on the common grid.

    ``reduced=True`` integrates over ``[0, pi/2]`` only; for hermitian-even
    inputs the four quadrants combine to ``(2/pi) int Re g1 Re g2``.
    ``reduced=False`` integrates the full circle with ``quad_nodes`` nodes
    per quadrant and is kept as an independent check.
    """
    g1.check_compatible(g2)
    if quad_nodes < 8:
        raise ValueError("quad_nodes must be at least 8")
    if not (g1.hermitian_even and g2.hermitian_even):
        raise GridIncompatibilityError(
            "grid functions on [0, xi_max] need hermitian-even extension to be convolved"
        )
    if reduced:
        k = star_kernel(g1.xi_max, g1.n_points, quad_nodes)
        out = k.star(k.sample(g1.values.real), k.sample(g2.values.real)).astype(complex)
    else:
        x, w = np.polynomial.legendre.leggauss(quad_nodes)
        th = np.concatenate([0.25 * np.pi * (x + 1.0) + q * 0.5 * np.pi for q in range(4)])
        wt = np.tile(0.25 * np.pi * w, 4) / (2.0 * np.pi)
        xi = g1.xi[:, None]
        a = _interp_complex(g1, xi * np.cos(th))
        b = _interp_complex(g2, xi * np.sin(th))
        out = (a * b) @ wt
    out[0] = g1.values[0] * g2.values[0]
    return g1.like(out, hermitian_even=True)


def truncation_depth(t, tol):
    """Smallest ``N`` with ``(1 - e^{-t})^N <= tol``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or tol >= 1:
        return 1
    if not tol > 0:
        raise ValueError("tol must be positive")
    ratio = -math.expm1(-t)
    if ratio == 1.0:
        return 1
    n = max(1, math.ceil(math.log(tol) / math.log1p(-math.exp(-t))))
    # guard the ceiling against rounding in the logs
    while n > 1 and ratio ** (n - 1) <= tol:
        n -= 1
    while ratio**n > tol:
        n += 1
    return n


def wild_sum(q1, t, n_terms, quad_nodes=64, return_terms=False):
    """Truncated Wild sum ``sum_{n<=N} e^{-t}(1-e^{-t})^{n-1} q_n`` on ``q1``'s grid."""
    k = star_kernel(q1.xi_max, q1.n_points, quad_nodes)
    n_pts = q1.n_points
    p = math.exp(-t)
    r = -math.expm1(-t)
    samples = np.empty((n_pts, n_terms + 1, k.quad_nodes))
    weighted = np.empty_like(samples)
    terms = np.empty((n_terms + 1, n_pts))
    terms[1] = q1.values.real
    samples[:, 1, :] = k.sample(terms[1])
    weighted[:, 1, :] = samples[:, 1, ::-1] * k.weights
    for n in range(2, n_terms + 1):
        half = (n - 1) // 2
        acc = np.zeros(n_pts)
        if half:
            acc = 2.0 * np.einsum(
                "ikj,ikj->i", samples[:, 1:half + 1, :], weighted[:, n - 1:n - half - 1:-1, :]
            )
        if n % 2 == 0:
            m = n // 2
            acc += np.einsum("ij,ij->i", samples[:, m, :], weighted[:, m, :])
        acc /= n - 1
        terms[n] = acc
        samples[:, n, :] = k.sample(acc)
        weighted[:, n, :] = samples[:, n, ::-1] * k.weights
    coeff = p * r ** np.arange(n_terms)
    out = p * q1.values + coeff[1:] @ terms[2:]
    result = q1.like(out, hermitian_even=True)
    if return_terms:
        return result, terms[1:]
    return result


def solve_cf(datum, t, config=None, horizon=None):
    """Characteristic function of the solution at time ``t`` on a frequency grid.

    ``horizon`` (default ``t``) is the final time a chain of :func:`advance`
    calls will reach; the per-step tolerance is sized so that the bound
    accumulated up to ``horizon`` stays below ``config.tol``.
    """
    config = config or SolverConfig()
    if t < 0:
        raise ValueError("t must be non-negative")
    xi_max = config.resolve_xi_max(datum)
    grid = GridFn.from_function(datum.cf, xi_max, config.n_points)
    return evolve_cf(grid, t, config, horizon)


def evolve_cf(grid, t, config=None, horizon=None):
    """Evolve a sampled initial CF for time ``t`` (see :func:`solve_cf`)."""
    config = config or SolverConfig()
    if t == 0:
        return CfSolution(0.0, grid, 1, 0.0, 0)
    steps = max(1, math.ceil(t / config.max_step - 1e-12))
    dt = t / steps
    horizon = t if horizon is None else max(t, horizon)
    if steps == 1 and horizon == t:
        n = truncation_depth(t, config.tol)
    else:
        # e_i <= e^{dt} e_{i-1} + tau, since the Wild map is e^{dt}-Lipschitz in sup norm
        growth = math.expm1(horizon) / math.expm1(dt)
        n = truncation_depth(dt, config.tol / growth)
    if n > config.max_terms:
        raise ResourceLimitError(
            f"Wild sum needs N={n} terms (cap {config.max_terms}); "
            "raise tol, lower t, or reduce max_step"
        )
    tau = (-math.expm1(-dt)) ** n
    cf = grid
    for _ in range(steps):
        cf = wild_sum(cf, dt, n, config.quad_nodes)
    if steps == 1:
        bound = tau
    else:
        bound = tau * math.expm1(t) / math.expm1(dt)
    return CfSolution(float(t), cf, n, bound, steps)


def advance(solution, dt, config=None, horizon=None):
    """Continue a solution by ``dt``; earlier error grows at most by ``e^{dt}``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    # budgets tol * expm1(dt) / expm1(horizon) per step; these telescope to tol
    step = evolve_cf(solution.cf, dt, config, horizon)
    bound = solution.tail_bound * math.exp(dt) + step.tail_bound
    n = max(solution.truncation_N, step.truncation_N)
    return CfSolution(solution.t + dt, step.cf, n, bound, solution.steps + step.steps)


def solve_times(datum, times, config=None):
    """Solutions at increasing ``times``, each continued from the previous one."""
    config = config or SolverConfig()
    times = list(times)
    end = times[-1] if times else 0.0
    sol = None
    for t in times:
        if sol is None:
            sol = solve_cf(datum, t, config, horizon=end)
        else:
            sol = advance(sol, t - sol.t, config, horizon=end)
        sol.t = float(t)
        yield sol


def solution_moment4(datum, t):
    """Fourth moment of the solution: ``3 m2^2 + (m4 - 3 m2^2) e^{-t/4}``."""
    if datum.m4 is None or not math.isfinite(datum.m4):
        raise UnsupportedOperationError("fourth moment of the datum is infinite")
    if not datum.symmetric:
        raise UnsupportedOperationError("closed form needs a symmetric datum")
    g = 3.0 * datum.m2**2
    return g + (datum.m4 - g) * math.exp(-t / 4.0)


def cf_moment(cf, order, step=0.3, half_width=6):
    """Moment of even ``order`` read off the CF by central differences at 0.

    A wide stencil keeps grid-scale interpolation ripple out of the estimate.
    """
    sign = (-1) ** (order // 2)
    return sign * derivative_at_zero(cf, order, step=step, half_width=half_width)


def spectral_taper(xi, xi_max, fraction):
    """Raised-cosine roll-off over the top ``fraction`` of ``[0, xi_max]``."""
    if fraction <= 0:
        return np.ones_like(xi)
    s = np.clip((xi - (1.0 - fraction) * xi_max) / (fraction * xi_max), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def invert_to_density(cf, v_max, n_v, decay_tol=1e-8, mass_tol=1e-6, taper=0.0):
    """Density from a hermitian-even CF by the trapezoid cosine/sine integral.

    ``f(v) = (1/pi) int_0^xi_max Re[cf(xi) e^{-i xi v}] dxi``. A nonzero
    ``taper`` damps the cut-off ripple of slowly decaying CFs.
    """
    if not cf.hermitian_even:
        raise GridIncompatibilityError("inversion needs a hermitian-even grid function")
    tail = abs(cf.values[-1])
    if decay_tol is not None and tail > decay_tol:
        raise DomainTruncationError(
            "characteristic function has not decayed at xi_max", quantity=tail, tolerance=decay_tol
        )
    xi = cf.xi
    w = np.full(cf.n_points, cf.step)
    w[0] = w[-1] = 0.5 * cf.step
    w *= spectral_taper(xi, cf.xi_max, taper)
    re = cf.values.real * w
    im = cf.values.imag * w
    v = np.linspace(-v_max, v_max, n_v)
    out = np.empty(n_v)
    for start in range(0, n_v, 512):
        phase = np.outer(v[start:start + 512], xi)
        out[start:start + 512] = np.cos(phase) @ re + np.sin(phase) @ im
    out /= np.pi
    dens = DensityGrid(float(v_max), int(n_v), out, {"cf_tail": float(tail)})
    if mass_tol is not None:
        mass = dens.mass()
        if abs(mass - 1.0) > mass_tol:
            raise InversionQualityError(
                "inverted density does not integrate to 1", quantity=mass, tolerance=mass_tol
            )
    return dens


def solution_density(datum, solution, v_max, n_v, decay_tol=1e-3, mass_tol=1e-5, taper=0.25):
    """Density of the solution with the ``e^{-t} f_0`` component handled exactly.

    The first Wild term carries the (possibly discontinuous) initial density
    unchanged. It is added back as exact cell averages, so the grid mass is
    right even across jumps; only the remainder is inverted numerically.
    """
    if not datum.has_density:
        raise UnsupportedOperationError("datum has no density")
    p = math.exp(-solution.t)
    cf = solution.cf
    regular = cf.like(cf.values - p * datum._cf_array(cf.xi))
    dens = invert_to_density(regular, v_max, n_v, decay_tol=decay_tol, mass_tol=None, taper=taper)
    dens.values += p * datum.cell_average(dens.v, dens.step)
    dens.meta["regular_tail"] = dens.meta.pop("cf_tail")
    dens.meta["t"] = solution.t
    if mass_tol is not None:
        mass = dens.mass()
        if abs(mass - 1.0) > mass_tol:
            raise InversionQualityError(
                "solution density does not integrate to 1", quantity=mass, tolerance=mass_tol
            )
    return dens


def write_solution_csv(path, solution):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.write(
            f"# t={solution.t!r} truncation_N={solution.truncation_N} "
            f"tail_bound={solution.tail_bound:.17g} steps={solution.steps}\n"
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi", "re", "im"])
        for x, val in zip(solution.cf.xi, solution.cf.values):
            w.writerow([f"{x:.17g}", f"{val.real:.17g}", f"{val.imag:.17g}"])
