"""Uniform sample grids in frequency (GridFn) and velocity (DensityGrid)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridIncompatibilityError


@dataclass
class GridFn:
    """Complex function of frequency sampled on ``[0, xi_max]`` (0 included).

    With ``hermitian_even`` the function on the whole line is recovered as
    ``g(-xi) = conj(g(xi))``, which holds for the CF of any real density.
    """

    xi_max: float
    n_points: int
    values: np.ndarray
    hermitian_even: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.n_points,):
            raise GridIncompatibilityError(
                f"values has shape {self.values.shape}, expected ({self.n_points},)"
            )

    @property
    def step(self):
        return self.xi_max / (self.n_points - 1)

    @property
    def xi(self):
        return np.linspace(0.0, self.xi_max, self.n_points)

    @classmethod
    def from_function(cls, fn, xi_max, n_points, hermitian_even=True):
        xi = np.linspace(0.0, xi_max, n_points)
        return cls(xi_max, n_points, np.asarray(fn(xi), dtype=complex), hermitian_even)

    def like(self, values, hermitian_even=None):
        he = self.hermitian_even if hermitian_even is None else hermitian_even
        return GridFn(self.xi_max, self.n_points, values, he)

    def same_grid(self, other):
        return self.n_points == other.n_points and math.isclose(
            self.xi_max, other.xi_max, rel_tol=1e-14
        )

    def check_compatible(self, other):
        if not self.same_grid(other):
            raise GridIncompatibilityError(
                f"grid ({self.xi_max}, {self.n_points}) vs ({other.xi_max}, {other.n_points})"
            )

    def index_of(self, xi):
        """Grid index of ``xi``; it must lie on the grid."""
        k = xi / self.step
        i = int(round(k))
        if abs(k - i) > 1e-9 or not 0 <= i < self.n_points:
            raise GridIncompatibilityError(f"xi={xi} is not a grid point", quantity=xi)
        return i


@dataclass
class DensityGrid:
    """Real density sampled on ``n_points`` uniform points over ``[-v_max, v_max]``."""

    v_max: float
    n_points: int
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n_points,):
            raise GridIncompatibilityError(
                f"values has shape {self.values.shape}, expected ({self.n_points},)"
            )

    @property
    def v(self):
        return np.linspace(-self.v_max, self.v_max, self.n_points)

    @property
    def step(self):
        return 2.0 * self.v_max / (self.n_points - 1)

    @classmethod
    def from_function(cls, fn, v_max, n_points):
        v = np.linspace(-v_max, v_max, n_points)
        return cls(v_max, n_points, np.asarray(fn(v), dtype=float))

    def mass(self):
        return float(np.trapezoid(self.values, dx=self.step))

    def same_grid(self, other):
        return self.n_points == other.n_points and math.isclose(
            self.v_max, other.v_max, rel_tol=1e-14
        )


def central_weights(order, half_width):
    """Central finite-difference weights on offsets ``-half_width..half_width``.

    Accuracy is ``2 * half_width + 1 - order`` rounded down to even.
    """
    offsets = np.arange(-half_width, half_width + 1, dtype=float)
    k = np.arange(offsets.size)
    vander = offsets[None, :] ** k[:, None]
    rhs = np.zeros(offsets.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def derivative_at_zero(grid, order, step=0.05, half_width=4):
    """Even-order derivative at 0 of a hermitian-even grid function.

    Uses the real part (the imaginary part is odd and drops out of even
    derivatives) with a central stencil of spacing ``~step`` snapped to the
    grid.
    """
    if order % 2:
        raise ValueError("only even orders are supported")
    stride = max(1, int(round(step / grid.step)))
    h = stride * grid.step
    if half_width * stride >= grid.n_points:
        raise GridIncompatibilityError("grid too short for the derivative stencil")
    re = grid.values.real
    samples = np.array([re[abs(j) * stride] for j in range(-half_width, half_width + 1)])
    return float(central_weights(order, half_width) @ samples) / h**order
