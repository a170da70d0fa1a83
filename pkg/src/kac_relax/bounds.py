"""Explicit constants and inequalities behind the e^{-t/4} rate.

Everything here is a pure function of its inputs. Large factorials and
powers in the theorem constant are accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import InternalInconsistencyError, ParameterError

BE_L2_CF = 0.62
BE_L2_DERIV = 3.8
C1 = 0.33
C2 = 0.76
SQRT_GAMMA_7_2 = math.sqrt(math.gamma(3.5))

AUDIT_XI_MAX = 1e3
AUDIT_POINTS = 10_000


def alpha_m_closed(m):
    """``Gamma((m+1)/2) / (sqrt(pi) Gamma(m/2 + 1))``."""
    if not m > 0:
        raise ParameterError("m", "must be positive")
    return math.exp(math.lgamma((m + 1) / 2) - math.lgamma(m / 2 + 1)) / math.sqrt(math.pi)


def alpha_m(m, check=True):
    """``(1/2pi) int_0^{2pi} |sin th|^m dth``, by adaptive quadrature.

    By symmetry this is ``(2/pi) int_0^{pi/2} sin^m``.
    """
    if not m > 0:
        raise ParameterError("m", "must be positive")
    val, _ = integrate.quad(lambda th: math.sin(th) ** m, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-13)
    val *= 2.0 / math.pi
    if check:
        ref = alpha_m_closed(m)
        if abs(val - ref) > 1e-10 * ref:
            raise InternalInconsistencyError(
                f"alpha_m quadrature {val!r} vs closed form {ref!r}", quantity=val - ref, tolerance=1e-10
            )
    return val


def lower_bound_rate(beta):
    """``1 - 2 alpha_beta``, the decay rate of the slow mode for tail index beta."""
    if not 3.0 < beta < 4.0:
        raise ParameterError("beta", "beta must lie in (3,4)")
    return 1.0 - 2.0 * alpha_m(beta)


# ---------------------------------------------------------------- envelope


@dataclass
class GammaEnvelope:
    lam: float
    alpha: float
    k: int
    L: float
    M: float
    interval: tuple = (0.0, 0.0)
    candidates: tuple = ()  # the three lambda^2 candidates
    audit_max_ratio: float = 0.0  # max |phi0| / envelope on the audit grid
    tail_covered: bool = False
    refined: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def lambda_(self):
        return self.lam

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        l2 = self.lam**2
        return (l2 / (l2 + xi**2)) ** self.alpha


def _scan_points(xi_end, density):
    """Dense uniform scan on [0, 20] and geometric-uniform blocks beyond."""
    n_near = int(20 * density * 50)
    near = np.linspace(0.0, 20.0, n_near + 1)
    n_far = int((xi_end - 20.0) * density)
    far = np.linspace(20.0, xi_end, max(n_far, 2))
    return np.concatenate([near, far[1:]])


def _abs_cf(datum, xi):
    return np.abs(np.asarray(datum.cf(xi), dtype=complex))


def gamma_envelope(datum, audit_points=AUDIT_POINTS, audit_xi_max=AUDIT_XI_MAX, _density=20.0):
    """Gamma-type envelope ``(lam^2/(lam^2+xi^2))^alpha >= |phi_0(xi)|``.

    Follows the constructive proof: ``k = ceil(2/p)``, ``psi = |phi_0|^{2k}``,
    ``L = sup xi^4 psi``, ``M = sup_I psi`` (gap to 1 shrunk by 1.01) and ``lam^2`` the largest of
    ``3/(2 k sigma^2)``, ``(2/3) sqrt(L)``, ``2 M sqrt(L)/(1-M)``.
    """
    if not datum.symmetric:
        raise ParameterError("datum", "envelope needs a symmetric datum; symmetrize first")
    prof = datum.tail_profile()
    if prof.p is None or prof.L_p is None:
        raise ParameterError("datum", "tail profile (p, L_p) unknown")
    if datum.m3_abs is None or not math.isfinite(datum.m3_abs):
        raise ParameterError("datum", "absolute third moment must be finite")
    p, L_p = prof.p, prof.L_p
    k = math.ceil(2.0 / p - 1e-12)
    sigma2 = datum.m2
    m3 = datum.m3_abs

    def build(density):
        xi_end = max(AUDIT_XI_MAX, 2.0 * L_p ** (1.0 / p))
        xi = _scan_points(xi_end, density)
        psi = _abs_cf(datum, xi) ** (2 * k)
        L_scan = float(np.max(xi**4 * psi))
        # |phi_0| <= L_p xi^-p gives xi^4 psi <= L_p^{2k} xi^{4-2kp}, non-increasing beyond xi_end
        L_tail = L_p ** (2 * k) * xi_end ** (4.0 - 2.0 * k * p)
        L = max(L_scan, L_tail)
        lo = math.sqrt(2.0) * sigma2 / (40.0 * math.sqrt(k) * m3)
        hi = math.sqrt(2.0) * L**0.25
        if hi <= lo:
            M = 0.0
        else:
            grid = np.linspace(lo, hi, int(1e4 * density / 20.0))
            # the safety factor widens the scanned gap 1 - sup psi, keeping M < 1
            M = 1.0 - (1.0 - float(np.max(_abs_cf(datum, grid) ** (2 * k)))) / 1.01
        if M >= 1.0:
            raise InternalInconsistencyError("sup of psi on the proof interval reaches 1", quantity=M)
        cands = (3.0 / (2.0 * k * sigma2), 2.0 / 3.0 * math.sqrt(L), 2.0 * M * math.sqrt(L) / (1.0 - M))
        lam = math.sqrt(max(cands))
        env = GammaEnvelope(lam, 1.0 / (2 * k), k, L, M, (lo, hi), cands)
        audit = np.linspace(0.0, audit_xi_max, audit_points)
        ratio = _abs_cf(datum, audit) / env(audit)
        scan_ratio = _abs_cf(datum, xi) / env(xi)
        env.audit_max_ratio = float(max(ratio.max(), scan_ratio.max()))
        # beyond the audit range psi <= L/xi^4 <= lam^2/(lam^2+xi^2) once
        # lam^2 xi^4 - L xi^2 - L lam^2 >= 0, which is increasing in xi there
        l2 = lam**2
        x2 = audit_xi_max**2
        env.tail_covered = bool(l2 * x2**2 - L * x2 - L * l2 >= 0.0 and 2.0 * l2 * x2 >= L)
        return env

    env = build(_density)
    if env.audit_max_ratio > 1.0 + 1e-12:
        env = build(10.0 * _density)
        env.refined = True
        if env.audit_max_ratio > 1.0 + 1e-12:
            raise InternalInconsistencyError(
                "envelope fails to dominate |phi_0| after refinement",
                quantity=env.audit_max_ratio, tolerance=1.0,
            )
    return env


# ------------------------------------------------------------ lemmas A.1, A.2


def lemma_a1_bound(zeta, L, xi):
    """``exp{-(3 pi^2 / (64 (3+L)^2)) (xi / (2 sqrt2 zeta |xi| + pi))^2}``."""
    if not zeta > 0:
        raise ParameterError("zeta", "must be positive")
    if L < 0:
        raise ParameterError("L", "must be non-negative")
    xi = np.asarray(xi, dtype=float)
    c = 3.0 * math.pi**2 / (64.0 * (3.0 + L) ** 2)
    out = np.exp(-c * (xi / (2.0 * math.sqrt(2.0) * zeta * np.abs(xi) + math.pi)) ** 2)
    return float(out) if out.ndim == 0 else out


def berry_esseen_bounds(gamma_n4):
    """(l2_cf, l2_deriv, c1, c2) for a sum with ``Gamma_n^4 = gamma_n4``."""
    if gamma_n4 < 0:
        raise ParameterError("gamma_n4", "must be non-negative")
    return (
        BE_L2_CF * SQRT_GAMMA_7_2 * gamma_n4,
        BE_L2_DERIV * SQRT_GAMMA_7_2 * gamma_n4,
        C1,
        C2,
    )


def equal_weight_gamma_n4(kurtosis, n):
    """``Gamma_n^4 = (m4/m2^2) sum c_j^4`` with ``c_j = 1/sqrt(n)``."""
    return kurtosis / n


@dataclass
class LemmaAudit:
    n: int
    gamma_n4: float
    A: float
    pointwise_cf: float  # max of |diff| / bound over the grid (<= 1 passes)
    pointwise_deriv: float
    l2_cf: float
    l2_cf_bound: float
    l2_deriv: float
    l2_deriv_bound: float

    @property
    def holds(self):
        return (
            self.pointwise_cf <= 1.0
            and self.pointwise_deriv <= 1.0
            and self.l2_cf <= self.l2_cf_bound + 1e-6
            and self.l2_deriv <= self.l2_deriv_bound + 1e-6
        )


def uniform_sum_cf(n, xi):
    """CF of ``sum_j U_j / sqrt(n)`` with ``U_j`` uniform of unit variance."""
    return np.sinc(math.sqrt(3.0 / n) * np.asarray(xi, dtype=float) / math.pi) ** n


def audit_uniform_sum(n, n_grid=2001, step=1e-4):
    """Check the pointwise (40)-(41) and L^2 (16)-(17) bounds for equal-weight uniform sums."""
    g4 = equal_weight_gamma_n4(1.8, n)
    A = 0.5 / g4**0.25
    xi = np.linspace(-A, A, n_grid)
    gauss = np.exp(-(xi**2) / 2)
    diff = uniform_sum_cf(n, xi) - gauss
    ddiff = (uniform_sum_cf(n, xi + step) - uniform_sum_cf(n, xi - step)) / (2 * step) + xi * gauss
    l2cf, l2d, c1, c2 = berry_esseen_bounds(g4)
    b1 = c1 * g4 * xi**4 * gauss
    b2 = c2 * g4 * (1 + xi**2) * np.abs(xi) ** 3 * gauss
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(b1 > 0, np.abs(diff) / b1, np.where(np.abs(diff) > 1e-15, np.inf, 0.0))
        r2 = np.where(b2 > 0, np.abs(ddiff) / b2, np.where(np.abs(ddiff) > 1e-9, np.inf, 0.0))
    # skip the few points where both sides are pure rounding noise
    tiny = np.abs(xi) < 1e-2
    return LemmaAudit(
        n, g4, A,
        float(np.max(r1[~tiny])), float(np.max(r2[~tiny])),
        float(math.sqrt(np.trapezoid(diff**2, xi))), l2cf,
        float(math.sqrt(np.trapezoid(ddiff**2, xi))), l2d,
    )


# ---------------------------------------------------------- theorem constant


@dataclass
class ConstantBreakdown:
    n_bar: int
    delta_bar: float
    eps_bar: float
    coeff_26: float
    coeff_27: float
    coeff_28: float
    coeff_29: float
    coeff_31: float
    c_tilde: float
    M: float
    C_total: float | None
    log10_C_total: float
    overflow: bool
    c_tilde_lambda: float = math.nan  # middle expression of the C-tilde display, with the envelope's lambda
    log10_terms: dict = field(default_factory=dict)

    def recompute_log10(self):
        """log10 of ``2 + 2(n + 2^n n!) + (sum of coefficients)/sqrt2 + 2 c_tilde``.

        Rebuilt from the public fields (``1/delta_bar = 2^n n!``) as an
        independent check on ``log10_C_total``.
        """
        n = self.n_bar
        if self.delta_bar > 0:
            log10_tree = math.log10(2.0) - math.log10(self.delta_bar)
        else:  # underflowed; fall back to the factorial directly
            log10_tree = math.log10(2.0) + n * math.log10(2.0) + math.lgamma(n + 1) / math.log(10)
        coeffs = self.coeff_26 + self.coeff_27 + self.coeff_28 + self.coeff_29 + self.coeff_31
        if math.isfinite(self.c_tilde):
            log10_ct = math.log10(2.0 * self.c_tilde)
        else:
            log10_ct = self.log10_terms["c_tilde"]
        return _log10_sum([math.log10(2.0 + 2.0 * n), log10_tree, math.log10(coeffs / math.sqrt(2.0)), log10_ct])


def _log10_sum(logs):
    top = max(logs)
    return top + math.log10(math.fsum(10.0 ** (x - top) for x in logs))


def theorem_constant(m4, sigma, p, L_p, envelope=None):
    """Constant ``C`` of the bound ``||f(t) - g||_1 <= C e^{-t/4}``."""
    for name, val in (("m4", m4), ("sigma", sigma), ("p", p), ("L_p", L_p)):
        if not (math.isfinite(val) and val > 0):
            raise ParameterError(name, "must be finite and positive")
    kk = math.ceil(2.0 / p - 1e-12)
    n_bar = 9 * kk
    log10_fact = math.lgamma(n_bar + 1) / math.log(10)
    log10_2n = n_bar * math.log10(2.0)
    if n_bar <= 170:
        delta_bar = 1.0 / (2**n_bar * math.factorial(n_bar))
        eps_bar = 1.0 / (2 * math.factorial(n_bar))
    else:
        delta_bar = 10.0 ** (-(log10_2n + log10_fact))
        eps_bar = 0.5 * 10.0 ** (-log10_fact)

    s4 = sigma**4
    kurt = m4 / s4
    coeff_26 = BE_L2_CF * SQRT_GAMMA_7_2 * kurt
    coeff_27 = BE_L2_DERIV * SQRT_GAMMA_7_2 * kurt
    coeff_28 = 16.0 * math.exp(-2) * (2 * kurt) ** 4.5
    coeff_29 = ((5 / math.e) ** 2.5 + 8 * math.sqrt(2) * math.exp(-2)) * (2 * kurt) ** 4.5
    coeff_31 = math.sqrt(2) * (24 / math.e) ** 2 * (2 * kurt) ** 4

    # printed exponential in the C-tilde display
    ratio = math.sqrt(2) * sigma / (8 * kk * sigma**3 + 40 * math.pi * math.sqrt(kk * m4))
    M = math.exp(-3 * math.pi**2 / (64 * (3 + L_p ** (4 / p)) ** 2) * ratio**2)

    ln10 = math.log(10)
    log10_pref = (
        math.log10(4 * math.sqrt(2)) + 4 * math.log10(m4) - 11.5 * math.log10(sigma)
        + 9 / (4 * n_bar) * (math.log10(2) + log10_fact)
    )
    bracket = (3 / (2 * sigma**2)) ** 2.25 + math.exp(
        2.25 * math.log(2 / (1 - M)) + 4.5 / p * math.log(L_p)
    )
    log10_c_tilde = log10_pref + 1.25 * math.log10(2) + math.log10(bracket)
    c_tilde_lambda = math.nan
    if envelope is not None:
        c_tilde_lambda = 10.0 ** min(log10_pref + 4.5 * math.log10(envelope.lam), 308.0)

    coeffs = coeff_26 + coeff_27 + coeff_28 + coeff_29 + coeff_31
    terms = {
        "const": math.log10(2.0 + 2.0 * n_bar),
        "tree": math.log10(2.0) + log10_2n + log10_fact,
        "coeffs": math.log10(coeffs / math.sqrt(2)),
        "c_tilde": math.log10(2.0) + log10_c_tilde,
    }
    log10_C = _log10_sum(list(terms.values()))
    overflow = log10_C * ln10 > 709.0
    C_total = None if overflow else 10.0**log10_C
    c_tilde = math.inf if log10_c_tilde > 308 else 10.0**log10_c_tilde
    return ConstantBreakdown(
        n_bar, delta_bar, eps_bar, coeff_26, coeff_27, coeff_28, coeff_29, coeff_31,
        c_tilde, M, C_total, log10_C, overflow, c_tilde_lambda, terms,
    )
