import math

import mpmath as mp
import numpy as np
import pytest

from kac_relax import ParameterError, make_datum
from kac_relax.bounds import (
    alpha_m,
    alpha_m_closed,
    audit_uniform_sum,
    berry_esseen_bounds,
    equal_weight_gamma_n4,
    gamma_envelope,
    lemma_a1_bound,
    lower_bound_rate,
    theorem_constant,
)

SQ3 = math.sqrt(3.0)
UNIFORM = {"family": "uniform", "halfwidth": SQ3}
MIXTURE = {"family": "gaussian_mixture", "weights": [0.3, 0.7], "sigmas": [0.5, 1.4], "tail_p": 4}


@pytest.mark.parametrize("m", [1, 2, 3, 3.5, 4, 6])
def test_alpha_quadrature_vs_closed(m):
    ref = mp.quad(lambda th: abs(mp.sin(th)) ** m, [0, mp.pi / 2]) * 2 / mp.pi
    assert alpha_m(m) == pytest.approx(float(ref), rel=1e-12)
    assert alpha_m(m) == pytest.approx(alpha_m_closed(m), rel=1e-10)


def test_alpha_examples():
    assert alpha_m(4) == pytest.approx(0.375, rel=1e-14)
    assert alpha_m(2) == pytest.approx(0.5, rel=1e-14)
    assert alpha_m(3.5) == pytest.approx(0.39744135317813009, abs=1e-9)
    with pytest.raises(ParameterError):
        alpha_m(0)


def test_lower_bound_rate():
    assert lower_bound_rate(3.5) == pytest.approx(0.20511729364374, abs=1e-12)
    assert lower_bound_rate(4 - 1e-9) == pytest.approx(0.25, abs=1e-8)
    for b in np.linspace(3.01, 3.99, 12):
        assert lower_bound_rate(b) < 0.25
    for b in (3.0, 4.0, 5.0):
        with pytest.raises(ParameterError):
            lower_bound_rate(b)


def test_uniform_envelope():
    d = make_datum(UNIFORM)
    env = gamma_envelope(d)
    assert env.k == 2 and env.alpha == 0.25
    assert env.lambda_**2 >= 0.75
    assert env(0.0) == 1.0
    assert 0.0 <= env.M < 1.0
    assert env.audit_max_ratio <= 1.0 and env.tail_covered
    xi = np.linspace(0, 1e3, 10_000)
    assert np.all(np.abs(d._cf_array(xi)) <= env(xi))


def test_mixture_envelope():
    d = make_datum(MIXTURE)
    env = gamma_envelope(d)
    assert env.k == 1 and env.alpha == 0.5
    xi = np.linspace(0, 1e3, 10_000)
    assert np.all(np.abs(d._cf_array(xi)) <= env(xi))
    assert env.tail_covered


def test_envelope_preconditions():
    asym = make_datum({"family": "gaussian_mixture", "weights": [0.5, 0.5], "sigmas": [1, 1],
                       "means": [1, -0.5], "tail_p": 4})
    with pytest.raises(ParameterError):
        gamma_envelope(asym)
    with pytest.raises(ParameterError):
        gamma_envelope(make_datum({"family": "cf_series", "coeffs": [1.0]}))


def test_lemma_a1_examples():
    assert lemma_a1_bound(1.0, 3.0, 0.0) == 1.0
    far = lemma_a1_bound(math.sqrt(1 / 3), 16.0, 1e12)
    assert far == pytest.approx(0.99951953612495165, abs=1e-12)
    for zeta, L in ((0.5, 0.0), (1.0, 16.0), (3.0, 2.0)):
        assert lemma_a1_bound(zeta, L, 1.0) >= lemma_a1_bound(zeta, L, 2.0)


def test_lemma_a1_holds_for_four_fold_uniform():
    xi = np.linspace(0, 50, 1000)
    psi = np.abs(np.sinc(xi / (2 * math.pi))) ** 4
    assert np.all(psi <= lemma_a1_bound(math.sqrt(1 / 3), 16.0, xi))


def test_berry_esseen_constants():
    l2cf, l2d, c1, c2 = berry_esseen_bounds(1.0)
    assert l2cf == pytest.approx(1.1302637360546213, rel=1e-14)
    assert l2d == pytest.approx(6.9274228983992919, rel=1e-14)
    assert math.gamma(3.5) == pytest.approx(15 * math.sqrt(math.pi) / 8, rel=1e-15)
    assert (c1, c2) == (0.33, 0.76)
    assert berry_esseen_bounds(0.0)[:2] == (0.0, 0.0)
    assert equal_weight_gamma_n4(1.8, 4) == pytest.approx(0.45)
    assert equal_weight_gamma_n4(1.8, 16) == pytest.approx(0.1125)
    assert equal_weight_gamma_n4(1.8, 64) == pytest.approx(0.028125)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_lemma_a2_audit(n):
    a = audit_uniform_sum(n)
    assert a.holds
    assert a.A == pytest.approx(0.5 / (1.8 / n) ** 0.25)


def test_theorem_constant_examples():
    c = theorem_constant(3.0, 1.0, 1.0, 1.0)
    assert c.n_bar == 18
    assert c.delta_bar == 1.0 / (2**18 * math.factorial(18))
    assert c.eps_bar == 1.0 / (2 * math.factorial(18))
    assert c.eps_bar == pytest.approx(1 / math.factorial(18) - 2**17 * c.delta_bar, rel=1e-15)
    assert c.coeff_31 == pytest.approx(142874.10371807143, rel=1e-13)
    assert c.coeff_26 == pytest.approx(0.62 * math.sqrt(math.gamma(3.5)) * 3.0, rel=1e-14)
    assert c.coeff_28 == pytest.approx(16 * math.exp(-2) * 6**4.5, rel=1e-14)
    assert 0 < c.M < 1


def test_theorem_constant_identity():
    d = make_datum(UNIFORM)
    env = gamma_envelope(d)
    prof = d.tail_profile()
    c = theorem_constant(d.m4, d.sigma, prof.p, prof.L_p, env)
    direct = (
        2 + 2 * (c.n_bar + 2**c.n_bar * math.factorial(c.n_bar))
        + (c.coeff_26 + c.coeff_27 + c.coeff_28 + c.coeff_29 + c.coeff_31) / math.sqrt(2)
        + 2 * c.c_tilde
    )
    assert c.C_total == pytest.approx(direct, rel=1e-12)
    assert c.recompute_log10() == pytest.approx(c.log10_C_total, rel=1e-12)
    assert not c.overflow and math.isfinite(c.c_tilde_lambda)


def test_theorem_constant_overflow_is_flagged():
    c = theorem_constant(3.0, 1.0, 0.01, 1.0)
    assert c.n_bar == 1800 and c.overflow and c.C_total is None
    assert math.isfinite(c.log10_C_total) and c.log10_C_total > 308
    with pytest.raises(ParameterError):
        theorem_constant(math.inf, 1.0, 1.0, 1.0)
