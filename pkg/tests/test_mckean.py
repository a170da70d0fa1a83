import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kac_relax import ParameterError, UnsupportedOperationError, make_datum
from kac_relax.grids import GridFn
from kac_relax.mckean import (
    RngStream,
    WeightVector,
    check_weight_identity,
    conditional_power_sum_mean,
    elementary_symmetric,
    elementary_symmetric_bruteforce,
    empirical_cf,
    estimate_power_sum,
    expected_power_sum,
    sample_tree,
    sample_velocities,
    sample_velocity,
    sample_weight_batch,
    sample_weights,
)
from kac_relax.wild_solver import truncation_depth

SQ3 = math.sqrt(3.0)


def test_stream_reproducible_and_distinct():
    a = sample_weights(2.0, RngStream(7, 1))
    b = sample_weights(2.0, RngStream(7, 1))
    c = sample_weights(2.0, RngStream(7, 2))
    assert a.nu == b.nu and np.array_equal(a.weights, b.weights)
    nus = [sample_weights(2.0, RngStream(7, s)).nu for s in range(40)]
    assert len(set(nus)) > 1
    assert not (a.nu == c.nu and np.array_equal(a.weights, c.weights))


def test_consecutive_draws_differ():
    rng = RngStream(3)
    x = sample_velocities(make_datum({"family": "gaussian", "sigma": 1.0}), 1.0, 100, rng)
    y = sample_velocities(make_datum({"family": "gaussian", "sigma": 1.0}), 1.0, 100, rng)
    assert not np.array_equal(x, y)


def test_weight_vector_examples():
    rng = RngStream(11)
    w = sample_weights(0.0, rng)
    assert w.nu == 1 and w.weights.tolist() == [1.0]
    w2 = sample_weights(1.0, rng, nu=2)
    c, s = w2.weights
    assert abs(c * c + s * s - 1.0) <= 1e-15
    with pytest.raises(ValueError):
        WeightVector(2, [1.0])


def test_samplewise_identity():
    nus, flat, offsets = sample_weight_batch(3.0, 20_000, RngStream(5))
    sq = np.add.reduceat(flat**2, offsets[:-1])
    assert np.max(np.abs(sq - 1.0)) <= 1e-12
    assert np.max(np.abs(flat)) <= 1.0
    assert check_weight_identity(2.0, 50_000, RngStream(6)) <= 1e-12


def test_leaf_count_law():
    t = 1.5
    nus, _, _ = sample_weight_batch(t, 200_000, RngStream(9))
    p = math.exp(-t)
    # geometric mean 1/p; compare with 4 standard errors
    se = math.sqrt((1 - p) / p**2 / nus.size)
    assert abs(nus.mean() - 1 / p) <= 4 * se
    assert np.mean(nus == 1) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / nus.size))


def test_explicit_tree():
    tree = sample_tree(2.0, RngStream(1), nu=7)
    assert tree.nu == 7 and len(tree.angles) == 6
    assert np.sum(tree.weights**2) == pytest.approx(1.0, abs=1e-12)
    depths = [d for _, d in tree.leaves]
    # Kraft equality for a full binary tree
    assert sum(2.0**-d for d in depths) == pytest.approx(1.0, abs=1e-15)


def test_conditional_means():
    assert conditional_power_sum_mean(4, 1) == 1.0
    assert conditional_power_sum_mean(4, 2) == pytest.approx(0.75, rel=1e-13)
    for n in (1, 5, 40):
        assert conditional_power_sum_mean(2, n) == pytest.approx(1.0, rel=1e-13)


def test_expected_power_sum():
    assert expected_power_sum(4, 2.0) == pytest.approx(math.exp(-0.5), rel=1e-13)
    assert expected_power_sum(2, 7.0) == pytest.approx(1.0, rel=1e-13)
    assert expected_power_sum(3.5, 1.0) == pytest.approx(0.81455176906297, rel=1e-12)
    assert expected_power_sum(3.5, 1.0) == pytest.approx(0.81452, abs=1e-4)


@pytest.mark.parametrize("m, t", [(4, 1.0), (4, 2.0), (3.5, 1.0)])
def test_mixture_consistency(m, t):
    n_max = truncation_depth(t, 1e-10)
    p, r = math.exp(-t), -math.expm1(-t)
    total = math.fsum(p * r ** (n - 1) * conditional_power_sum_mean(m, n) for n in range(1, n_max + 1))
    assert total == pytest.approx(expected_power_sum(m, t), abs=1e-8)


def test_estimate_power_sum_examples():
    rng = RngStream(2024)
    s2 = estimate_power_sum(2, 1.3, 1000, rng)
    assert s2.mean_power_sum == 1.0 and s2.std_error == 0.0
    s0 = estimate_power_sum(4, 0.0, 1000, rng)
    assert s0.mean_power_sum == 1.0 and s0.std_error == 0.0
    s = estimate_power_sum(4, 2.0, 100_000, rng)
    assert abs(s.mean_power_sum - math.exp(-0.5)) <= 3 * s.std_error
    with pytest.raises(ParameterError):
        estimate_power_sum(4, 1.0, 99, rng)


def test_estimates_are_reproducible():
    a = estimate_power_sum(4, 2.0, 50_000, RngStream(1, 4))
    b = estimate_power_sum(4, 2.0, 50_000, RngStream(1, 4))
    assert a.mean_power_sum == b.mean_power_sum and a.std_error == b.std_error


@pytest.mark.parametrize("n", [2, 5, 10])
def test_conditional_identity(n):
    s = estimate_power_sum(4, 1.0, 100_000, RngStream(77, n), nu=n)
    assert abs(s.mean_power_sum - conditional_power_sum_mean(4, n)) <= 3 * s.std_error


def test_elementary_symmetric_examples():
    w = sample_weights(3.0, RngStream(4), nu=9)
    assert elementary_symmetric(w, 0) == 1.0
    assert elementary_symmetric(w, 1) == pytest.approx(1.0, abs=1e-12)
    assert elementary_symmetric(w, 10) == 0.0
    assert elementary_symmetric(w, 4) <= 1 / 24 + 1e-12
    assert elementary_symmetric(w, 4) == pytest.approx(elementary_symmetric_bruteforce(w, 4), abs=1e-10)


def test_newton_identities_on_samples():
    rng = RngStream(31)
    for _ in range(150):
        w = sample_weights(2.5, rng)
        for h in range(0, 9):
            e = elementary_symmetric(w, h)
            assert e <= 1 / math.factorial(h) + 1e-12
            if w.nu <= 12:
                assert e == pytest.approx(elementary_symmetric_bruteforce(w, h), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=12), st.integers(0, 12))
def test_newton_matches_bruteforce(ws, h):
    e = elementary_symmetric(ws, h)
    if h > len(ws):
        assert e == 0.0
    else:
        assert e == pytest.approx(elementary_symmetric_bruteforce(ws, h), abs=1e-10)


def test_velocity_examples():
    rng = RngStream(8)
    g = make_datum({"family": "gaussian", "sigma": 1.3})
    x = sample_velocities(g, 2.0, 100_000, rng)
    se_var = math.sqrt(np.var(x**2) / x.size)
    assert abs(np.mean(x**2) - 1.69) <= 3 * se_var
    assert abs(x.mean()) <= 3 * x.std() / math.sqrt(x.size)
    assert isinstance(sample_velocity(g, 1.0, rng), float)
    with pytest.raises(UnsupportedOperationError):
        sample_velocities(make_datum({"family": "cf_series", "coeffs": [1.0]}), 1.0, 10, rng)


def test_fourth_moment_of_velocities():
    u = make_datum({"family": "uniform", "halfwidth": SQ3})
    x = sample_velocities(u, 2.0, 1_000_000, RngStream(12))
    x4 = x**4
    assert abs(x4.mean() - (3 - 1.2 * math.exp(-0.5))) <= 3 * x4.std() / math.sqrt(x.size)
    y = sample_velocities(u, 4 * math.log(2), 1_000_000, RngStream(13))
    y4 = y**4
    assert abs(y4.mean() - 2.4) <= 3 * y4.std() / math.sqrt(y.size)


def test_mean_relaxes_like_exp_minus_t():
    d = make_datum({"family": "gaussian_mixture", "weights": [0.4, 0.6], "sigmas": [0.5, 0.8],
                    "means": [1.5, -0.5]})
    x = sample_velocities(d, 1.0, 1_000_000, RngStream(14))
    assert abs(x.mean() - d.mean * math.exp(-1.0)) <= 3 * x.std() / math.sqrt(x.size)


def test_empirical_cf_examples():
    tmpl = GridFn(10.0, 257, np.zeros(257))
    np.testing.assert_allclose(empirical_cf(np.array([0.0]), tmpl).values, 1.0, atol=1e-15)
    c = 0.7
    e = empirical_cf(np.array([c, -c]), tmpl)
    np.testing.assert_allclose(e.values.real, np.cos(c * tmpl.xi), atol=1e-13)
    assert np.max(np.abs(e.values.imag)) <= 1e-13
    x = np.random.default_rng(0).standard_normal(2000)
    direct = np.exp(1j * np.outer(tmpl.xi, x)).mean(axis=1)
    np.testing.assert_allclose(empirical_cf(x, tmpl).values, direct, atol=1e-12)
    with pytest.raises(ParameterError):
        empirical_cf(np.array([]), tmpl)


def test_empirical_cf_deviation_bound():
    # build-time calibration: 100 runs of 1e6 normals gave sup deviations up to 2.5e-3
    x = np.random.default_rng(2024).standard_normal(1_000_000)
    tmpl = GridFn(10.0, 129, np.zeros(129))
    e = empirical_cf(x, tmpl)
    assert np.max(np.abs(e.values - np.exp(-0.5 * tmpl.xi**2))) <= 5 / math.sqrt(1e6)
