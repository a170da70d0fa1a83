import math

import numpy as np
import pytest

from kac_relax import ParameterError, UnsupportedOperationError, eval_cf, make_datum, moments, symmetrize, tail_profile
from kac_relax.initial_data import numeric_moments

SQ3 = math.sqrt(3.0)

# oracles computed with mpmath (oscillatory quadrature, 30 digits)
POWER_LAW_CF = {0.1: 0.98851554606679055, 0.5: 0.74921626843394837,
                2.0: -0.65120890908263142, 5.0: 0.48208524406693092}

FAMILIES = {
    "gaussian": {"family": "gaussian", "sigma": 1.3},
    "uniform": {"family": "uniform", "halfwidth": SQ3},
    "mixture": {"family": "gaussian_mixture", "weights": [0.3, 0.7], "sigmas": [0.5, 1.4]},
    "power_law": {"family": "power_law", "beta": 3.5},
    "cf_series": {"family": "cf_series", "coeffs": [0.5, 0.3, 0.2]},
    "shifted": {"family": "gaussian_mixture", "weights": [0.4, 0.6], "sigmas": [0.5, 0.8],
                "means": [1.5, -0.5]},
}


@pytest.fixture(params=sorted(FAMILIES))
def datum(request):
    return make_datum(FAMILIES[request.param])


def test_gaussian_moments():
    d = make_datum({"family": "gaussian", "sigma": 1.0})
    assert (d.m2, d.m4, d.symmetric) == (1.0, 3.0, True)
    d2 = moments(make_datum({"family": "gaussian", "sigma": 2.0}))
    assert d2.m2 == pytest.approx(4.0, rel=1e-15)
    assert d2.m4 == pytest.approx(48.0, rel=1e-15)


def test_uniform_moments():
    m = moments(make_datum({"family": "uniform", "halfwidth": SQ3}))
    assert m.m2 == pytest.approx(1.0, rel=1e-15)
    assert m.m4 == pytest.approx(9 / 5, rel=1e-15)
    assert m.kurtosis_excess == pytest.approx(-6 / 5, rel=1e-14)
    assert m.m3_abs == pytest.approx(3 * SQ3 / 4, rel=1e-15)


def test_power_law_moments():
    d = make_datum({"family": "power_law", "beta": 3.5})
    assert d.m2 == pytest.approx(7 / 3, rel=1e-15)
    assert d.m4 == math.inf
    assert d.m3_abs == pytest.approx(7.0, rel=1e-15)
    num = numeric_moments(d)
    assert num.m2 == pytest.approx(7 / 3, rel=1e-8)
    assert num.m3_abs == pytest.approx(7.0, rel=1e-8)


@pytest.mark.parametrize("name", ["gaussian", "uniform", "mixture", "shifted"])
def test_declared_moments_match_quadrature(name):
    d = make_datum(FAMILIES[name])
    num = numeric_moments(d)
    assert num.m2 == pytest.approx(d.m2, rel=1e-6)
    assert num.m4 == pytest.approx(d.m4, rel=1e-6)
    assert num.m3_abs == pytest.approx(d.m3_abs, rel=1e-6)


def test_moment_set_inequalities(datum):
    if datum.family == "cf_series":
        with pytest.raises(UnsupportedOperationError):
            datum.moments()
        return
    m = datum.moments()
    assert m.m2 >= 0
    assert m.m4 >= m.m2**2
    assert m.m3_abs >= m.m2**1.5


@pytest.mark.parametrize(
    "spec, field",
    [
        ({"family": "gaussian", "sigma": -1.0}, "sigma"),
        ({"family": "uniform", "halfwidth": 0.0}, "halfwidth"),
        ({"family": "gaussian_mixture", "weights": [0.5, 0.6], "sigmas": [1, 1]}, "weights"),
        ({"family": "gaussian_mixture", "weights": [-0.5, 1.5], "sigmas": [1, 1]}, "weights"),
        ({"family": "power_law", "beta": 5.0}, "beta"),
        ({"family": "power_law", "beta": 3.0}, "beta"),
        ({"family": "cf_series", "coeffs": [0.5, 0.4]}, "coeffs"),
        ({"family": "nope"}, "family"),
    ],
)
def test_invalid_parameters_name_the_field(spec, field):
    with pytest.raises(ParameterError) as exc:
        make_datum(spec)
    assert exc.value.field == field


def test_eval_cf_examples():
    g = make_datum({"family": "gaussian", "sigma": 1.0})
    assert eval_cf(g, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    pl = make_datum({"family": "power_law", "beta": 3.5})
    for xi, ref in POWER_LAW_CF.items():
        assert eval_cf(pl, xi).real == pytest.approx(ref, abs=1e-9)
    assert eval_cf(pl, 0.1).real == pytest.approx(0.98852, abs=1e-5)


def test_cf_normalized_and_bounded(datum):
    xi = np.linspace(-50, 50, 1000)
    vals = datum._cf_array(xi)
    assert np.all(np.abs(vals) <= 1 + 1e-12)
    assert eval_cf(datum, 0.0) == 1.0
    if datum.symmetric:
        assert np.max(np.abs(vals.imag)) <= 1e-12


@pytest.mark.parametrize("name", ["gaussian", "uniform", "mixture", "shifted"])
def test_second_derivative_gives_m2(name):
    d = make_datum(FAMILIES[name])
    h = 1e-3
    c = d._cf_array(np.array([-h, 0.0, h])).real
    d2 = (c[0] - 2 * c[1] + c[2]) / h**2
    assert -d2 == pytest.approx(d.m2, rel=1e-4)


def test_power_law_regimes_agree():
    d = make_datum({"family": "power_law", "beta": 3.5})
    xi = np.linspace(0.5, 1.0, 20)
    np.testing.assert_allclose(d.cf_series_regime(xi), d.cf_quadrature_regime(xi), rtol=0, atol=1e-8)


def test_tail_profiles():
    u = make_datum({"family": "uniform", "halfwidth": SQ3})
    prof = tail_profile(u)
    assert prof.p == 1 and prof.L_p == pytest.approx(1 / SQ3, rel=1e-15)
    xi = np.linspace(1e-6, 1e3, 200_001)
    assert np.max(xi * np.abs(u._cf_array(xi))) <= prof.L_p + 1e-9

    g = make_datum({"family": "gaussian", "sigma": 1.5, "tail_p": 4})
    pg = tail_profile(g)
    # max x^4 exp(-s^2 x^2 / 2) = (4 / (e s^2))^2
    assert pg.p == 4 and pg.L_p == pytest.approx((4 / (math.e * 2.25)) ** 2, rel=1e-12)

    cs = tail_profile(make_datum(FAMILIES["cf_series"]))
    assert cs.p is None and cs.L_p is None


def test_power_law_tail_majorant():
    d = make_datum({"family": "power_law", "beta": 3.5})
    prof = tail_profile(d)
    xi = np.linspace(0.01, 60, 3000)
    assert np.all(xi * np.abs(d._cf_array(xi)) <= prof.L_p)


def test_cf_series_has_no_density():
    d = make_datum(FAMILIES["cf_series"])
    assert not d.has_density
    with pytest.raises(UnsupportedOperationError):
        numeric_moments(d)
    with pytest.raises(UnsupportedOperationError):
        d.density(0.0)


def test_symmetrize():
    u = make_datum(FAMILIES["uniform"])
    assert symmetrize(u) is u
    s = make_datum(FAMILIES["shifted"])
    e = symmetrize(s)
    assert e.symmetric and e.m2 == pytest.approx(s.m2, abs=1e-12)
    for xi in (0.5, 1.0, 2.0):
        assert eval_cf(e, xi) == pytest.approx(eval_cf(s, xi).real, abs=1e-15)
    v = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(e.density(v), 0.5 * (s.density(v) + s.density(-v)), rtol=1e-15)


def test_cell_average_is_exact_for_uniform():
    u = make_datum(FAMILIES["uniform"])
    h = 0.1
    v = np.array([0.0, SQ3, SQ3 + 0.05, 3.0])
    got = u.cell_average(v, h)
    assert got[0] == pytest.approx(1 / (2 * SQ3), rel=1e-14)
    # half of the cell around the jump lies inside the support
    assert got[1] == pytest.approx(0.5 / (2 * SQ3), rel=1e-12)
    assert got[2] == pytest.approx(0.0, abs=1e-15) and got[3] == 0.0


def test_custom_grid_roundtrip(tmp_path):
    v = np.linspace(-8, 8, 4001)
    f = np.exp(-v**2 / 2) / math.sqrt(2 * math.pi)
    path = tmp_path / "g.csv"
    path.write_text("v,f\n" + "\n".join(f"{a:.17g},{b:.17g}" for a, b in zip(v, f)))
    d = make_datum({"family": "custom_grid", "grid_path": str(path)})
    assert d.symmetric
    assert d.m2 == pytest.approx(1.0, rel=1e-6)
    assert eval_cf(d, 1.0).real == pytest.approx(math.exp(-0.5), abs=1e-5)
    prof = tail_profile(d)
    assert prof.lower_bound
    with pytest.raises(ParameterError):
        make_datum({"family": "custom_grid", "grid_path": str(path), "m2": 2.0})
