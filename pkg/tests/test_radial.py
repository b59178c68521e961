import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import subextremal
from kdstrap.errors import DomainError, EmptyInterval, NotSubextremal
from kdstrap.radial import (
    H_FORMS,
    SpacetimeParams,
    discriminant_value,
    extremal_boundary_check,
    h_eval,
    h_scale,
    horizon_data,
    is_subextremal,
    lambda_interval,
    maximal_ratio_margin,
    mu,
    mu_derivatives,
    root_residual_scale,
    sample_subextremal,
    verify_h_negative,
)


# -- oracles -----------------------------------------------------------------------


def test_discriminant_headline_value():
    assert discriminant_value(SpacetimeParams(0.02, 1.0, 0.9)) == pytest.approx(0.169599, abs=1e-6)


def test_discriminant_large_spin_is_negative():
    p = SpacetimeParams(0.02, 1.0, 5.0)
    assert discriminant_value(p) < 0
    assert not is_subextremal(p)
    with pytest.raises(NotSubextremal):
        p.validated()


def test_discriminant_reduces_to_sds_condition():
    for lam in (0.01, 0.05, 0.1):
        assert discriminant_value(SpacetimeParams(lam, 1.0, 0.0)) == pytest.approx(1 - 9 * lam)


def test_sds_horizons_frozen():
    hz = horizon_data(SpacetimeParams(0.06, 1.0, 0.0))
    assert hz.r_C == 0.0 or abs(hz.r_C) < 1e-14
    assert hz.r_e == pytest.approx(2.2183264606983406, rel=1e-12)
    assert hz.r_c == pytest.approx(5.69592830359247, rel=1e-12)
    assert hz.r0 == pytest.approx(4.394425331249865, rel=1e-12)
    assert hz.beta_e == pytest.approx(6.295431582129265, rel=1e-10)
    assert hz.beta_c == pytest.approx(12.034296014635453, rel=1e-10)


def test_sds_critical_radius_closed_form():
    # a = 0: mu'(r0) = 2 r0 - 2m - 4 lam r0^3 / 3 = 0
    p = SpacetimeParams(0.06, 1.0, 0.0)
    hz = horizon_data(p)
    assert abs(mu_derivatives(p, hz.r0, 1)) < 1e-13


def test_mu_matches_definition():
    p = SpacetimeParams(0.03, 1.2, 0.7)
    r = np.linspace(-5, 9, 31)
    direct = (r**2 + p.spin**2) * (1 - p.lam * r**2 / 3) - 2 * p.mass * r
    assert np.allclose(mu(p, r), direct, rtol=1e-14, atol=1e-13)


def test_mu_derivatives_match_finite_differences():
    p = SpacetimeParams(0.03, 1.2, 0.7)
    r, h = 2.7, 1e-5
    for k in (1, 2, 3):
        fd = (mu_derivatives(p, r + h, k - 1) - mu_derivatives(p, r - h, k - 1)) / (2 * h)
        assert mu_derivatives(p, r, k) == pytest.approx(fd, rel=1e-7)


def test_h_headline_value():
    assert float(h_eval(SpacetimeParams(0.02, 1.0, 0.9), 3.0)) == pytest.approx(-28.0327, abs=1e-4)


def test_h_forms_undefined_at_origin():
    p = SpacetimeParams(0.02, 1.0, 0.9)
    for form in ("squared", "centered"):
        with pytest.raises(DomainError):
            h_eval(p, 0.0, form)
    assert np.isfinite(h_eval(p, 0.0, "quartic"))
    with pytest.raises(ValueError):
        h_eval(p, 1.0, "cubic")


def test_parameters_must_be_positive():
    with pytest.raises(DomainError):
        SpacetimeParams(0.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        SpacetimeParams(0.1, -1.0, 0.0)
    with pytest.raises(DomainError):
        SpacetimeParams(float("nan"), 1.0, 0.0)


def test_params_dict_round_trip():
    p = SpacetimeParams(0.02, 1.0, -0.9)
    assert SpacetimeParams.from_dict(p.as_dict()) == p


# -- Lambda interval -------------------------------------------------------------------


def test_interval_for_zero_spin():
    iv = lambda_interval(0.0, 2.0)
    assert iv.lambda0 == 0.0
    assert iv.lambda1 == pytest.approx(1 / 36, abs=1e-12)


@pytest.mark.parametrize("ratio,lo,hi", [(1.01, 0.028535, 0.154466), (1.05, 0.116493, 0.162153)])
def test_interval_beyond_unit_ratio(ratio, lo, hi):
    iv = lambda_interval(ratio, 1.0)
    assert iv.lambda0 == pytest.approx(lo, abs=1e-6)
    assert iv.lambda1 == pytest.approx(hi, abs=1e-6)
    assert iv.lambda0 > 0


def test_interval_empty_at_large_ratio():
    iv = lambda_interval(1.2, 1.0)
    assert iv.empty
    lams = np.linspace(1e-6, 3 / 1.44, 2001)
    assert max(discriminant_value(SpacetimeParams(L, 1.0, 1.2)) for L in lams) < 0
    with pytest.raises(EmptyInterval):
        extremal_boundary_check(1.2, 1.0)


@given(st.floats(0.5, 2.0), st.floats(0.0, 1.1), st.floats(0.0, 1.0))
def test_interval_characterises_subextremality(m, ratio, t):
    a = ratio * m
    iv = lambda_interval(a, m)
    if iv.empty:
        return
    # strictly inside the interval is subextremal, just outside is not
    lam = iv.lambda0 + (0.02 + 0.96 * t) * (iv.lambda1 - iv.lambda0)
    if lam > 0:
        assert is_subextremal(SpacetimeParams(lam, m, a))
    assert not is_subextremal(SpacetimeParams(iv.lambda1 * 1.01, m, a))
    if iv.lambda0 > 0:
        assert not is_subextremal(SpacetimeParams(iv.lambda0 * 0.99, m, a))


# -- properties ------------------------------------------------------------------------


@given(subextremal())
def test_horizon_ordering_and_residuals(p):
    hz = horizon_data(p)
    assert hz.r_minus < hz.r_C < hz.r_e < hz.r0 < hz.r_c
    assert hz.beta_e > 0 and hz.beta_c > 0
    for r in hz.roots:
        assert abs(mu(p, r)) <= 1e-12 * root_residual_scale(p, r)
    # mu > 0 exactly between the event and cosmological horizons
    r = np.linspace(hz.r_e, hz.r_c, 101)[1:-1]
    assert np.all(mu(p, r) > 0)


@given(subextremal())
def test_horizons_symmetric_in_spin_sign(p):
    q = SpacetimeParams(p.lam, p.mass, -p.spin)
    assert horizon_data(p).roots == pytest.approx(horizon_data(q).roots, rel=1e-13)


@given(subextremal(), st.floats(-10.0, 10.0).filter(lambda x: abs(x) > 1e-3))
def test_h_forms_agree(p, x):
    r = x * p.mass
    vals = [float(h_eval(p, r, f)) for f in H_FORMS]
    assert (max(vals) - min(vals)) <= 1e-10 * float(h_scale(p, r))


@given(subextremal())
def test_h_negative_between_horizons(p):
    rep = verify_h_negative(p, 512)
    assert rep.passed
    assert rep.max_h < 0


@given(subextremal())
def test_maximal_ratio_margin_positive(p):
    assert maximal_ratio_margin(p) > 0


def test_sampler_respects_ranges():
    rng = np.random.default_rng(0)
    ps = sample_subextremal(rng, 30, spin_ratio=(0.9, 1.1), mass=(1.0, 1.5))
    assert len(ps) == 30
    for p in ps:
        assert is_subextremal(p)
        assert 1.0 <= p.mass <= 1.5
        assert 0.9 <= abs(p.spin) / p.mass <= 1.1


# -- extremal limit -------------------------------------------------------------------


@given(st.floats(0.5, 2.0), st.floats(1.001, 1.099))
def test_extremal_structure(m, ratio):
    rep = extremal_boundary_check(ratio * m, m)
    assert rep.applicable
    assert rep.vanish_ok and rep.bound_ok and rep.identity_ok
    assert rep.slack_identity >= 0
    assert rep.slack == pytest.approx(rep.slack_identity, abs=1e-10)


def test_extremal_double_root_at_lambda0():
    rep = extremal_boundary_check(1.05, 1.0)
    p = SpacetimeParams(rep.lambda0, 1.0, 1.05)
    assert abs(mu(p, rep.r_e)) < 1e-10
    assert abs(mu_derivatives(p, rep.r_e, 1)) < 1e-6


def test_extremal_not_applicable_below_unit_ratio():
    rep = extremal_boundary_check(0.9, 1.0)
    assert rep.lambda0 == 0.0
    assert not rep.applicable
    assert rep.identity_ok
    assert math.isclose(rep.slack_identity, 1.0)
