import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import subextremal
from kdstrap.errors import DomainError
from kdstrap.radial import SpacetimeParams, horizon_data, mu
from kdstrap.trapping import (
    ENDPOINT,
    INTERIOR,
    ZERO_XI_T,
    F_eval,
    F_minus_Ftrap,
    P_eval,
    gamma_rank_check,
    linearization,
    manifold_xi_r,
    on_gamma,
    trap_aux,
    trapped_radius,
)


def test_sds_trapped_radius_is_photon_sphere():
    o = trapped_radius(SpacetimeParams(0.06, 1.0, 0.0), 1.0, 0.3)
    assert o.case == INTERIOR
    assert o.r_trap == pytest.approx(3.0, abs=1e-12)
    assert float(mu(o.params, 3.0)) == pytest.approx(1.38, abs=1e-12)


def test_sds_equatorial_rate_frozen():
    o = trapped_radius(SpacetimeParams(0.06, 1.0, 0.0), 1.0, 0.3)
    assert o.normal_rate(math.pi / 2) == pytest.approx(1.70251306, rel=1e-7)
    assert o.rate_q() == pytest.approx(9 * o.normal_rate(math.pi / 2), rel=1e-14)


def test_headline_trapped_radius_frozen(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    assert o.case == INTERIOR
    assert o.r_trap == pytest.approx(1.9692586, abs=1e-6)


@given(st.floats(0.01, 0.1), st.floats(0.5, 2.0), st.floats(-3, 3), st.floats(0.1, 3))
def test_zero_spin_trapped_radius_is_three_m(lam, m, xphi, xt):
    p = SpacetimeParams(lam / (m * m), m, 0.0)
    o = trapped_radius(p, xt, xphi)
    assert o.r_trap == pytest.approx(3.0 * m, rel=1e-11)


def test_zero_xi_t_gives_r0(headline):
    o = trapped_radius(headline, 0.0, 1.0)
    assert o.case == ZERO_XI_T
    assert o.r_trap == horizon_data(headline).r0


def test_zero_covector_rejected(headline):
    with pytest.raises(DomainError):
        trapped_radius(headline, 0.0, 0.0)


def test_endpoint_degenerate_detected(headline):
    hz = horizon_data(headline)
    a = headline.spin
    # choose xi_phi so that P vanishes exactly at r_e
    xphi = -(hz.r_e**2 + a * a) / a
    o = trapped_radius(headline, 1.0, xphi)
    assert o.case == ENDPOINT
    assert math.isnan(o.r_trap)
    with pytest.raises(DomainError):
        linearization(o, 1.0)


@given(subextremal(), st.floats(0, 2 * math.pi))
def test_critical_point_is_unique_minimum(p, ang):
    xt, xp = math.cos(ang), math.sin(ang)
    o = trapped_radius(p, xt, xp)
    if o.case != INTERIOR:
        return
    hz = o.horizons
    assert hz.r_e < o.r_trap < hz.r_c
    assert o.F_pp > 0
    # F' changes sign exactly once on the open interval
    r = np.linspace(hz.r_e, hz.r_c, 4001)[1:-1]
    P = P_eval(p, xt, xp, r)
    g = -P * trap_aux(p, xt, xp, r)
    s = np.sign(g[np.abs(g) > 1e-9 * np.max(np.abs(g))])
    assert np.count_nonzero(np.diff(s)) == 1


def test_F_derivatives_match_finite_differences(headline):
    r, h = 2.5, 1e-5
    for k in (1, 2):
        fd = (F_eval(headline, -1.0, 2.0, r + h, k - 1) - F_eval(headline, -1.0, 2.0, r - h, k - 1)) / (2 * h)
        assert F_eval(headline, -1.0, 2.0, r, k) == pytest.approx(fd, rel=1e-7)


def test_F_minus_Ftrap_matches_direct_difference(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    r = np.array([o.r_trap - 0.3, o.r_trap + 0.5])
    direct = F_eval(headline, -1.0, 2.0, r) - o.F_trap
    assert np.allclose(F_minus_Ftrap(o, r), direct, rtol=1e-9)
    # near r_trap the difference is quadratic with curvature F''/2
    d = 1e-6
    assert F_minus_Ftrap(o, o.r_trap + d) == pytest.approx(0.5 * o.F_pp * d * d, rel=1e-4)


def test_branches_are_opposite(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    r = np.array([o.r_trap - 0.1, o.r_trap + 0.1])
    u = manifold_xi_r(o, r, "unstable")
    s = manifold_xi_r(o, r, "stable")
    assert np.allclose(u, -s)
    assert u[1] > 0 and u[0] < 0
    with pytest.raises(ValueError):
        manifold_xi_r(o, r, "neutral")


def test_linearization_is_hyperbolic(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    for th in (0.4, math.pi / 2):
        lin = linearization(o, th)
        assert lin["trace"] == pytest.approx(0.0, abs=1e-14)
        assert lin["det"] < 0
        ev = lin["eigenvalues"]
        assert ev[1] == pytest.approx(lin["rate"], rel=1e-12)
        assert ev[0] == pytest.approx(-lin["rate"], rel=1e-12)


def test_gamma_rank(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    rep = gamma_rank_check(o, np.linspace(0.3, 2.8, 7))
    assert rep["n_points"] > 0
    assert rep["passed"], rep


def test_on_gamma_predicate(headline):
    o = trapped_radius(headline, -1.0, 2.0)
    assert on_gamma(o, o.r_trap, 0.0)
    assert not on_gamma(o, o.r_trap + 1e-4, 0.0)
    assert not on_gamma(o, o.r_trap, 1e-4)


def test_orbit_record(headline):
    d = trapped_radius(headline, -1.0, 2.0).as_dict()
    assert set(d) == {"xi_t", "xi_phi", "case", "r_trap", "F_trap", "F_pp", "rate_equator"}
    assert d["rate_equator"] > 0
