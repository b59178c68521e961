import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import subextremal
from kdstrap.charts import (
    CHARTS,
    ChartPoint,
    Covector,
    band_margin,
    build_extension,
    chart_transform,
    check_domain,
    rotation_rate,
    spacelike_slice_check,
)
from kdstrap.errors import ChartDomainError
from kdstrap.radial import SpacetimeParams, mu


def test_profile_endpoint_values(headline_profile):
    prof = headline_profile
    hz = prof.horizons
    assert prof.f(hz.r_e) == pytest.approx(-1.0, abs=1e-12)
    assert prof.f(hz.r_c) == pytest.approx(1.0, abs=1e-12)
    lo, hi = prof.slab
    assert lo == pytest.approx(hz.r_e - prof.delta)
    assert hi == pytest.approx(hz.r_c + prof.delta)
    assert mu(prof.params, lo) < 0 and mu(prof.params, hi) < 0


def test_X_is_finite_across_horizons(headline_profile):
    prof = headline_profile
    hz = prof.horizons
    for rh in (hz.r_e, hz.r_c):
        vals = prof.X(np.array([rh - 1e-9, rh, rh + 1e-9]))
        assert np.all(np.isfinite(vals))
        assert vals[1] == pytest.approx(prof.X_horizon_limit(rh), rel=1e-6)


def test_X_matches_definition_away_from_horizons(headline_profile):
    prof = headline_profile
    hz = prof.horizons
    r = np.linspace(hz.r_e + 0.1, hz.r_c - 0.1, 9)
    assert np.allclose(prof.X(r), (1 - prof.f(r) ** 2) / mu(prof.params, r), rtol=1e-9)


def test_derivative_of_X(headline_profile):
    prof = headline_profile
    r, h = 3.0, 1e-6
    fd = (prof.X(r + h) - prof.X(r - h)) / (2 * h)
    assert prof.X(r, 1) == pytest.approx(fd, rel=1e-6)


def test_band_margin_positive_on_slab(headline_profile):
    prof = headline_profile
    lo, hi = prof.slab
    r = np.linspace(lo, hi, 2001)
    assert np.all(band_margin(prof, r) > 0)


def test_slices_spacelike(headline_profile, sds_profile):
    for prof in (headline_profile, sds_profile):
        rep = spacelike_slice_check(prof, n_grid=1024)
        assert rep["passed"], rep


@settings(max_examples=15)
@given(subextremal())
def test_extension_builds_for_random_triples(p):
    prof = build_extension(p)
    assert spacelike_slice_check(prof, n_grid=512)["passed"]


def test_rotation_rate_zero_without_spin(sds_profile):
    assert rotation_rate(sds_profile.params, sds_profile.horizons) == 0.0


@given(st.floats(0.05, 0.95), st.floats(0.1, 3.0), st.floats(-3.0, 3.0), st.floats(-5.0, 5.0))
def test_point_round_trip(headline_profile, u, th, phi, t):
    prof = headline_profile
    hz = prof.horizons
    r = hz.r_e + u * (hz.r_c - hz.r_e)
    pt = ChartPoint("BL", (t, r, phi, th))
    for ch in CHARTS:
        there = chart_transform(pt, ch, prof.params, prof)
        back = chart_transform(there, "BL", prof.params, prof)
        assert back.coords == pytest.approx(pt.coords, abs=1e-9)


def test_star_time_shift_vanishes_at_r0(headline_profile):
    prof = headline_profile
    pt = ChartPoint("BL", (1.0, prof.horizons.r0, 0.5, 1.0))
    star = chart_transform(pt, "STAR", prof.params, prof)
    assert star.coords == pytest.approx(pt.coords, abs=1e-12)


def test_covector_round_trip(headline_profile, rng):
    prof = headline_profile
    hz = prof.horizons
    for _ in range(20):
        r = rng.uniform(hz.r_e, hz.r_c)
        pt = ChartPoint("BL", (0.0, r, 0.0, 1.2))
        xi = Covector("BL", tuple(rng.normal(size=4)))
        for ch in CHARTS:
            x2 = chart_transform(xi, ch, prof.params, prof, point=pt)
            p2 = chart_transform(pt, ch, prof.params, prof)
            back = chart_transform(x2, "BL", prof.params, prof, point=p2)
            assert back.comps == pytest.approx(xi.comps, rel=1e-12, abs=1e-12)


def test_covector_pairing_with_vector_is_invariant(headline_profile):
    # xi(V) for V = d/dr in BL equals the pairing with its push-forward in STAR
    prof = headline_profile
    r = 3.0
    pt = ChartPoint("BL", (0.0, r, 0.0, 1.0))
    xi = Covector("BL", (0.3, -1.1, 0.7, 0.2))
    star = chart_transform(xi, "STAR", prof.params, prof, point=pt)
    # d/dr_BL = d/dr* - Phi' d/dt* - Psi' d/dphi*
    V = np.array([-prof.Phi_prime(r), 1.0, -prof.Psi_prime(r), 0.0])
    assert float(np.dot(star.comps, V)) == pytest.approx(xi.comps[1], rel=1e-12)


def test_domain_errors(headline_profile):
    prof = headline_profile
    hz = prof.horizons
    with pytest.raises(ChartDomainError):
        check_domain("BL", hz.r_e - 0.01, 1.0, hz)
    with pytest.raises(ChartDomainError):
        check_domain("STAR", 1.0, 1e-5, hz, prof)
    with pytest.raises(ChartDomainError):
        check_domain("STAR", prof.slab[1] + 0.1, 1.0, hz, prof)
    check_domain("STARROT", hz.r_e, 1.0, hz, prof)
    with pytest.raises(ChartDomainError):
        chart_transform(ChartPoint("STAR", (0.0, hz.r_e, 0.0, 1.0)), "BL", prof.params, prof)
    with pytest.raises(ChartDomainError):
        chart_transform(ChartPoint("BL", (0.0, 3.0, 0.0, 1.0)), "STAR", prof.params)
    with pytest.raises(ValueError):
        ChartPoint("XYZ", (0, 1, 2, 3))


def test_profile_serialises(headline_profile):
    from kdstrap.textio import dump_kv, parse_kv

    d = headline_profile.as_dict()
    assert d["delta"] == headline_profile.delta
    assert d["f1_coef_0"] == headline_profile.f1.coef[0]
    back = parse_kv(dump_kv(d))
    assert back["delta"] == d["delta"]
    assert back["base"] == "affine"


def test_delta_request_respected():
    p = SpacetimeParams(0.02, 1.0, 0.9)
    prof = build_extension(p, delta_request=0.1)
    assert prof.delta <= 0.1
    assert math.isfinite(prof.X(prof.slab[0]))
