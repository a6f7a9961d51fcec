import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehdfb import profiles as P
from ehdfb.errors import OnBoundary, UnsupportedExponent

import oracles as O

CORNERS = ("A1", "A2", "A3", "A4L", "A4R")
ALL = CORNERS + ("W(2)", "W(3)", "W(4)", "LINEAR")

angles = st.floats(-math.pi, math.pi - 1e-9, allow_nan=False)
radii = st.floats(0.05, 2.0)


# ------------------------------------------------------------ stated constants


def test_amplitudes_match_stated_values():
    # Stokes sqrt(2)/3, asymmetric sqrt(2 sqrt 3)/3, bilateral sqrt(6)/3 and 2/3
    assert P.C_STOKES == pytest.approx(math.sqrt(2) / 3, abs=1e-16)
    assert P.C_ASYM == pytest.approx(math.sqrt(2 * math.sqrt(3)) / 3, abs=1e-16)
    assert P.C_BILATERAL_NEG == pytest.approx(math.sqrt(6) / 3, abs=1e-16)
    assert P.C_BILATERAL_POS == pytest.approx(2 / 3, abs=1e-16)


@pytest.mark.parametrize("name, value", [("A1", math.sqrt(3) / 3), ("A2", math.sqrt(3) / 3),
                                         ("A3", math.sqrt(3) / 3), ("A4L", 0.5), ("A4R", 0.5)])
def test_closed_form_density_is_exact(name, value):
    assert P.density(P.get(name)).value == pytest.approx(value, abs=1e-15)


def test_closed_form_density_matches_quadrature_oracle(ref):
    assert P.negative_density(P.A1()) == pytest.approx(ref["density_stokes"], abs=1e-13)
    assert P.negative_density(P.A4R()) == pytest.approx(ref["density_asymmetric_right"], abs=1e-13)
    assert P.negative_density(P.A4L()) == pytest.approx(ref["density_asymmetric_left"], abs=1e-13)
    assert P.halfplane_density().value == pytest.approx(ref["density_halfplane"], abs=1e-13)


@pytest.mark.parametrize("name", CORNERS)
def test_free_boundary_conditions_hold_in_closed_form(name):
    res = P.fb_residual(P.get(name))
    assert res
    assert max(abs(r.residual) for r in res.values()) <= 1e-12


def test_free_boundary_rays_carry_expected_kinds():
    kinds = {round(t, 6): r.kind for t, r in P.fb_residual(P.A4R()).items()}
    assert kinds[round(0.0, 6)] == "two-phase"
    assert kinds[round(-2 * math.pi / 3, 6)] == "one-phase-negative"
    assert kinds[round(2 * math.pi / 3, 6)] == "one-phase-positive"


@pytest.mark.parametrize("name", CORNERS)
def test_corner_sectors_have_width_two_thirds_pi(name):
    prof = P.get(name)
    neg = [p for p in prof.pieces if p.sign == P.NEGATIVE]
    assert sum(p.width for p in neg) == pytest.approx(2 * math.pi / 3, abs=1e-14)


def test_mis_scaled_profile_violates_conditions():
    res = P.fb_residual(P.scaled(P.A1(), 1.1))
    assert max(abs(r.residual) for r in res.values()) > 1e-3


def test_frequency_profiles_reject_free_boundary_conditions():
    with pytest.raises(UnsupportedExponent):
        P.fb_residual(P.W(2))


@pytest.mark.parametrize("name", ALL)
def test_catalog_profiles_validate(name):
    assert P.validate(P.get(name)) == []


def test_aliases_resolve():
    assert P.get("A4.1").name == "A4L"
    assert P.get("w3").name == "W(3)"
    with pytest.raises(KeyError):
        P.get("A9")


def test_sector_arguments_are_checked():
    with pytest.raises(ValueError):
        P.SectorProfile(-1.0, 1.5, 0.0, -1.0, 0.0, P.NEGATIVE)
    with pytest.raises(ValueError):
        P.SectorProfile(1.0, 0.5, 0.0, -1.0, 0.0, P.NEGATIVE)
    with pytest.raises(ValueError):
        P.SectorProfile(1.0, 1.5, 0.0, 0.5, 0.0, P.NEGATIVE)


def test_gradient_on_a_ray_or_vertex_is_refused():
    with pytest.raises(OnBoundary):
        P.gradient(P.A1(), 1.0, -math.pi / 6)
    with pytest.raises(OnBoundary):
        P.gradient(P.A1(), 0.0, -math.pi / 2)


def test_values_match_independent_formula():
    th = np.linspace(-math.pi, math.pi, 97, endpoint=False)
    got = P.eval(P.A1(), 0.7, th)
    want = [O.stokes_negative(0.7, t) for t in th]
    assert np.allclose(got, want, atol=1e-15)
    got = P.eval(P.W(3), 0.4, th)
    want = [O.w_profile(3, 0.4, t) if t < 0 else 0.0 for t in th]
    assert np.allclose(got, want, atol=1e-15)


# ------------------------------------------------------------------ properties


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(ALL), rho=radii, theta=angles, t=st.floats(0.1, 10.0))
def test_profiles_are_homogeneous(name, rho, theta, t):
    prof = P.get(name)
    assert P.eval(prof, t * rho, theta) == pytest.approx(t ** prof.kappa * P.eval(prof, rho, theta),
                                                         rel=1e-12, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(ALL), rho=radii, theta=angles)
def test_profiles_are_harmonic_inside_sectors(name, rho, theta):
    try:
        r = P.laplacian_residual(P.get(name), rho, theta)
    except OnBoundary:
        return
    assert abs(r) <= 1e-10 * max(1.0, rho ** -1)


@settings(max_examples=60, deadline=None)
@given(name=st.sampled_from(ALL), rho=st.floats(0.2, 1.5), theta=angles)
def test_gradient_matches_central_differences(name, rho, theta):
    prof = P.get(name)
    try:
        g = P.gradient(prof, rho, theta)
    except OnBoundary:
        return
    x, y = rho * math.cos(theta), rho * math.sin(theta)
    d = 1e-6
    if any(abs(float(P.normalize_angle(theta - t))) < 1e-4 for t in prof.rays()):
        return
    fx = (P.eval_xy(prof, x + d, y) - P.eval_xy(prof, x - d, y)) / (2 * d)
    fy = (P.eval_xy(prof, x, y + d) - P.eval_xy(prof, x, y - d)) / (2 * d)
    assert g == pytest.approx([fx, fy], abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(name=st.sampled_from(ALL), rho=st.floats(1e-6, 1e-2), theta=angles)
def test_gradient_vanishes_at_the_vertex_for_superlinear_profiles(name, rho, theta):
    prof = P.get(name)
    if prof.kappa <= 1:
        return
    gx, gy = P.gradient_xy(prof, rho * math.cos(theta), rho * math.sin(theta))
    C = max(p.C for p in prof.pieces)
    w = max(p.w for p in prof.pieces)
    assert math.hypot(gx, gy) <= math.hypot(prof.kappa, w) * C * rho ** (prof.kappa - 1) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(factor=st.floats(0.1, 10.0))
def test_text_round_trip(factor):
    profs = [P.scaled(p, factor) for p in P.catalog().values()]
    back = P.catalog_from_text(P.catalog_to_text(profs))
    for p in profs:
        q = back[p.name]
        th = np.linspace(-math.pi, math.pi, 61, endpoint=False)
        assert np.array_equal(P.eval(p, 0.8, th), P.eval(q, 0.8, th))


@given(theta=st.floats(-50.0, 50.0))
def test_normalized_angles_stay_in_range(theta):
    t = P.normalize_angle(theta)
    assert -math.pi <= t < math.pi
    assert math.cos(t) == pytest.approx(math.cos(theta), abs=1e-9)
