import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehdfb import weiss as W
from ehdfb.errors import InvalidExponent, OutOfDomain
from ehdfb.field import ScalarField

from conftest import sampled

STOKES_RADII = [1 / 2, 2 ** -1.5, 1 / 4, 2 ** -2.5, 1 / 8, 2 ** -3.5, 1 / 16]


def linear(h, lim=1.1):
    return ScalarField.from_function(lambda X, Y: Y + 0 * X, (-lim, lim), (-lim, lim), h)


# ------------------------------------------------------------------ Weiss M


def test_stokes_weiss_energy_is_constant_at_the_density():
    f = sampled("A1", 1 / 128, 1.25)
    M = np.array([W.weiss_M(f, (0.0, 0.0), r) for r in STOKES_RADII])
    assert np.ptp(M) < 1e-2
    assert np.all(np.abs(M / (math.sqrt(3) / 3) - 1) < 0.02)


def test_stokes_ball_energy_matches_oracle(ref):
    f = sampled("A1", 1 / 128, 1.25)
    assert W.weiss_I(f, (0.0, 0.0), 1.0) == pytest.approx(ref["stokes_I_r1"], abs=2e-3)


def test_linear_weiss_energy_matches_oracle(ref):
    assert W.weiss_M(linear(1 / 128), (0.0, 0.0), 1.0) == pytest.approx(ref["linear_M_r1"], abs=1e-3)
    assert ref["linear_M_r1"] == pytest.approx(4 / 3 - math.pi / 2, abs=1e-12)


def test_phase_split_of_weiss_energy_adds_up():
    f = linear(1 / 64)
    t = W.ball_terms(f, (0.0, 0.0), 0.7)
    assert t.I == pytest.approx(t.I_plus + t.I_minus + t.dirichlet_zero)
    M, Mp, Mm = W.weiss_M_phases(f, (0.0, 0.0), 0.7)
    assert M == pytest.approx(W.weiss_M(f, (0.0, 0.0), 0.7), abs=1e-12)
    # u = x2 has no zero phase of positive measure
    assert Mp + Mm == pytest.approx(M, abs=1e-9)


def test_weiss_report_of_a_homogeneous_solution_is_monotone():
    rep = W.weiss_report(sampled("A1", 1 / 64, 1.25), (0.0, 0.0))
    assert rep.monotone_violations == 0
    assert rep.density_estimate == pytest.approx(math.sqrt(3) / 3, abs=5e-3)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "r,I,J,M,K,M_plus,M_minus" and len(lines) == len(rep.radii) + 1
    assert rep.summary()["density_method"] in ("richardson", "smallest-radius")


# --------------------------------------------------------------- derivative


@pytest.mark.parametrize("name", ["A1", "LINEAR"])
def test_derivative_formula_matches_finite_differences(name):
    h = 1 / 128
    f = sampled("A1", h, 1.25) if name == "A1" else linear(h)
    chk = W.weiss_derivative_check(f, (0.0, 0.0), 1.5, (0.2, 0.4))
    assert chk.max_discrepancy <= max(1e-3, 5 * h)


def test_linear_derivative_is_the_surface_term():
    # for u = x2 and kappa = 3/2: dM/dr = 2 r^{-3} int_{dB_r} (grad u . nu - 3/2 u / r)^2 = pi / (2 r^2)
    chk = W.weiss_derivative_check(linear(1 / 128), (0.0, 0.0), 1.5, (0.2, 0.4), points=3)
    assert chk.formula == pytest.approx(math.pi / (2 * chk.radii ** 2), rel=1e-3)


def test_halfplane_gravity_term_matches_oracle(ref):
    f = ScalarField.from_function(lambda X, Y: np.where(Y < 0, -1.0, 0.0) + 0 * X, (-1.1, 1.1), (-1.1, 1.1),
                                  1 / 128)
    assert W.weiss_K(f, (0.0, 0.0), 1.0, 1.25) == pytest.approx(ref["halfplane_K_alpha1.25"], abs=1e-3)
    assert ref["halfplane_K_alpha1.25"] == pytest.approx(1 / 3, abs=1e-12)


def test_exponents_outside_the_admissible_range_are_rejected():
    f = linear(1 / 16)
    for kappa in (0.9, 1.6):
        with pytest.raises(InvalidExponent):
            W.weiss_M(f, (0.0, 0.0), 0.5, kappa)
    with pytest.raises(OutOfDomain):
        W.weiss_derivative_check(f, (0.0, 0.0), 1.5, (0.0, 0.3))


# ------------------------------------------------------------------ density


@settings(max_examples=60, deadline=None)
@given(L=st.floats(-2, 2), c=st.floats(0.1, 5), p=st.floats(0.6, 2.9), sign=st.sampled_from([-1, 1]))
def test_extrapolation_is_exact_on_power_law_tails(L, c, p, sign):
    r = 0.5 / math.sqrt(2) ** np.arange(6)
    v = L + sign * c * r ** p
    value, method, order, _ = W.extrapolate(r, v, tol=10.0)
    assert method == "richardson"
    assert order == pytest.approx(p, abs=1e-6)
    assert value == pytest.approx(L, abs=1e-8)


def test_extrapolation_falls_back_and_flags():
    value, method, order, flags = W.extrapolate([0.4, 0.2], [1.0, 2.0])
    assert (value, method, order) == (2.0, "smallest-radius", None)
    assert "too-few-radii" in flags
    value, method, _, flags = W.extrapolate([0.4, 0.2, 0.1], [1.0, 2.0, 1.0])
    assert method == "smallest-radius" and "no-limit" in flags


def test_log_radii_descend_and_fit():
    f = linear(1 / 64, 1.0)
    r = W.log_radii(f, (0.2, 0.0))
    assert r[0] == pytest.approx(0.8, rel=1e-6)
    assert np.all(np.diff(r) < 0)
    assert r[-1] >= 8 / 64 * (1 - 1e-9)
    assert np.allclose(r[:-1] / r[1:], math.sqrt(2))


@pytest.mark.parametrize("name, value", [("A1", math.sqrt(3) / 3), ("A4L", 0.5), ("A4R", 0.5)])
def test_density_limit_reproduces_catalog_densities(name, value):
    est = W.density_limit(sampled(name, 1 / 128), (0.0, 0.0))
    assert est.value == pytest.approx(value, abs=1e-3)
    assert est.converged
    assert est.radii[-1] >= W.DENSITY_FLOOR_CELLS / 128 * (1 - 1e-9)


def test_density_of_the_lower_half_plane():
    f = ScalarField.from_function(lambda X, Y: np.where(Y < 0, Y, 0.0), (-1, 1), (-1, 1), 1 / 128)
    assert W.density_limit(f, (0.0, 0.0)).value == pytest.approx(2 / 3, abs=1e-3)


def test_density_rejects_unknown_phase():
    with pytest.raises(ValueError):
        W.density_limit(linear(1 / 16), (0.0, 0.0), phase="neither")
