"""The independent oracles reproduce their frozen values and the closed forms they stand for."""

import math

import pytest

import oracles as O


def test_frozen_values_are_reproduced(ref):
    fresh = O.compute_all()
    assert fresh.keys() == ref.keys()
    for k, v in ref.items():
        assert fresh[k] == pytest.approx(v, rel=1e-12, abs=1e-14), k


@pytest.mark.parametrize("key, exact", [
    ("density_stokes", math.sqrt(3) / 3),
    ("density_asymmetric_right", 0.5),
    ("density_asymmetric_left", 0.5),
    ("density_halfplane", 2 / 3),
    ("linear_M_r1", 4 / 3 - math.pi / 2),
    ("halfplane_K_alpha1.25", 1 / 3),
    ("stokes_V_r1", 9 * (2 - math.sqrt(3)) / (2 * math.pi)),
    ("linear_energy_square", 6.0),
])
def test_oracles_agree_with_closed_forms(ref, key, exact):
    assert ref[key] == pytest.approx(exact, abs=1e-12)


def test_stokes_energy_oracle(ref):
    # finite-difference gradients inside the oracle limit agreement to ~1e-9
    assert ref["stokes_I_r1"] == pytest.approx(math.pi / 9 + math.sqrt(3) / 3, abs=1e-8)


@pytest.mark.parametrize("key, exact", [("stokes_D_r0.5", 1.5), ("w2_D_r0.5", 2.0), ("w3_D_r0.5", 3.0)])
def test_frequency_oracle_recovers_degree(ref, key, exact):
    assert ref[key] == pytest.approx(exact, abs=1e-7)


def test_quadratic_homogeneity_oracle_shrinks_fourfold(ref):
    ratio = ref["quadratic_homogeneity_quarter_sixteenth"] / ref["quadratic_homogeneity_sixteenth_64th"]
    assert 3.8 < ratio < 4.1


def test_cusp_area_oracle_matches_small_radius_expansion(ref):
    # 2 r^3 / 3 over pi r^2 / 2 while the parabola stays inside the disk
    assert ref["cusp_chi_r0.0625"] == pytest.approx(4 * 0.0625 / (3 * math.pi), rel=1e-9)
    # at r = 1/4 the disk clips the region, so the share falls below the expansion
    assert ref["cusp_chi_r0.25"] < 4 * 0.25 / (3 * math.pi)
