import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import wall_report
from wallforge.spectral import (
    assemble_Lminus,
    assemble_Lplus,
    coarse_crosscheck,
    denominator_ratios,
    quadratic_form_identity_check,
    rayleigh_minimum,
    smallest_eigs,
    stability_spectrum,
    zero_mode,
)


@pytest.fixture(scope="module")
def tiny():
    return wall_report(3.0, 8.0, 255)


def test_operators_are_symmetric_and_banded(coarse3):
    spec, rep = coarse3
    N = rep.profile.grid.N
    # stacked layout: L+ couples u1 and u2 through an offset-N diagonal, L- does not
    for M, band in ((assemble_Lplus(spec, rep.profile), N), (assemble_Lminus(spec, rep.profile), 1)):
        assert M.symmetry_defect() <= 1e-14
        assert M.bandwidth() == band
        v = np.random.default_rng(0).standard_normal(M.size)
        assert np.allclose(M.apply(v), M.dense() @ v)


def test_smallest_eigs_match_dense(tiny):
    spec, rep = tiny
    for M in (assemble_Lplus(spec, rep.profile), assemble_Lminus(spec, rep.profile)):
        dense = np.linalg.eigvalsh(M.dense())[:5]
        got = smallest_eigs(M, 5)
        assert np.allclose(got.values, dense, atol=1e-9)
        assert got.residuals.max() <= 1e-8


def test_translation_mode(coarse3):
    spec, rep = coarse3
    ep = smallest_eigs(assemble_Lplus(spec, rep.profile), 3)
    assert abs(ep.values[0]) <= 1e-6
    assert abs(zero_mode(rep.profile) @ ep.vectors[:, 0]) >= 0.999


def test_spectral_report_gamma3(wall3):
    spec, rep = wall3
    r = stability_spectrum(spec, rep.profile)
    assert abs(r.lplus_eigs[0]) <= 1e-8
    assert r.lplus_eigs[1] == pytest.approx(1.5, abs=1e-4)  # internal mode of the tanh wall
    assert r.lminus_eigs[0] >= 0  # Dirichlet truncation lifts the gauge modes slightly
    assert r.essential_edge == pytest.approx(2.0)
    assert r.verdict == "stable" and not r.flags


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=8, max_size=8), st.floats(0.75, 3.0), st.floats(-2.0, 2.0))
def test_quadratic_form_identities_random_trials(c, w, x0):
    # both sides are second-order discretizations; the gap scales like (h / w)^2
    spec, rep = wall_report(3.0)

    def g(k):
        return lambda x: c[k] + c[k + 1] * np.exp(-(((x - x0) / w) ** 2))

    d = quadratic_form_identity_check(spec, rep.profile, A=(g(0), g(2)), B=(g(4), g(6)))
    # near-constant multipliers make both sides vanish up to a ~1e-7 truncation flux
    assert d.plus_relative <= 1e-3 or abs(d.plus_direct - d.plus_identity) <= 1e-6
    assert d.minus_relative <= 1e-3 or abs(d.minus_direct - d.minus_identity) <= 1e-6


def test_constant_multipliers_give_zero_forms(coarse3):
    # A = 1 gives <U', L+ U'> = 0; B = 1 gives <U, L- U> = 0 up to the truncation
    spec, rep = coarse3
    d = quadratic_form_identity_check(spec, rep.profile)
    assert abs(d.plus_direct) <= 1e-8 and d.plus_identity == 0.0
    assert abs(d.minus_direct) <= 1e-6


def test_identity_holds_for_general_cubic():
    from wallforge.model import PotentialSpec
    from wallforge.profile_solver import solve_wall
    from wallforge.discretization import Grid

    spec = PotentialSpec.general_cubic(1.0, 2.0, 3.0, 1.0)
    U = solve_wall(spec, Grid.for_spec(spec, h=0.01)).profile
    d = quadratic_form_identity_check(
        spec, U, A=(lambda x: 1 + np.exp(-x * x), lambda x: 1 - 0.5 * np.exp(-x * x)), B=(np.cos, np.sin)
    )
    assert d.plus_relative <= 1e-3 and d.minus_relative <= 1e-3


def test_denominator_is_positive(coarse3):
    spec, rep = coarse3
    r = denominator_ratios(spec, rep.profile, n=10)
    assert r.min() > 0


@pytest.mark.parametrize("gamma", [1.5, 5.0])
def test_rayleigh_minimum_crosschecked(gamma):
    spec, rep = wall_report(gamma, 10.0 if gamma > 2 else 14.0, 255 if gamma > 2 else 359)
    ray, direct = coarse_crosscheck(spec, rep.profile)
    assert ray >= -1e-6
    assert ray == pytest.approx(direct, abs=1e-4)


def test_rayleigh_minimum_default_grid(wall3):
    spec, rep = wall3
    assert rayleigh_minimum(spec, rep.profile) >= -1e-6
