"""Quantitative acceptance battery, one verdict line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are repeated in the
terminal summary) or ``python3 tests/test_acceptance.py``. Failures are real:
tolerances are pinned and never relaxed to make a check pass.
"""

import math
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, wall_report
from wallforge.discretization import Grid
from wallforge.dynamics import evolve, orbital_stability_experiment
from wallforge.model import PotentialSpec, exact_wall
from wallforge.pinning import (
    LocalizedPotential,
    compute_sigma,
    find_x0,
    first_order_correction,
    pinned_spectrum,
    sigma_consistency,
    solve_pinned_wall,
)
from wallforge.profile_solver import solve_wall, verify_wall_properties
from wallforge.spectral import (
    assemble_Lminus,
    assemble_Lplus,
    coarse_crosscheck,
    quadratic_form_identity_check,
    rayleigh_minimum,
    smallest_eigs,
    stability_spectrum,
)

GAMMAS = (1.5, 3.0, 5.0)


def verdict(label: str, checks: dict[str, tuple[bool, str]]):
    """Record and print one line, then fail with the list of broken checks."""
    ok = all(passed for passed, _ in checks.values())
    detail = "; ".join(f"{name} {text}" + ("" if passed else " [X]") for name, (passed, text) in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    bad = [name for name, (passed, _) in checks.items() if not passed]
    assert not bad, f"criterion {label} failed: {', '.join(bad)}"


def test_criterion_1_exact_solution():
    spec = PotentialSpec.symmetric_cubic(3.0)
    grid = Grid(20.0, 4095)
    t0 = time.perf_counter()
    rep = solve_wall(spec, grid)
    elapsed = time.perf_counter() - t0
    e1, e2 = exact_wall(spec, grid.x)
    err = max(np.abs(rep.profile.u1 - e1).max(), np.abs(rep.profile.u2 - e2).max())
    dE = rep.energy - math.sqrt(2) / 3
    verdict("1", {
        "sup error": (err <= 1e-6, f"{err:.3e} <= 1e-6"),
        "energy error": (abs(dE) <= 1e-6, f"{dE:.3e}"),
        "runtime": (elapsed <= 10.0, f"{elapsed:.2f}s <= 10s"),
    })


def test_criterion_2_center_value_gamma3():
    _, rep = wall_report(3.0)
    d = rep.center_value - 0.5
    verdict("2 (gamma=3)", {"u1(0)-0.5": (abs(d) <= 1e-6, f"{d:.2e}")})


def test_criterion_2_center_value_other_gammas():
    checks = {}
    for gamma in (1.5, 2.0, 5.0):
        _, rep = wall_report(gamma)
        target = 1 / math.sqrt(1 + gamma)
        d = rep.center_value - target
        checks[f"gamma={gamma}"] = (abs(d) <= 1e-3, f"u1(0)={rep.center_value:.6f} vs {target:.6f}")
    verdict("2 (gamma in 1.5,2,5)", checks)


def test_criterion_3_decay_rates():
    checks = {}
    for gamma in GAMMAS:
        spec, rep = wall_report(gamma)
        p = verify_wall_properties(spec, rep)
        vanishing = abs(p.decay_left / math.sqrt(gamma - 1) - 1)
        checks[f"gamma={gamma} vanishing"] = (vanishing <= 0.02, f"{p.decay_left:.4f} vs {math.sqrt(gamma - 1):.4f}")
        sat = p.saturating_rates["u1_right"]
        want = p.saturating_expected["u1_right"]
        checks[f"gamma={gamma} saturating"] = (abs(sat / want - 1) <= 0.02, f"{sat:.4f} vs {want:.4f}")
    verdict("3", checks)


def test_criterion_4_ellipse_bound():
    checks = {}
    for params in [(1, 1, 2, 1), (1, 2, 3, 1), (2, 1, 2, 0.5), (0.5, 3, 2.5, 2), (1.5, 1.2, 4, 1)]:
        spec = PotentialSpec.general_cubic(*params)
        rep = solve_wall(spec, Grid.for_spec(spec, h=0.02))
        m = verify_wall_properties(spec, rep).ellipse_max
        checks[str(params)] = (m <= 1 + 1e-10, f"max {m:.12f}")
    verdict("4", checks)


def _identity_trials(n: int, seed: int = 2024):
    spec, rep = wall_report(3.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        c0 = rng.uniform(-1, 1, 4)
        amp = rng.choice([-1, 1], 4) * rng.uniform(0.5, 1.5, 4)
        w = rng.uniform(0.75, 3.0, 4)
        x0 = rng.uniform(-2, 2, 4)
        f = [lambda x, k=k: c0[k] + amp[k] * np.exp(-(((x - x0[k]) / w[k]) ** 2)) for k in range(4)]
        d = quadratic_form_identity_check(spec, rep.profile, A=(f[0], f[1]), B=(f[2], f[3]))
        worst = max(worst, d.plus_relative, d.minus_relative)
    return worst


def test_criterion_5_spectral_structure():
    checks = {}
    for gamma in GAMMAS:
        spec, rep = wall_report(gamma)
        r = stability_spectrum(spec, rep.profile)
        lam0, gap, lm = r.lplus_eigs[0], r.lplus_eigs[1] - r.lplus_eigs[0], r.lminus_eigs[0]
        checks[f"gamma={gamma} lambda0"] = (abs(lam0) <= 1e-4, f"{lam0:.1e}")
        checks[f"gamma={gamma} overlap"] = (r.zero_mode_overlap >= 0.999, f"{r.zero_mode_overlap:.6f}")
        checks[f"gamma={gamma} gap"] = (gap >= 0.1, f"{gap:.4f}")
        checks[f"gamma={gamma} L- min"] = (lm >= -1e-4, f"{lm:.2e}")
    worst = _identity_trials(20)
    checks["identities (20 trials)"] = (worst <= 1e-3, f"worst rel {worst:.2e}")
    verdict("5", checks)


def test_criterion_6_rayleigh_minimum():
    checks = {}
    coarse = {1.5: (14.0, 359), 3.0: (12.0, 299), 5.0: (10.0, 255)}
    for gamma in GAMMAS:
        spec, rep = wall_report(gamma)
        m = rayleigh_minimum(spec, rep.profile)
        checks[f"gamma={gamma} min"] = (m >= -1e-6, f"{m:.3e}")
        cspec, crep = wall_report(gamma, *coarse[gamma])
        ray, direct = coarse_crosscheck(cspec, crep.profile)
        checks[f"gamma={gamma} crosscheck"] = (abs(ray - direct) <= 1e-4, f"|{ray:.4e}-{direct:.4e}|")
    verdict("6", checks)


@pytest.mark.slow
def test_criterion_7_dynamics():
    spec, rep = wall_report(3.0)
    U = rep.profile
    t0 = time.perf_counter()
    tr = evolve(spec, U.to_complex(), 50.0, 1e-3, wall=U, output_every=1.0)
    m1, m2 = tr.final.moduli()
    dev = max(np.abs(m1 - U.u1).max(), np.abs(m2 - U.u2).max())
    orb = orbital_stability_experiment(spec, U, 1e-2, T=50.0, dt=1e-3, output_every=0.5)
    elapsed = time.perf_counter() - t0
    verdict("7", {
        "stationary moduli": (dev <= 1e-6, f"{dev:.2e}"),
        "stationary energy": (tr.energy_drift <= 1e-8, f"{tr.energy_drift:.1e}"),
        "rho sup": (orb.rho_sup <= 5e-2, f"{orb.rho_sup:.4e} <= 5e-2"),
        "alpha bound": (orb.passed and orb.C_fit <= orb.C_max, f"fitted C={orb.C_fit:.3f} <= {orb.C_max:g}"),
        "runtime": (elapsed <= 300.0, f"{elapsed:.0f}s <= 300s"),
    })


def test_criterion_8_pinning():
    spec, rep = wall_report(3.0, 26.0, 5199)
    U = rep.profile
    checks = {}
    for b in (0.5, 1.0, 2.0):
        for a in (1.0, -1.0):
            V = LocalizedPotential.sech2(a, b)
            x0 = find_x0(V, U)
            sig = compute_sigma(V, x0, U).value
            checks[f"a={a:+g},b={b} x0"] = (abs(x0) <= 1e-10, f"{x0:.1e}")
            checks[f"a={a:+g},b={b} sign"] = (np.sign(sig) == np.sign(a), f"sigma {sig:+.4e}")
    V = LocalizedPotential.sech2(1.0, 1.0)
    sc = sigma_consistency(spec, V, U, first_order_correction(spec, V, U))
    checks["sigma forms"] = (sc.relative_defect <= 1e-4, f"rel {sc.relative_defect:.1e}")
    for a in (1.0, -1.0):
        V = LocalizedPotential.sech2(a, 1.0)
        r = pinned_spectrum(spec, V, 1e-3, solve_pinned_wall(spec, V, 1e-3, U))
        want = "stable" if a > 0 else "unstable"
        neg = 0 if a > 0 else 1
        checks[f"a={a:+g} persistence"] = (abs(r.persistence_ratio / 2 - 1) <= 0.2, f"ratio {r.persistence_ratio:.4f}")
        ratio = r.lplus_min_eig / r.predicted_shift
        checks[f"a={a:+g} lambda_min"] = (abs(ratio - 1) <= 0.1, f"ratio {ratio:.5f}")
        checks[f"a={a:+g} verdict"] = (r.verdict == want and r.negative_count == neg, f"{r.verdict}, {r.negative_count} neg")
    verdict("8", checks)


def test_criterion_9_refinement():
    def ratio(v):
        return (v[0] - v[1]) / (v[1] - v[2])

    checks = {}
    for gamma in (2.0, 5.0):
        spec = PotentialSpec.symmetric_cubic(gamma)
        grid = Grid(16.0, 399)
        E, lp, lm = [], [], []
        for _ in range(3):
            r = solve_wall(spec, grid)
            E.append(r.energy)
            lp.append(smallest_eigs(assemble_Lplus(spec, r.profile), 3).values[1])
            lm.append(smallest_eigs(assemble_Lminus(spec, r.profile), 3).values[0])
            grid = grid.refined()
        for name, v in (("energy", E), ("L+ lambda1", lp), ("L- lambda0", lm)):
            q = ratio(v)
            checks[f"gamma={gamma} {name}"] = (abs(q - 4) <= 0.5, f"{q:.3f}")
    verdict("9", checks)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
