"""Energy-minimizing domain walls: descent, Newton polish, normalization, diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import OptimizeWarning, brentq, curve_fit
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, RealField2, centered_derivative, el_residual, energy, integrate, residual_sup
from .errors import ConvergenceError, CrossingError, DomainError
from .model import PotentialSpec
from .spectral import assemble_Lplus

TAIL_WINDOW = (1e-8, 1e-3)


def initial_guess(spec: PotentialSpec, grid: Grid) -> RealField2:
    t = np.tanh(grid.x)
    return RealField2.for_spec(spec, grid, spec.a * 0.5 * (1 + t), spec.b * 0.5 * (1 - t))


def gradient_flow(spec: PotentialSpec, U0: RealField2, dt: float, steps: int, callback=None) -> RealField2:
    """Explicit descent U <- U - dt * residual, rejecting any step that raises the energy.

    ``callback(step, U, E)`` is invoked after every accepted step.
    """
    h = U0.grid.h
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if not (0 < dt <= h**2 / 4 * (1 + 1e-12)):
        raise DomainError(f"explicit flow needs 0 < dt <= h^2/4 = {h**2 / 4:.3e}, got {dt}")
    U = U0
    E = energy(spec, U)
    floor = 1e-12 * h**2
    k = 0
    while k < steps:
        r = el_residual(spec, U)
        trial = U.with_stacked(U.stacked() - dt * r.stacked())
        E_trial = energy(spec, trial)
        if E_trial > E:
            dt *= 0.5
            if dt < floor:
                raise ConvergenceError("gradient flow time step underflow", residual_sup(spec, U))
            continue
        U, E = trial, E_trial
        k += 1
        if callback is not None:
            callback(k, U, E)
    return U


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------


def _jacobian(spec: PotentialSpec, U: RealField2) -> sp.csc_matrix:
    return assemble_Lplus(spec, U).matrix.tocsc()


def _derivative_stacked(U: RealField2) -> np.ndarray:
    h = U.grid.h
    d1 = centered_derivative(U.u1, (U.left_bc[0], U.right_bc[0]), h)
    d2 = centered_derivative(U.u2, (U.left_bc[1], U.right_bc[1]), h)
    return np.concatenate([d1, d2])


def _bordered_step(J: sp.csc_matrix, r: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = J.shape[0]
    col = sp.csc_matrix(c.reshape(n, 1))
    K = sp.bmat([[J, col], [col.T, None]], format="csc")
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        sol = spla.spsolve(K, np.concatenate([-r, [0.0]]))
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("bordered system is singular")
    return sol[:n]


def newton_iterate(
    spec: PotentialSpec,
    U: RealField2,
    tol: float = 1e-10,
    max_iter: int = 50,
    residual=None,
    jacobian=None,
    bordered: bool = True,
) -> tuple[RealField2, int, list[str]]:
    """Damped Newton on a residual map; the translation direction is removed by a border row.

    Returns the converged field, the iteration count and solver notes.
    """
    residual = residual or (lambda W: el_residual(spec, W).stacked())
    jacobian = jacobian or (lambda W: _jacobian(spec, W))
    notes: list[str] = []
    r = residual(U)
    res = float(np.abs(r).max())
    for it in range(max_iter + 1):
        if res <= tol:
            return U, it, notes
        if it == max_iter:
            break
        J = jacobian(U)
        try:
            if bordered:
                c = _derivative_stacked(U)
                delta = _bordered_step(J, r, c / np.linalg.norm(c))
            else:
                delta = spla.spsolve(J, -r)
        except (np.linalg.LinAlgError, spla.MatrixRankWarning, RuntimeError):
            # pin the crossing node instead of bordering with U'
            notes.append(f"iteration {it}: bordered solve failed, pinned-center fallback")
            n = U.grid.N
            c = np.zeros(2 * n)
            c[U.grid.center_index] = 1.0
            c[n + U.grid.center_index] = -1.0
            delta = _bordered_step(J, r, c / math.sqrt(2))
        base = U.stacked()
        norm0 = float(np.linalg.norm(r))
        t = 1.0
        while True:
            trial = U.with_stacked(base + t * delta)
            r_trial = residual(trial)
            if np.linalg.norm(r_trial) <= (1 - 1e-4 * t) * norm0 or t < 1e-6:
                break
            t *= 0.5
        if t < 1.0:
            notes.append(f"iteration {it}: damped step t={t:g}")
        U, r = trial, r_trial
        res = float(np.abs(r).max())
    raise ConvergenceError(f"Newton did not reach residual {tol:g} in {max_iter} iterations", res)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CenterNormalization:
    profile: RealField2
    shift: float
    mass_shift: float


def shift_field(U: RealField2, s: float) -> RealField2:
    """Returns x -> U(x + s) by cubic interpolation, continued by the boundary values."""
    x = U.grid.x_full
    out = []
    for f, lo, hi in zip(U.full(), U.left_bc, U.right_bc):
        spline = CubicSpline(x, f)
        xs = U.grid.x + s
        vals = spline(np.clip(xs, x[0], x[-1]))
        vals = np.where(xs < x[0], lo, np.where(xs > x[-1], hi, vals))
        out.append(vals)
    return RealField2(U.grid, out[0], out[1], U.left_bc, U.right_bc)


def crossing(U: RealField2) -> float:
    """Location of the single sign change of u1 - u2."""
    x = U.grid.x_full
    f1, f2 = U.full()
    d = f1 - f2
    s = np.sign(d)
    changes = np.nonzero(s[:-1] * s[1:] <= 0)[0]
    # a node exactly at zero shows up as two adjacent intervals
    groups = [i for j, i in enumerate(changes) if j == 0 or i != changes[j - 1] + 1]
    if len(groups) != 1:
        raise CrossingError(f"u1 - u2 must change sign exactly once, found {len(groups)} crossings")
    i = groups[0]
    if d[i] == 0.0:
        return float(x[i])
    spline = CubicSpline(x, d)
    return float(brentq(spline, x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))


def mass_functional(spec: PotentialSpec, U: RealField2) -> float:
    """m(U) = int (sqrt(g11) u1^2 + sqrt(g22) u2^2 - mu) dx."""
    w1, w2, mu = spec.mass_weights
    f1, f2 = U.full()
    d = w1 * f1**2 + w2 * f2**2 - mu
    return integrate(d[1:-1], U.grid, (d[0], d[-1]))


def mass_center(spec: PotentialSpec, U: RealField2) -> float:
    w1, w2, mu = spec.mass_weights
    f1, f2 = U.full()
    d = U.grid.x_full * (w1 * f1**2 + w2 * f2**2 - mu)
    return integrate(d[1:-1], U.grid, (d[0], d[-1])) / mass_functional(spec, U)


def normalize_center(U: RealField2, spec: PotentialSpec | None = None) -> CenterNormalization:
    """Translate so the u1 = u2 crossing sits at x = 0.

    The mass-center shift is reported for the normalized profile when a spec
    is given (it needs the mass weights), otherwise NaN.
    """
    c = crossing(U)
    V = U if c == 0.0 else shift_field(U, c)
    mass = mass_center(spec, V) if spec is not None else float("nan")
    return CenterNormalization(V, c, mass)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def fit_decay(x: np.ndarray, dev: np.ndarray, window=TAIL_WINDOW, linear_prefactor: bool = False) -> tuple[float, int]:
    """Rate k of dev ~ C exp(-k |x|) by log-linear least squares on the window.

    With ``linear_prefactor`` the model is (A + B|x|) exp(-k|x|), the form a
    tail takes when its forcing decays at the same rate as the homogeneous
    solution. Returns (k, number of nodes used); k is NaN when fewer than 5
    nodes qualify.
    """
    dev = np.abs(dev)
    sel = (dev >= window[0]) & (dev <= window[1])
    if sel.sum() < 5:
        return float("nan"), int(sel.sum())
    xs, ys = np.abs(x[sel]), np.log(dev[sel])
    slope, icpt = np.polyfit(xs, ys, 1)
    if not linear_prefactor:
        return float(-slope), int(sel.sum())

    def model(t, c, B, k):
        return c + np.log(np.abs(1 + B * t)) - k * t

    with warnings.catch_warnings():
        # the covariance is unused; exact data makes it singular
        warnings.simplefilter("ignore", OptimizeWarning)
        p, _ = curve_fit(model, xs, ys, p0=[icpt, 0.1, -slope], maxfev=20000)
    return float(p[2]), int(sel.sum())


def saturating_expected(spec: PotentialSpec) -> dict[str, tuple[float, bool]]:
    """Expected rate of the non-vanishing component at each end and whether it is resonant.

    Near a = (a, 0) the deviation a - u1 solves a linear equation with rate
    kappa_sat forced by u2^2, which decays at 2 kappa_van; the slower one wins
    and equal rates produce a linear prefactor.
    """
    r = spec.decay_rates()
    out = {}
    for end, comp in (("a", "u1_right"), ("b", "u2_left")):
        sat, forced = r[f"{end}_saturating"], 2 * r[f"{end}_vanishing"]
        out[comp] = (min(sat, forced), abs(sat - forced) <= 0.02 * sat)
    return out


def tail_rates(spec: PotentialSpec, U: RealField2) -> dict[str, float]:
    """Fitted exponential rates of each component toward its equilibrium value on each side.

    Nodes closer to +-L than 5 / (slowest linear rate) are dropped: the
    Dirichlet truncation bends the tail there.
    """
    x = U.grid.x
    slow = min(spec.decay_rates().values())
    keep = np.abs(x) <= U.grid.L - 5.0 / slow if slow > 0 else np.ones_like(x, dtype=bool)
    left, right = (x < 0) & keep, (x > 0) & keep
    a, b = spec.a, spec.b
    u1, u2 = U.u1, U.u2
    resonant = {k: v[1] for k, v in saturating_expected(spec).items()}
    out = {
        "u1_left": fit_decay(x[left], u1[left])[0],
        "u2_left": fit_decay(x[left], u2[left] - b, linear_prefactor=resonant["u2_left"])[0],
        "u1_right": fit_decay(x[right], u1[right] - a, linear_prefactor=resonant["u1_right"])[0],
        "u2_right": fit_decay(x[right], u2[right])[0],
        "left": fit_decay(x[left], np.hypot(u1[left], u2[left] - b))[0],
        "right": fit_decay(x[right], np.hypot(u1[right] - a, u2[right]))[0],
    }
    return out


def symmetry_defect(spec: PotentialSpec, U: RealField2) -> float:
    """max |u2(x) - u1(-x)|, NaN when the potential has no swap symmetry."""
    if not spec.is_swap_symmetric:
        return float("nan")
    return float(np.abs(U.u2 - U.u1[::-1]).max())


@dataclass
class WallReport:
    profile: RealField2
    energy: float
    residual_sup: float
    center: float
    decay_left: float
    decay_right: float
    monotone: tuple[bool, bool]
    symmetric_defect: float
    center_value: float = float("nan")
    mass_center: float = float("nan")
    tail_rates: dict = field(default_factory=dict)
    iterations: int = 0
    initial_guess: str = "tanh"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        g = self.profile.grid
        return {
            "grid": {"L": g.L, "N": g.N, "h": g.h},
            "energy": self.energy,
            "residual_sup": self.residual_sup,
            "center": self.center,
            "center_value": self.center_value,
            "mass_center": self.mass_center,
            "decay_left": self.decay_left,
            "decay_right": self.decay_right,
            "tail_rates": dict(self.tail_rates),
            "monotone": list(self.monotone),
            "symmetric_defect": self.symmetric_defect,
            "iterations": self.iterations,
            "initial_guess": self.initial_guess,
            "notes": list(self.notes),
        }


def _monotone(U: RealField2, slack: float = 1e-12) -> tuple[bool, bool]:
    f1, f2 = U.full()
    return bool(np.all(np.diff(f1) >= -slack)), bool(np.all(np.diff(f2) <= slack))


def diagnose(spec: PotentialSpec, U: RealField2, iterations: int = 0, notes=None, guess: str = "tanh") -> WallReport:
    c = crossing(U)
    x = U.grid.x_full
    f1, _ = U.full()
    rates = tail_rates(spec, U)
    return WallReport(
        profile=U,
        energy=energy(spec, U),
        residual_sup=residual_sup(spec, U),
        center=c,
        decay_left=rates["u1_left"],
        decay_right=rates["right"],
        monotone=_monotone(U),
        symmetric_defect=symmetry_defect(spec, U),
        center_value=float(CubicSpline(x, f1)(c)),
        mass_center=mass_center(spec, U),
        tail_rates=rates,
        iterations=iterations,
        initial_guess=guess,
        notes=list(notes or []),
    )


def newton_polish(spec: PotentialSpec, U: RealField2, tol: float = 1e-10, max_iter: int = 50) -> WallReport:
    """Damped Newton with the Jacobian L+ bordered by the discrete U'."""
    V, iters, notes = newton_iterate(spec, U, tol, max_iter)
    return diagnose(spec, V, iters, notes)


def solve_wall(
    spec: PotentialSpec,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 50,
    flow_steps: int = 200,
    center: bool = True,
) -> WallReport:
    """Tanh guess, a short gradient flow, Newton polish and (optionally) crossing normalization.

    Centering moves the profile by interpolation, so it is followed by a
    second polish to restore the residual.
    """
    U = initial_guess(spec, grid)
    if flow_steps:
        U = gradient_flow(spec, U, grid.h**2 / 4, flow_steps)
    report = newton_polish(spec, U, tol, max_iter)
    if center and abs(report.center) > 0.0:
        shifted = normalize_center(report.profile).profile
        V, iters, notes = newton_iterate(spec, shifted, tol, max_iter)
        report = diagnose(spec, V, report.iterations + iters, report.notes + notes)
    return report


# ---------------------------------------------------------------------------
# Property report
# ---------------------------------------------------------------------------


@dataclass
class PropertyReport:
    nonnegative: bool
    min_value: float
    ellipse_max: float
    ellipse_ok: bool
    monotone: tuple[bool, bool]
    symmetric_defect: float
    decay_left: float
    decay_left_expected: float
    decay_right: float
    decay_right_expected: float
    saturating_rates: dict
    saturating_expected: dict
    center_value: float
    center_value_reference: float

    def relative_error(self, which: str) -> float:
        got, want = getattr(self, which), getattr(self, which + "_expected")
        return abs(got - want) / want

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def verify_wall_properties(spec: PotentialSpec, report: WallReport) -> PropertyReport:
    """Nodewise positivity, the ellipse bound, monotonicity, symmetry and tail rates.

    Expected rates come from linearizing at each equilibrium: a vanishing
    component decays at sqrt(dF_j) there; the approach of U to an equilibrium
    is governed by the slower of its two linear rates.
    """
    U = report.profile
    rates = spec.decay_rates()
    a, b = spec.a, spec.b
    ellipse = U.u1**2 / a**2 + U.u2**2 / b**2
    lo = float(min(U.u1.min(), U.u2.min()))
    center_ref = 1 / math.sqrt(1 + spec.gamma) if spec.kind == "symmetric-cubic" else float("nan")
    return PropertyReport(
        nonnegative=lo >= -1e-12,
        min_value=lo,
        ellipse_max=float(ellipse.max()),
        ellipse_ok=bool(ellipse.max() <= 1 + 1e-10),
        monotone=report.monotone,
        symmetric_defect=report.symmetric_defect,
        decay_left=report.decay_left,
        decay_left_expected=rates["b_vanishing"],
        decay_right=report.decay_right,
        decay_right_expected=min(rates["a_saturating"], rates["a_vanishing"]),
        saturating_rates={"u1_right": report.tail_rates["u1_right"], "u2_left": report.tail_rates["u2_left"]},
        saturating_expected={k: v[0] for k, v in saturating_expected(spec).items()},
        center_value=report.center_value,
        center_value_reference=center_ref,
    )
