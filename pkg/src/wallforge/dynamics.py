"""Time integration of the coupled flow, modulation fits and center-of-mass diagnostics.

The flow is i psi_j,t = -psi_j'' + (eps V + dF_j(|psi1|^2, |psi2|^2)) psi_j. Because
F carries the chemical potential, the real wall is a stationary solution
without any rotating phase.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .discretization import ComplexField2, Grid, RealField2, energy, integrate, rho_A
from .errors import DomainError, LeftOrbitError, UsageError
from .model import PotentialSpec
from .profile_solver import mass_functional

TRACE_COLUMNS = ["t", "alpha", "theta1", "theta2", "rho", "energy", "G"]


# ---------------------------------------------------------------------------
# Cutoff and center of mass
# ---------------------------------------------------------------------------


def cutoff(x: np.ndarray, R: float) -> np.ndarray:
    """C^2 bump: 1 on |x| <= R, 0 on |x| >= 2R, quintic smoothstep in between."""
    t = np.clip((np.abs(x) - R) / R, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def cutoff_derivative(x: np.ndarray, R: float) -> np.ndarray:
    t = np.clip((np.abs(x) - R) / R, 0.0, 1.0)
    return -30 * t**2 * (1 - t) ** 2 / R * np.sign(x)


def _density(spec: PotentialSpec, m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    w1, w2, mu = spec.mass_weights
    return w1 * m1**2 + w2 * m2**2 - mu


def mass_center_G(
    spec: PotentialSpec,
    psi: ComplexField2 | RealField2,
    a_shift: float,
    R: float,
    m_ref: float,
) -> float:
    """(1/m) int g_R(x) x rho(x - a_shift) dx with rho the weighted density |psi|^2 - mu.

    ``m_ref`` is m(U) of the reference wall. The shifted density is obtained by
    cubic interpolation and continued by zero, its value at both equilibria.
    """
    grid = psi.grid
    if not (0 < R <= grid.L / 2):
        raise UsageError(f"cutoff radius must satisfy 0 < R <= L/2 (R={R}, L={grid.L})")
    f1, f2 = psi.full()
    dens = _density(spec, np.abs(f1), np.abs(f2))
    x = grid.x_full
    if a_shift != 0.0:
        xs = x - a_shift
        vals = CubicSpline(x, dens)(np.clip(xs, x[0], x[-1]))
        dens = np.where((xs < x[0]) | (xs > x[-1]), 0.0, vals)
    integrand = cutoff(x, R) * x * dens
    return integrate(integrand[1:-1], grid, (integrand[0], integrand[-1])) / m_ref


def G_numerator(spec: PotentialSpec, psi: ComplexField2, R: float) -> float:
    f1, f2 = psi.full()
    x = psi.grid.x_full
    integrand = cutoff(x, R) * x * _density(spec, np.abs(f1), np.abs(f2))
    return integrate(integrand[1:-1], psi.grid, (integrand[0], integrand[-1]))


def momentum(spec: PotentialSpec, psi: ComplexField2, R: float) -> float:
    """2 int sum_j w_j <i psi_j, psi_j'> (x g_R)' dx with the edge flux Im(conj(psi_i) psi_{i+1}) / h.

    This is exactly the time derivative of ``G_numerator`` under the
    semi-discrete flow, by summation by parts.
    """
    w1, w2, _ = spec.mass_weights
    h = psi.grid.h
    x = psi.grid.x_full
    phi = x * cutoff(x, R)
    dphi = np.diff(phi) / h
    total = 0.0
    for w, f in zip((w1, w2), psi.full()):
        flux = np.imag(np.conj(f[:-1]) * f[1:]) / h
        total += w * float(np.sum(flux * dphi))
    return 2.0 * h * total


# ---------------------------------------------------------------------------
# Modulation fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModulationFit:
    alpha: float
    theta1: float
    theta2: float
    rho: float


def _wrap(theta: float) -> float:
    return float((theta + math.pi) % (2 * math.pi) - math.pi)


class WallOrbit:
    """Evaluates the modulated wall (e^{i th1} u1(x + alpha), e^{i th2} u2(x + alpha)) on a grid.

    A uniform shift moves every node by the same whole number of intervals plus
    the same fraction, so the cubic spline pieces are evaluated by slicing.
    """

    def __init__(self, wall: RealField2):
        self.wall = wall
        x = wall.grid.x_full
        self._x = x
        self._splines = [CubicSpline(x, f) for f in wall.full()]
        self._coef = [sp.c for sp in self._splines]  # (4, N + 1): piece k on [x_k, x_{k+1}]

    def shifted(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        grid = self.wall.grid
        N, h = grid.N, grid.h
        k, frac = divmod(alpha / h, 1.0)
        k = int(k)
        t = frac * h
        # interior node j (full index 1..N) lands in spline piece j + k, valid for 0..N
        j0, j1 = max(1, -k), min(N, N - k)
        out = []
        for c, left, right in zip(self._coef, self.wall.left_bc, self.wall.right_bc):
            vals = np.empty(N)
            vals[: max(0, j0 - 1)] = left
            vals[j1:] = right
            if j1 >= j0:
                p = slice(j0 + k, j1 + k + 1)
                vals[j0 - 1 : j1] = ((c[0, p] * t + c[1, p]) * t + c[2, p]) * t + c[3, p]
            out.append(vals)
        return out[0], out[1]

    def field(self, alpha: float, theta1: float, theta2: float) -> ComplexField2:
        u1, u2 = self.shifted(alpha)
        e1, e2 = np.exp(1j * theta1), np.exp(1j * theta2)
        w = self.wall
        return ComplexField2(
            w.grid, e1 * u1, e2 * u2, (e1 * w.left_bc[0], e2 * w.left_bc[1]), (e1 * w.right_bc[0], e2 * w.right_bc[1])
        )


class _RhoEvaluator:
    """rho_A(psi, modulated wall) with everything that does not depend on the modulation precomputed.

    Everything is done in real arithmetic on the edge differences, so each
    evaluation costs a handful of vector operations.
    """

    def __init__(self, psi: ComplexField2, orbit: WallOrbit, A: float):
        grid = psi.grid
        if psi.grid != orbit.wall.grid:
            raise UsageError("rho_A needs both fields on the same grid")
        if not (0 < A <= grid.L):
            raise UsageError(f"rho_A requires 0 < A <= L (A={A}, L={grid.L})")
        self.h = grid.h
        self.orbit = orbit
        w = orbit.wall
        self.bc = [(w.left_bc[0], w.right_bc[0]), (w.left_bc[1], w.right_bc[1])]
        self.inner = np.nonzero(np.abs(grid.x) <= A)[0]
        self.comp = []
        for f in psi.full():
            df = np.diff(f)
            self.comp.append(
                {
                    "dfr": df.real.copy(),
                    "dfi": df.imag.copy(),
                    "m": np.abs(f),
                    "f_in": f[1:-1][self.inner],
                }
            )

    def __call__(self, alpha: float, theta1: float, theta2: float) -> float:
        h = self.h
        total = 0.0
        for u, (lo, hi), th, c in zip(self.orbit.shifted(alpha), self.bc, (theta1, theta2), self.comp):
            du = np.empty(len(u) + 1)
            du[0] = u[0] - lo
            du[1:-1] = u[1:] - u[:-1]
            du[-1] = hi - u[-1]
            cos, sin = math.cos(th), math.sin(th)
            dr = c["dfr"] - cos * du
            di = c["dfi"] - sin * du
            total += math.sqrt((dr @ dr + di @ di) / h)
            m = c["m"]
            dm = m[1:-1] - np.abs(u)
            e0, e1 = m[0] - abs(lo), m[-1] - abs(hi)
            total += math.sqrt(max(h * (dm @ dm + 0.5 * (e0 * e0 + e1 * e1)), 0.0))
            if len(self.inner):
                total += float(np.abs(c["f_in"] - complex(cos, sin) * u[self.inner]).max())
        return total


def modulation_fit(
    psi: ComplexField2,
    wall: RealField2,
    A: float = 5.0,
    spec: PotentialSpec | None = None,
    alpha0: float | None = None,
    cap: float = 0.5,
    bracket: float = 1.0,
    sweeps: int = 30,
    tol: float = 1e-12,
    rtol: float = 1e-10,
    orbit: WallOrbit | None = None,
) -> ModulationFit:
    """Coordinate descent on rho_A over (alpha, theta1, theta2).

    alpha is seeded by minus the cutoff center of mass (the wall moved to the
    left by alpha has center -alpha) unless ``alpha0`` is given; the phases
    are seeded by the phase of <u_j(. + alpha), psi_j>. Sweeps stop when the
    parameters move less than 10 tol or rho_A improves by less than rtol
    relative (the sup term makes rho_A kinked, where coordinate descent
    otherwise creeps).
    """
    orbit = orbit or WallOrbit(wall)
    grid = psi.grid
    if alpha0 is None:
        if spec is None:
            raise UsageError("modulation_fit needs spec or alpha0 to seed the translation")
        alpha0 = -mass_center_G(spec, psi, 0.0, grid.L / 3, mass_functional(spec, wall))

    def phases(alpha):
        u1, u2 = orbit.shifted(alpha)
        return (
            float(np.angle(np.sum(u1 * psi.psi1))) if np.any(psi.psi1) else 0.0,
            float(np.angle(np.sum(u2 * psi.psi2))) if np.any(psi.psi2) else 0.0,
        )

    dist = _RhoEvaluator(psi, orbit, A)

    def line_min(fun, center, f_center, half, xtol=tol):
        # downhill bracketing from (center, center + half), then Brent; never accept a worse point
        try:
            res = minimize_scalar(fun, bracket=(center, center + half), method="brent", options={"xtol": xtol})
        except (RuntimeError, ValueError):
            res = minimize_scalar(
                fun, bounds=(center - 2 * half, center + 2 * half), method="bounded", options={"xatol": xtol}
            )
        if np.isfinite(res.fun) and res.fun <= f_center:
            return float(res.x), float(res.fun)
        return center, f_center

    alpha = float(alpha0)
    t1, t2 = phases(alpha)
    best = dist(alpha, t1, t2)
    half_a, half_t = bracket, 0.5
    for _ in range(sweeps):
        prev = (alpha, t1, t2, best)
        alpha, best = line_min(lambda a: dist(a, t1, t2), alpha, best, half_a)
        t1, best = line_min(lambda t: dist(alpha, t, t2), t1, best, half_t)
        t2, best = line_min(lambda t: dist(alpha, t1, t), t2, best, half_t)
        step = max(abs(alpha - prev[0]), abs(t1 - prev[1]), abs(t2 - prev[2]))
        half_a, half_t = max(4 * step, 1e-6), max(4 * step, 1e-6)
        if step < 10 * tol or prev[3] - best <= rtol * prev[3]:
            break
    if best > cap:
        raise LeftOrbitError(f"modulated wall is rho_A = {best:.3e} away, above the cap {cap:g}")
    return ModulationFit(alpha, _wrap(t1), _wrap(t2), best)


# ---------------------------------------------------------------------------
# Integrator
# ---------------------------------------------------------------------------


@dataclass
class EvolutionTrace:
    times: np.ndarray
    alpha: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    rho: np.ndarray
    energy: np.ndarray
    mass_center_G: np.ndarray
    momentum: np.ndarray
    R: float
    dt: float
    states: list = field(default_factory=list)
    final: ComplexField2 | None = None
    warnings: list = field(default_factory=list)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in zip(self.times, self.alpha, self.theta1, self.theta2, self.rho, self.energy, self.mass_center_G):
                w.writerow([repr(float(v)) for v in row])

    def to_dict(self) -> dict:
        def finite_max(a):
            a = np.asarray(a, dtype=float)
            return float(np.nanmax(np.abs(a))) if np.any(np.isfinite(a)) else None

        return {
            "n_samples": int(len(self.times)),
            "t_final": float(self.times[-1]),
            "dt": self.dt,
            "R": self.R,
            "energy_initial": float(self.energy[0]),
            "energy_drift": self.energy_drift,
            "rho_sup": finite_max(self.rho),
            "alpha_sup": finite_max(self.alpha),
            "G_sup": finite_max(self.mass_center_G),
            "momentum_sup": finite_max(self.momentum),
            "warnings": list(self.warnings),
        }


def total_energy(spec: PotentialSpec, psi: ComplexField2, V=None, eps: float = 0.0) -> float:
    """Energy plus the external term eps/2 int V (|psi1|^2 + |psi2|^2)."""
    E = energy(spec, psi)
    if V is not None and eps != 0.0:
        dens = np.asarray(V) * (np.abs(psi.psi1) ** 2 + np.abs(psi.psi2) ** 2)
        E += 0.5 * eps * integrate(dens, psi.grid)
    return E


class StrangStepper:
    """Phase rotation by the local potential and a Crank-Nicolson kinetic step.

    Consecutive nonlinear half steps are merged, since the rotation leaves the
    moduli and hence the rotation rate unchanged.
    """

    def __init__(self, spec: PotentialSpec, grid: Grid, dt: float, left_bc, right_bc, V=None, eps: float = 0.0):
        if not (dt > 0 and math.isfinite(dt)):
            raise DomainError(f"time step must be positive, got {dt}")
        self.spec, self.grid, self.dt = spec, grid, dt
        N, h = grid.N, grid.h
        r = 1j * dt / (2 * h**2)
        ab = np.zeros((3, N), dtype=complex)
        ab[0, 1:] = -r
        ab[1, :] = 1 + 2 * r
        ab[2, :-1] = -r
        self._ab = ab
        self._r = r
        self._ghost = np.zeros((2, N), dtype=complex)
        self._ghost[:, 0] = left_bc
        self._ghost[:, -1] = right_bc
        self._ext = np.zeros(N) if V is None or eps == 0.0 else eps * np.asarray(V, dtype=float)

    def rotate(self, psi: np.ndarray, fraction: float) -> np.ndarray:
        m2 = np.abs(psi) ** 2
        f1, f2 = self.spec.dF(m2[0], m2[1])
        rate = np.vstack([f1, f2]) + self._ext
        return psi * np.exp(-1j * rate * (fraction * self.dt))

    def kinetic(self, psi: np.ndarray) -> np.ndarray:
        r = self._r
        lap = -2 * psi
        lap[:, 1:] += psi[:, :-1]
        lap[:, :-1] += psi[:, 1:]
        rhs = psi + r * lap + 2 * r * self._ghost
        return solve_banded((1, 1), self._ab, rhs.T, check_finite=False).T


def evolve(
    spec: PotentialSpec,
    psi0: ComplexField2,
    T: float,
    dt: float,
    V=None,
    eps: float = 0.0,
    wall: RealField2 | None = None,
    A: float = 5.0,
    R: float | None = None,
    output_every: float | None = None,
    keep_states: bool = False,
    fit_cap: float = 0.5,
) -> EvolutionTrace:
    """Strang-split evolution to time T, recording diagnostics every max(dt, T/2000).

    When ``wall`` is given each output is modulation-fitted against it.
    """
    if not (T >= 0 and math.isfinite(T)):
        raise DomainError(f"final time must be finite and >= 0, got {T}")
    grid = psi0.grid
    R = grid.L / 3 if R is None else R
    n_steps = int(round(T / dt))
    every = max(1, int(round(max(dt, T / 2000 if output_every is None else output_every) / dt)))
    stepper = StrangStepper(spec, grid, dt, psi0.left_bc, psi0.right_bc, V, eps)
    m_ref = mass_functional(spec, wall) if wall is not None else mass_functional(spec, _moduli_field(psi0))
    orbit = WallOrbit(wall) if wall is not None else None
    eq = (np.abs(np.array(psi0.left_bc)), np.abs(np.array(psi0.right_bc)))

    rec = {k: [] for k in ("t", "alpha", "theta1", "theta2", "rho", "energy", "G", "P")}
    states, notes = [], []
    last_fit = None

    def record(k: int, psi: ComplexField2):
        nonlocal last_fit
        t = k * dt
        rec["t"].append(t)
        rec["energy"].append(total_energy(spec, psi, V, eps))
        rec["G"].append(mass_center_G(spec, psi, 0.0, R, m_ref))
        rec["P"].append(momentum(spec, psi, R))
        if orbit is not None:
            seed = last_fit.alpha if last_fit is not None else None
            fit = modulation_fit(
                psi, wall, A, spec, alpha0=seed, cap=fit_cap, orbit=orbit, bracket=1.0 if seed is None else 0.05
            )
            last_fit = fit
            vals = (fit.alpha, fit.theta1, fit.theta2, fit.rho)
        else:
            vals = (math.nan,) * 4
        for key, v in zip(("alpha", "theta1", "theta2", "rho"), vals):
            rec[key].append(v)
        if keep_states:
            states.append(psi)
        for side, nodes in (("left", slice(0, 5)), ("right", slice(-5, None))):
            target = eq[0] if side == "left" else eq[1]
            dev = max(np.abs(np.abs(psi.psi1[nodes]) - target[0]).max(), np.abs(np.abs(psi.psi2[nodes]) - target[1]).max())
            if dev > 1e-3:
                msg = f"t={t:.6g}: boundary layer at the {side} end deviates by {dev:.2e}"
                if msg not in notes:
                    warnings.warn(msg, RuntimeWarning, stacklevel=3)
                    notes.append(msg)

    psi = np.vstack([psi0.psi1, psi0.psi2])
    record(0, psi0)
    half_pending = False
    for k in range(1, n_steps + 1):
        psi = stepper.rotate(psi, 1.0 if half_pending else 0.5)
        psi = stepper.kinetic(psi)
        half_pending = True
        if k % every == 0 or k == n_steps:
            psi = stepper.rotate(psi, 0.5)
            half_pending = False
            if not np.all(np.isfinite(psi)):
                raise DomainError(f"non-finite field at t={k * dt:.6g}")
            record(k, psi0.replace(psi1=psi[0], psi2=psi[1]))
    final = psi0.replace(psi1=psi[0], psi2=psi[1])
    return EvolutionTrace(
        times=np.array(rec["t"]),
        alpha=np.array(rec["alpha"]),
        theta1=np.array(rec["theta1"]),
        theta2=np.array(rec["theta2"]),
        rho=np.array(rec["rho"]),
        energy=np.array(rec["energy"]),
        mass_center_G=np.array(rec["G"]),
        momentum=np.array(rec["P"]),
        R=R,
        dt=dt,
        states=states,
        final=final,
        warnings=notes,
    )


def _moduli_field(psi: ComplexField2) -> RealField2:
    m1, m2 = psi.moduli()
    return RealField2(psi.grid, m1, m2, tuple(abs(v) for v in psi.left_bc), tuple(abs(v) for v in psi.right_bc))


# ---------------------------------------------------------------------------
# Momentum law and experiments
# ---------------------------------------------------------------------------


@dataclass
class MomentumReport:
    times: np.ndarray
    momentum: np.ndarray
    integrated: np.ndarray
    numerator_change: np.ndarray
    identity_defect: float

    def to_dict(self) -> dict:
        return {
            "momentum_sup": float(np.abs(self.momentum).max()),
            "numerator_change_sup": float(np.abs(self.numerator_change).max()),
            "identity_defect": self.identity_defect,
        }


def momentum_drift(spec: PotentialSpec, states: list, times: np.ndarray, R: float) -> MomentumReport:
    """Momentum along a stored path, its time integral and the centered-difference check of dN/dt = P."""
    times = np.asarray(times, dtype=float)
    P = np.array([momentum(spec, s, R) for s in states])
    N = np.array([G_numerator(spec, s, R) for s in states])
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (P[1:] + P[:-1]))])
    if len(times) >= 3:
        dN = (N[2:] - N[:-2]) / (times[2:] - times[:-2])
        scale = max(float(np.abs(P[1:-1]).max()), 1e-300)
        defect = float(np.abs(dN - P[1:-1]).max() / scale)
    else:
        defect = math.nan
    return MomentumReport(times, P, integ, N - N[0], defect)


def gaussian_perturbation(grid: Grid, seed: int = 0, width: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian bumps centered at 0 in the real and imaginary parts of both components."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(4)
    g = np.exp(-((grid.x / width) ** 2))
    return (c[0] + 1j * c[1]) * g, (c[2] + 1j * c[3]) * g


def perturbed_wall(wall: RealField2, eps: float, seed: int = 0, A: float = 5.0) -> ComplexField2:
    """Wall plus a Gaussian perturbation scaled to rho_A distance ``eps``."""
    base = wall.to_complex()
    if eps == 0.0:
        return base
    p1, p2 = gaussian_perturbation(wall.grid, seed)
    unit = rho_A(base.replace(psi1=base.psi1 + p1, psi2=base.psi2 + p2), base, A)
    s = eps / unit
    # rho_A is not homogeneous (modulus term), so rescale until it hits eps
    for _ in range(20):
        trial = base.replace(psi1=base.psi1 + s * p1, psi2=base.psi2 + s * p2)
        d = rho_A(trial, base, A)
        if abs(d - eps) <= 1e-12 * eps:
            break
        s *= eps / d
    return trial


@dataclass
class OrbitalVerdict:
    trace: EvolutionTrace
    eps: float
    rho_sup: float
    rho_bound: float
    C_fit: float
    C_max: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "rho_sup": self.rho_sup,
            "rho_bound": self.rho_bound,
            "C_fit": self.C_fit,
            "C_max": self.C_max,
            "verdict": "PASS" if self.passed else "FAIL",
            "trace": self.trace.to_dict(),
        }


def orbital_stability_experiment(
    spec: PotentialSpec,
    wall: RealField2,
    eps: float,
    T: float,
    dt: float = 1e-3,
    seed: int = 0,
    K: float = 5.0,
    C_max: float = 10.0,
    A: float = 5.0,
    V=None,
    V_eps: float = 0.0,
    output_every: float | None = None,
) -> OrbitalVerdict:
    """Perturb the wall by ``eps`` in rho_A, evolve, and test rho and center against eps.

    C is fitted as max_t |alpha(t)| / (eps max(1, t)); the run passes when
    sup rho <= K eps (or 1e-6 for eps = 0) and C <= C_max.
    """
    psi0 = perturbed_wall(wall, eps, seed, A)
    trace = evolve(spec, psi0, T, dt, V=V, eps=V_eps, wall=wall, A=A, output_every=output_every)
    rho_sup = float(np.max(trace.rho))
    if eps > 0:
        C = float(np.max(np.abs(trace.alpha) / (eps * np.maximum(1.0, trace.times))))
        bound = K * eps
    else:
        C = 0.0
        bound = 1e-6
    return OrbitalVerdict(trace, eps, rho_sup, bound, C, C_max, bool(rho_sup <= bound and C <= C_max))
