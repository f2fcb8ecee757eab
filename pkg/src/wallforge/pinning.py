"""Walls pinned by a small localized potential eps V.

The wall persists at a root x0 of f(s) = int V'(x + s) d(x) dx with
d = u1^2 + u2^2 - 1, and the sign of sigma = 1/2 int V''(x + x0) d(x) dx
decides whether the smallest eigenvalue of L+ moves up (stable) or down.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, RealField2, derivative6, el_residual, integrate
from .errors import (
    ConvergenceError,
    DegeneratePotentialError,
    MarginalSigmaError,
    NoPinningPointError,
    UsageError,
)
from .model import PotentialSpec, third_W
from .profile_solver import newton_iterate, shift_field
from .spectral import assemble_Lminus, assemble_Lplus, rayleigh_minimum, smallest_eigs, zero_mode

EPS_MAX = 0.05
TAIL_TOL = 1e-10


@dataclass(frozen=True)
class LocalizedPotential:
    """V(x) = a sech^2(b (x - c)), or a cubic spline through tabulated samples."""

    kind: str = "sech2"
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    x_table: tuple = ()
    v_table: tuple = ()

    def __post_init__(self):
        if self.kind == "sech2":
            for name in ("a", "b", "c"):
                if not math.isfinite(getattr(self, name)):
                    raise UsageError(f"sech2 potential parameter {name} must be finite")
            if self.b <= 0:
                raise UsageError(f"sech2 width parameter b must be positive, got {self.b}")
        elif self.kind == "tabulated":
            x = np.asarray(self.x_table, dtype=float)
            v = np.asarray(self.v_table, dtype=float)
            if x.ndim != 1 or x.shape != v.shape or len(x) < 4:
                raise UsageError("tabulated potential needs matching x and V arrays with at least 4 samples")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.all(np.diff(x) > 0)):
                raise UsageError("tabulated potential samples must be finite with increasing x")
            object.__setattr__(self, "_spline", CubicSpline(x, v))
            warnings.warn(
                "tabulated potential: V' and V'' come from a cubic spline and are only "
                "first- and second-order accurate; sigma inherits that error",
                UserWarning,
                stacklevel=3,
            )
            if max(abs(v[0]), abs(v[-1])) > TAIL_TOL:
                warnings.warn(
                    "tabulated potential does not decay at the table ends; integrability cannot be confirmed",
                    UserWarning,
                    stacklevel=3,
                )
        else:
            raise UsageError(f"unknown potential kind {self.kind!r} (expected 'sech2' or 'tabulated')")

    @classmethod
    def sech2(cls, a: float = 1.0, b: float = 1.0, c: float = 0.0) -> "LocalizedPotential":
        return cls("sech2", float(a), float(b), float(c))

    @classmethod
    def tabulated(cls, x, v) -> "LocalizedPotential":
        return cls("tabulated", x_table=tuple(map(float, x)), v_table=tuple(map(float, v)))

    @classmethod
    def zero(cls) -> "LocalizedPotential":
        return cls.sech2(0.0, 1.0, 0.0)

    @classmethod
    def from_dict(cls, data: dict) -> "LocalizedPotential":
        data = dict(data)
        kind = data.pop("kind", "sech2")
        if kind == "sech2":
            unknown = set(data) - {"a", "b", "c"}
            if unknown:
                raise UsageError(f"unknown sech2 potential keys: {sorted(unknown)}")
            return cls.sech2(**{k: float(v) for k, v in data.items()})
        if kind == "tabulated":
            unknown = set(data) - {"x", "V"}
            if unknown:
                raise UsageError(f"unknown tabulated potential keys: {sorted(unknown)}")
            return cls.tabulated(data["x"], data["V"])
        raise UsageError(f"unknown potential kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "sech2":
            return {"kind": "sech2", "a": self.a, "b": self.b, "c": self.c}
        return {"kind": "tabulated", "x": list(self.x_table), "V": list(self.v_table)}

    def scaled(self, factor: float) -> "LocalizedPotential":
        if self.kind == "sech2":
            return replace(self, a=self.a * factor)
        return LocalizedPotential.tabulated(self.x_table, [factor * v for v in self.v_table])

    def moved(self, c: float) -> "LocalizedPotential":
        """The same profile centered at c instead of self.c (sech2 only)."""
        if self.kind != "sech2":
            raise UsageError("moved() is only defined for the sech2 family")
        return replace(self, c=float(c))

    def _eval(self, x, order: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            sp_ = self._spline
            lo, hi = self.x_table[0], self.x_table[-1]
            vals = sp_(np.clip(x, lo, hi), order)
            return np.where((x < lo) | (x > hi), 0.0, vals)
        z = self.b * (x - self.c)
        s2 = 1.0 / np.cosh(z) ** 2
        if order == 0:
            return self.a * s2
        th = np.tanh(z)
        if order == 1:
            return -2 * self.a * self.b * s2 * th
        return 2 * self.a * self.b**2 * s2 * (3 * th**2 - 1)

    def V(self, x) -> np.ndarray:
        return self._eval(x, 0)

    def dV(self, x) -> np.ndarray:
        return self._eval(x, 1)

    def d2V(self, x) -> np.ndarray:
        return self._eval(x, 2)

    def is_zero(self) -> bool:
        return (self.kind == "sech2" and self.a == 0.0) or (self.kind == "tabulated" and not any(self.v_table))

    def check_tail(self, grid: Grid) -> float:
        """Largest |V| at the two ends of the domain; raises when it is not negligible."""
        tail = float(np.max(np.abs(self.V(np.array([-grid.L, grid.L])))))
        if tail > TAIL_TOL:
            raise UsageError(
                f"|V| = {tail:.2e} at x = +-L exceeds {TAIL_TOL:g}; enlarge the domain (L = {grid.L:g})"
            )
        return tail


def _density(wall0: RealField2) -> np.ndarray:
    f1, f2 = wall0.full()
    return f1**2 + f2**2 - 1.0


def pinning_function(V: LocalizedPotential, wall0: RealField2, s) -> np.ndarray:
    """f(s) = int V'(x + s) (u1^2 + u2^2 - 1) dx by the trapezoid rule."""
    grid = wall0.grid
    x = grid.x_full
    d = _density(wall0)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(len(s))
    for i, si in enumerate(s):
        g = V.dV(x + si) * d
        out[i] = integrate(g[1:-1], grid, (g[0], g[-1]))
    return out


@dataclass(frozen=True)
class PinningPoints:
    x0: float
    others: tuple
    residual: float


def find_pinning_points(
    V: LocalizedPotential, wall0: RealField2, interval: tuple[float, float] | None = None, samples: int = 64
) -> PinningPoints:
    grid = wall0.grid
    lo, hi = interval if interval is not None else (-grid.L / 2, grid.L / 2)
    V.check_tail(grid)
    s = np.linspace(lo, hi, samples)
    f = pinning_function(V, wall0, s)
    x = grid.x_full
    scale = integrate(np.abs(V.dV(x) * _density(wall0))[1:-1], grid)
    if V.is_zero() or np.max(np.abs(f)) <= 1e-13 * max(scale, 1e-300) or scale == 0.0:
        raise DegeneratePotentialError(
            "pinning function vanishes identically; the nondegeneracy condition on sigma cannot be checked"
        )

    def fun(t):
        return float(pinning_function(V, wall0, t)[0])

    roots = [float(si) for si, fi in zip(s, f) if fi == 0.0]
    for i in range(samples - 1):
        if f[i] * f[i + 1] < 0:
            roots.append(brentq(fun, s[i], s[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    if not roots:
        raise NoPinningPointError(f"f(s) has no sign change on [{lo:g}, {hi:g}]")
    roots.sort(key=abs)
    x0 = roots[0]
    return PinningPoints(x0, tuple(roots[1:]), abs(fun(x0)))


def find_x0(V: LocalizedPotential, wall0: RealField2, interval=None, samples: int = 64) -> float:
    """Root of the pinning function nearest to 0 (64-sample bracketing scan plus Brent)."""
    return find_pinning_points(V, wall0, interval, samples).x0


@dataclass(frozen=True)
class Sigma:
    value: float
    by_parts: float
    relative_defect: float

    def __float__(self) -> float:
        return self.value


def compute_sigma(V: LocalizedPotential, x0: float, wall0: RealField2, marginal: float = 1e-10) -> Sigma:
    """sigma = 1/2 int V''(x + x0) d dx, cross-checked against -int V'(x + x0)(u1 u1' + u2 u2') dx."""
    grid = wall0.grid
    x = grid.x_full
    d = _density(wall0)
    g = 0.5 * V.d2V(x + x0) * d
    value = integrate(g[1:-1], grid, (g[0], g[-1]))
    h = grid.h
    du1 = derivative6(wall0.u1, (wall0.left_bc[0], wall0.right_bc[0]), h)
    du2 = derivative6(wall0.u2, (wall0.left_bc[1], wall0.right_bc[1]), h)
    alt = -integrate(V.dV(grid.x + x0) * (wall0.u1 * du1 + wall0.u2 * du2), grid)
    if abs(value) < marginal:
        raise MarginalSigmaError(f"|sigma| = {abs(value):.2e} is below {marginal:g}; no unique pinned branch")
    return Sigma(value, alt, abs(value - alt) / abs(value))


# ---------------------------------------------------------------------------
# First-order theory
# ---------------------------------------------------------------------------


def _bordered_solve(L: sp.spmatrix, rhs: np.ndarray, v: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    col = sp.csc_matrix(v.reshape(n, 1))
    K = sp.bmat([[L, col], [col.T, None]], format="csc")
    return spla.spsolve(K, np.concatenate([rhs, [0.0]]))[:n]


def first_order_correction(spec: PotentialSpec, V: LocalizedPotential, wall0: RealField2, x0: float = 0.0) -> RealField2:
    """W with L+ W = -V(. + x0) U0 and <U0', W> = 0, in the frame of the centered wall."""
    grid = wall0.grid
    Vs = V.V(grid.x + x0)
    rhs = -np.concatenate([Vs * wall0.u1, Vs * wall0.u2])
    Lp = assemble_Lplus(spec, wall0).matrix.tocsc()
    w = _bordered_solve(Lp, rhs, zero_mode(wall0))
    n = grid.N
    return RealField2(grid, w[:n], w[n:], (0.0, 0.0), (0.0, 0.0))


@dataclass(frozen=True)
class SigmaConsistency:
    sigma_formula: float
    sigma_quadratic: float
    relative_defect: float


def sigma_consistency(
    spec: PotentialSpec, V: LocalizedPotential, wall0: RealField2, W_corr: RealField2, x0: float = 0.0
) -> SigmaConsistency:
    """Compare the V'' formula with <U', (d/d eps) L+ U'> = int V |U'|^2 + 1/2 D^3W(U)[W, U', U']."""
    grid = wall0.grid
    h = grid.h
    du = np.vstack(
        [
            derivative6(wall0.u1, (wall0.left_bc[0], wall0.right_bc[0]), h),
            derivative6(wall0.u2, (wall0.left_bc[1], wall0.right_bc[1]), h),
        ]
    )
    T = third_W(spec, np.vstack([wall0.u1, wall0.u2]))
    w = np.vstack([W_corr.u1, W_corr.u2])
    cubic = np.einsum("ijkn,in,jn,kn->n", T, w, du, du)
    Vs = V.V(grid.x + x0)
    quad = integrate(Vs * (du[0] ** 2 + du[1] ** 2) + 0.5 * cubic, grid)
    formula = compute_sigma(V, x0, wall0).value
    return SigmaConsistency(formula, quad, abs(formula - quad) / abs(formula))


def zero_mode_norm_sq(wall0: RealField2) -> float:
    """||U'||^2 in L^2."""
    h = wall0.grid.h
    d1 = derivative6(wall0.u1, (wall0.left_bc[0], wall0.right_bc[0]), h)
    d2 = derivative6(wall0.u2, (wall0.left_bc[1], wall0.right_bc[1]), h)
    return integrate(d1**2 + d2**2, wall0.grid)


# ---------------------------------------------------------------------------
# Pinned branch
# ---------------------------------------------------------------------------


@dataclass
class PinningReport:
    x0: float
    sigma: float
    eps: float
    pinned_profile: RealField2
    persistence_sup: float
    lplus_min_eig: float
    predicted_shift: float
    verdict: str
    persistence_ratio: float = float("nan")
    negative_count: int = -1
    lminus_min_eig: float = float("nan")
    neg_lambda_sq: float = float("nan")
    spectral_verdict: str = ""
    other_roots: tuple = ()
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "sigma": self.sigma,
            "eps": self.eps,
            "persistence_sup": self.persistence_sup,
            "persistence_ratio": self.persistence_ratio,
            "lplus_min_eig": self.lplus_min_eig,
            "predicted_shift": self.predicted_shift,
            "negative_count": self.negative_count,
            "lminus_min_eig": self.lminus_min_eig,
            "neg_lambda_sq": self.neg_lambda_sq,
            "verdict": self.verdict,
            "spectral_verdict": self.spectral_verdict,
            "other_roots": list(self.other_roots),
            "notes": list(self.notes),
        }


def _pinned_newton(spec, Vs, eps, start, tol, max_iter):
    def residual(U):
        r = el_residual(spec, U)
        return np.concatenate([r.u1 + eps * Vs * U.u1, r.u2 + eps * Vs * U.u2])

    def jacobian(U):
        return assemble_Lplus(spec, U, Vs, eps).matrix.tocsc()

    return newton_iterate(spec, start, tol, max_iter, residual=residual, jacobian=jacobian, bordered=False)


def pinned_branch(
    spec: PotentialSpec,
    V: LocalizedPotential,
    eps: float,
    start: RealField2,
    tol: float = 1e-10,
    max_iter: int = 30,
    min_step: float = 1e-6,
) -> tuple[RealField2, list[str]]:
    """Newton at eps; on failure continue naturally from a fraction of eps."""
    Vs = V.V(start.grid.x)
    notes: list[str] = []
    done, U = 0.0, start
    step = eps
    while done != eps:
        target = done + step if abs(step) < abs(eps - done) else eps
        try:
            U, _, n = _pinned_newton(spec, Vs, target, U, tol, max_iter)
            notes.extend(n)
            done = target
        except ConvergenceError:
            step /= 2
            notes.append(f"continuation: Newton failed at eps={target:g}, halving the step")
            if abs(step) < min_step * max(abs(eps), 1e-300):
                raise
    return U, notes


def solve_pinned_wall(
    spec: PotentialSpec,
    V: LocalizedPotential,
    eps: float,
    wall0: RealField2,
    x0: float | None = None,
    eps_max: float = EPS_MAX,
    tol: float = 1e-10,
    check_scaling: bool = True,
) -> PinningReport:
    """Newton on -U'' + (eps V + dF) U = 0 from U0(. - x0); reports the distance to U0(. - x0)."""
    if not math.isfinite(eps) or abs(eps) > eps_max:
        raise UsageError(f"|eps| must not exceed eps_max = {eps_max:g}, got {eps}")
    pts = find_pinning_points(V, wall0) if x0 is None else PinningPoints(x0, (), float("nan"))
    x0 = pts.x0
    sigma = compute_sigma(V, x0, wall0).value
    start = shift_field(wall0, -x0) if x0 != 0.0 else wall0
    norm2 = zero_mode_norm_sq(wall0)
    notes: list[str] = []
    if eps == 0.0:
        U, dist, ratio = start, 0.0, float("nan")
    else:
        U, notes = pinned_branch(spec, V, eps, start, tol)
        dist = float(max(np.abs(U.u1 - start.u1).max(), np.abs(U.u2 - start.u2).max()))
        ratio = float("nan")
        if check_scaling:
            half, _ = pinned_branch(spec, V, eps / 2, start, tol)
            dist_half = float(max(np.abs(half.u1 - start.u1).max(), np.abs(half.u2 - start.u2).max()))
            ratio = dist / dist_half
    verdict = "stable" if eps * sigma > 0 else ("unstable" if eps * sigma < 0 else "marginal")
    return PinningReport(
        x0=x0,
        sigma=sigma,
        eps=eps,
        pinned_profile=U,
        persistence_sup=dist,
        lplus_min_eig=float("nan"),
        predicted_shift=eps * sigma / norm2,
        verdict=verdict,
        persistence_ratio=ratio,
        other_roots=pts.others,
        notes=notes,
    )


def pinned_spectrum(
    spec: PotentialSpec, V: LocalizedPotential, eps: float, pinned: PinningReport, k: int = 4, tol: float = 1e-6
) -> PinningReport:
    """Spectra of L+(eps), L-(eps) about the pinned wall and the coupled stability verdict."""
    U = pinned.pinned_profile
    Vs = V.V(U.grid.x)
    Lp = assemble_Lplus(spec, U, Vs, eps)
    Lm = assemble_Lminus(spec, U, Vs, eps)
    ep = smallest_eigs(Lp, k)
    em = smallest_eigs(Lm, 2)
    neg = rayleigh_minimum(spec, U, Vs, eps) if eps != 0.0 else rayleigh_minimum(spec, U)
    return replace(
        pinned,
        lplus_min_eig=float(ep.values[0]),
        negative_count=int(np.sum(ep.values < 0)),
        lminus_min_eig=float(em.values[0]),
        neg_lambda_sq=neg,
        spectral_verdict="stable" if neg >= -tol else "unstable",
    )
