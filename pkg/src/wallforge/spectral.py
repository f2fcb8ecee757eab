"""Linearized operators about a wall and the coupled stability problem.

Perturbations live in H^1_0 of the truncated interval, so both operators use
homogeneous Dirichlet conditions. Matrices are 2N x 2N in stacked layout:
component 1 occupies rows 0..N-1, component 2 rows N..2N-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, RealField2, centered_derivative, integrate
from .errors import SpectralInconsistency, UsageError
from .model import PotentialSpec

LABELS = ("Lplus", "Lminus", "Lplus_eps", "Lminus_eps")


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: sp.csr_matrix
    grid: Grid
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise UsageError(f"unknown operator label {self.label!r}")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def symmetry_defect(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0

    def bandwidth(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.abs(coo.row - coo.col).max())


def _dirichlet_laplacian(N: int, h: float) -> sp.csr_matrix:
    """Discrete -d^2/dx^2 with zero ghosts."""
    main = np.full(N, 2.0 / h**2)
    off = np.full(N - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def potential_blocks(spec: PotentialSpec, u1: np.ndarray, u2: np.ndarray):
    """Entries of (1/2) D^2 W at each node: (p11, p12, p22)."""
    x1, x2 = u1**2, u2**2
    f1, f2 = spec.dF(x1, x2)
    f11, f12, f22 = spec.d2F(x1, x2)
    return f1 + 2 * x1 * f11, 2 * u1 * u2 * f12, f2 + 2 * x2 * f22


def _external(V, eps: float, N: int) -> np.ndarray:
    if V is None or eps == 0.0:
        return np.zeros(N)
    V = np.asarray(V, dtype=float)
    if V.shape != (N,):
        raise UsageError(f"external potential must be sampled on the N={N} interior nodes")
    return eps * V


def assemble_Lplus(spec: PotentialSpec, U: RealField2, V=None, eps: float = 0.0) -> OperatorMatrix:
    """Real-part linearization -d^2 + (1/2) D^2 W(U) (+ eps V on the diagonal)."""
    N, h = U.grid.N, U.grid.h
    lap = _dirichlet_laplacian(N, h)
    p11, p12, p22 = potential_blocks(spec, U.u1, U.u2)
    ext = _external(V, eps, N)
    M = sp.bmat(
        [[lap + sp.diags(p11 + ext), sp.diags(p12)], [sp.diags(p12), lap + sp.diags(p22 + ext)]],
        format="csr",
    )
    return OperatorMatrix(M, U.grid, "Lplus" if V is None or eps == 0.0 else "Lplus_eps")


def assemble_Lminus(spec: PotentialSpec, U: RealField2, V=None, eps: float = 0.0) -> OperatorMatrix:
    """Imaginary-part linearization: two decoupled blocks -d^2 + dF_j(u1^2, u2^2)."""
    N, h = U.grid.N, U.grid.h
    lap = _dirichlet_laplacian(N, h)
    f1, f2 = spec.dF(U.u1**2, U.u2**2)
    ext = _external(V, eps, N)
    M = sp.block_diag([lap + sp.diags(f1 + ext), lap + sp.diags(f2 + ext)], format="csr")
    return OperatorMatrix(M, U.grid, "Lminus" if V is None or eps == 0.0 else "Lminus_eps")


def zero_mode(U: RealField2) -> np.ndarray:
    """Discrete U' (centered differences) in stacked layout, unit Euclidean norm."""
    h = U.grid.h
    d1 = centered_derivative(U.u1, (U.left_bc[0], U.right_bc[0]), h)
    d2 = centered_derivative(U.u2, (U.left_bc[1], U.right_bc[1]), h)
    v = np.concatenate([d1, d2])
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray  # columns, unit Euclidean norm
    residuals: np.ndarray
    shift: float


def _gershgorin_lower(A: sp.csr_matrix) -> float:
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off))


def smallest_eigs(M: OperatorMatrix, k: int = 6, shift: float | None = None, retries: int = 4) -> EigenPairs:
    """k smallest eigenpairs by shift-invert Lanczos below the spectrum.

    The shift defaults to just below the Gershgorin lower bound, so the
    eigenvalues nearest to it are the smallest ones. A singular factorization
    at the shift is retried with a small offset.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    A = M.matrix.tocsc()
    n = A.shape[0]
    if k >= n - 1:
        w, v = sla.eigh(A.toarray())
        w, v = w[:k], v[:, :k]
        sigma = float("nan")
    else:
        sigma = shift if shift is not None else min(_gershgorin_lower(A), -0.5) - 0.01
        rng = np.random.default_rng(0)
        v0 = rng.standard_normal(n)
        for attempt in range(retries + 1):
            try:
                w, v = spla.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0, tol=0)
                break
            except (RuntimeError, spla.ArpackError):
                if attempt == retries:
                    raise
                sigma -= 1e-3 * (attempt + 1) * max(1.0, abs(sigma))
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    half = n // 2
    for j in range(v.shape[1]):
        s = v[:half, j].sum() if abs(v[:half, j].sum()) > 1e-14 else v[:, j].sum()
        if s < 0:
            v[:, j] = -v[:, j]
    res = np.linalg.norm(A @ v - v * w, axis=0)
    return EigenPairs(w, v, res, float(sigma))


# ---------------------------------------------------------------------------
# Quadratic-form identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityDefect:
    plus_direct: float
    plus_identity: float
    plus_relative: float
    minus_direct: float
    minus_identity: float
    minus_relative: float


def _full_derivative(U: RealField2):
    h = U.grid.h
    d1 = centered_derivative(U.u1, (U.left_bc[0], U.right_bc[0]), h)
    d2 = centered_derivative(U.u2, (U.left_bc[1], U.right_bc[1]), h)
    return np.concatenate([[0.0], d1, [0.0]]), np.concatenate([[0.0], d2, [0.0]])


def _quadratic_form(grid: Grid, phi1, phi2, p11, p12, p22) -> float:
    """Edge-difference kinetic part plus trapezoid potential part, on full-node arrays."""
    h = grid.h
    kin = h * float(np.sum((np.diff(phi1) / h) ** 2 + (np.diff(phi2) / h) ** 2))
    dens = p11 * phi1**2 + 2 * p12 * phi1 * phi2 + p22 * phi2**2
    return kin + integrate(dens[1:-1], grid, (dens[0], dens[-1]))


def _relative(a: float, b: float, floor: float = 1e-300) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def quadratic_form_identity_check(spec: PotentialSpec, U: RealField2, A=None, B=None) -> IdentityDefect:
    """Compare <Phi, L Phi> computed directly with its integrated-by-parts form.

    ``A`` and ``B`` are pairs of callables (or arrays on the full grid). The
    real-part trial is (A1 u1', A2 u2'); the imaginary-part trial (B1 u1, B2 u2).
    """
    grid = U.grid
    x = grid.x_full

    def sample(fun):
        if fun is None:
            return np.ones_like(x)
        return np.asarray(fun(x) if callable(fun) else fun, dtype=float) * np.ones_like(x)

    A1, A2 = (sample(None), sample(None)) if A is None else (sample(A[0]), sample(A[1]))
    B1, B2 = (sample(None), sample(None)) if B is None else (sample(B[0]), sample(B[1]))
    u1, u2 = U.full()
    du1, du2 = _full_derivative(U)
    p11, p12, p22 = potential_blocks(spec, u1, u2)
    f1, f2 = spec.dF(u1**2, u2**2)
    h = grid.h

    def grad(f):
        return np.gradient(f, h)

    plus_direct = _quadratic_form(grid, A1 * du1, A2 * du2, p11, p12, p22)
    dens = grad(A1) ** 2 * du1**2 + grad(A2) ** 2 * du2**2 - p12 * du1 * du2 * (A1 - A2) ** 2
    plus_identity = integrate(dens[1:-1], grid, (dens[0], dens[-1]))

    zero = np.zeros_like(x)
    minus_direct = _quadratic_form(grid, B1 * u1, B2 * u2, f1, zero, f2)
    dens = grad(B1) ** 2 * u1**2 + grad(B2) ** 2 * u2**2
    minus_identity = integrate(dens[1:-1], grid, (dens[0], dens[-1]))
    return IdentityDefect(
        plus_direct,
        plus_identity,
        _relative(plus_direct, plus_identity),
        minus_direct,
        minus_identity,
        _relative(minus_direct, minus_identity),
    )


# ---------------------------------------------------------------------------
# Coupled stability problem
# ---------------------------------------------------------------------------


class _BorderedSolver:
    """Solves L x = r - mu v with <v, x> = 0; the inverse of L on the complement of v."""

    def __init__(self, L: sp.spmatrix, v: np.ndarray):
        n = L.shape[0]
        col = sp.csc_matrix(v.reshape(n, 1))
        K = sp.bmat([[L, col], [col.T, None]], format="csc")
        self._lu = spla.splu(K)
        self.n = n

    def solve(self, r: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.concatenate([r, [0.0]]))[: self.n]


def projected_inverse(Lp: OperatorMatrix, v: np.ndarray):
    """Returns phi -> P Lp^{-1} P phi, with P the orthogonal projection off ``v``."""
    solver = _BorderedSolver(Lp.matrix, v)

    def apply(phi):
        phi = phi - v * (v @ phi)
        return solver.solve(phi)

    return apply


def denominator_ratios(spec: PotentialSpec, U: RealField2, n: int = 50, seed: int = 0) -> np.ndarray:
    """<Lp^{-1} phi, phi> / |phi|^2 for random phi orthogonal to U'."""
    Lp = assemble_Lplus(spec, U)
    v = zero_mode(U)
    inv = projected_inverse(Lp, v)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        phi = rng.standard_normal(Lp.size)
        phi -= v * (v @ phi)
        out.append(float(inv(phi) @ phi) / float(phi @ phi))
    return np.array(out)


def rayleigh_minimum(spec: PotentialSpec, U: RealField2, V=None, eps: float = 0.0) -> float:
    """inf <L- phi, phi> / <L+^{-1} phi, phi>.

    Without an external potential the infimum runs over phi orthogonal to U'
    and L+ is inverted on that complement. With eps != 0 the operator L+(eps)
    is invertible and no projection is used; the infimum is then the smallest
    eigenvalue of the pencil (L+, L-^{-1}), whose negative count equals the
    negative inertia of L+(eps).
    """
    Lp = assemble_Lplus(spec, U, V, eps).matrix.tocsc()
    Lm = assemble_Lminus(spec, U, V, eps).matrix.tocsc()
    n = Lp.shape[0]
    lm_lu = spla.splu(Lm)
    v0 = np.random.default_rng(1).standard_normal(n)
    if eps == 0.0:
        v = zero_mode(U)
        inv = projected_inverse(OperatorMatrix(Lp.tocsr(), U.grid, "Lplus"), v)
        B = spla.LinearOperator((n, n), matvec=inv, dtype=float)
        Minv = spla.LinearOperator((n, n), matvec=lm_lu.solve, dtype=float)
        nu = spla.eigsh(B, k=1, M=Lm, Minv=Minv, which="LA", v0=v0, tol=1e-12)[0]
        if nu[0] <= 0:
            raise SpectralInconsistency("projected L+ inverse is not positive")
        return float(1.0 / nu[0])
    lp_lu = spla.splu(Lp)
    Mop = spla.LinearOperator((n, n), matvec=lm_lu.solve, dtype=float)
    OPinv = spla.LinearOperator((n, n), matvec=lp_lu.solve, dtype=float)
    mu = spla.eigsh(Lp, k=4, M=Mop, sigma=0.0, OPinv=OPinv, which="LM", v0=v0, tol=1e-12)[0]
    return float(np.min(mu))


def direct_coupled_eigs(spec: PotentialSpec, U: RealField2, V=None, eps: float = 0.0):
    """Dense eigenvalues -lambda^2 of L- L+ on a (coarse) grid.

    Returns the values sorted by real part and the index of the translation
    eigenvalue (largest overlap with U'), which is meaningful at eps = 0 only.
    """
    Lp = assemble_Lplus(spec, U, V, eps).dense()
    Lm = assemble_Lminus(spec, U, V, eps).dense()
    w, vecs = sla.eig(Lm @ Lp)
    v = zero_mode(U)
    overlap = np.abs(v @ vecs) / np.linalg.norm(vecs, axis=0)
    order = np.argsort(w.real)
    return w[order], int(np.argmax(overlap[order]))


def coarse_crosscheck(spec: PotentialSpec, U: RealField2, V=None, eps: float = 0.0) -> tuple[float, float]:
    """(Rayleigh minimum, smallest direct -lambda^2 excluding the translation mode)."""
    ray = rayleigh_minimum(spec, U, V, eps)
    w, idx = direct_coupled_eigs(spec, U, V, eps)
    if eps == 0.0:
        w = np.delete(w, idx)
    return ray, float(w.real.min())


@dataclass
class SpectralReport:
    lplus_eigs: np.ndarray
    lminus_eigs: np.ndarray
    zero_mode_overlap: float
    essential_edge: float
    neg_lambda_sq: float
    verdict: str
    gap: float
    eigen_residual_max: float
    lplus_symmetry_defect: float
    lminus_symmetry_defect: float
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lplus_eigs": [float(v) for v in self.lplus_eigs],
            "lminus_eigs": [float(v) for v in self.lminus_eigs],
            "zero_mode_overlap": float(self.zero_mode_overlap),
            "essential_edge": float(self.essential_edge),
            "neg_lambda_sq": float(self.neg_lambda_sq),
            "verdict": self.verdict,
            "gap": float(self.gap),
            "eigen_residual_max": float(self.eigen_residual_max),
            "lplus_symmetry_defect": float(self.lplus_symmetry_defect),
            "lminus_symmetry_defect": float(self.lminus_symmetry_defect),
            "flags": list(self.flags),
        }


def stability_spectrum(
    spec: PotentialSpec,
    U: RealField2,
    k: int = 6,
    tol: float = 1e-6,
    gap_threshold: float = 1e-2,
) -> SpectralReport:
    Lp = assemble_Lplus(spec, U)
    Lm = assemble_Lminus(spec, U)
    ep = smallest_eigs(Lp, k)
    em = smallest_eigs(Lm, k)
    v = zero_mode(U)
    overlap = float(abs(v @ ep.vectors[:, 0]))
    gap = float(ep.values[1] - ep.values[0]) if k > 1 else math.inf
    flags = []
    if gap < gap_threshold:
        flags.append(f"spectral gap of L+ collapsed ({gap:.3e} < {gap_threshold:g}); zero may not be simple")
    neg = rayleigh_minimum(spec, U)
    if flags:
        verdict = "marginal"
    else:
        verdict = "stable" if neg >= -tol else "unstable"
    return SpectralReport(
        lplus_eigs=ep.values,
        lminus_eigs=em.values,
        zero_mode_overlap=overlap,
        essential_edge=spec.essential_edge(),
        neg_lambda_sq=neg,
        verdict=verdict,
        gap=gap,
        eigen_residual_max=float(max(ep.residuals.max(), em.residuals.max())),
        lplus_symmetry_defect=Lp.symmetry_defect(),
        lminus_symmetry_defect=Lm.symmetry_defect(),
        flags=flags,
    )
