"""Uniform grid, finite differences, quadrature and the discrete energy.

The discrete energy is

    E_h(U) = 1/2 sum_edges h |(U_{i+1} - U_i)/h|^2 + 1/2 sum_nodes w_i W(U_i)

with trapezoid weights ``w_i`` on the closed interval [-L, L]. Boundary nodes
carry the fixed ghost values, so the gradient of E_h with respect to the
interior values is exactly ``h * el_residual`` with the 3-point Laplacian.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from .errors import DomainError, UsageError
from .model import PotentialSpec


@dataclass(frozen=True)
class Grid:
    L: float
    N: int

    def __post_init__(self):
        if self.N < 3:
            raise DomainError(f"grid needs N >= 3 interior nodes, got {self.N}")
        if self.N % 2 == 0:
            raise DomainError(f"N must be odd so that x = 0 is a node, got {self.N}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise DomainError(f"half-width L must be positive and finite, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior nodes x_i = -L + i h, i = 1..N."""
        return -self.L + self.h * np.arange(1, self.N + 1)

    @property
    def x_full(self) -> np.ndarray:
        return -self.L + self.h * np.arange(0, self.N + 2)

    @property
    def center_index(self) -> int:
        return self.N // 2

    def refined(self) -> "Grid":
        """Grid with spacing h/2 sharing every node of this one."""
        return Grid(self.L, 2 * self.N + 1)

    @classmethod
    def for_spec(cls, spec: PotentialSpec, h: float = 0.01, margin: float = 18.0, L: float | None = None) -> "Grid":
        """Default grid: min decay rate times L at least ``margin``, spacing close to ``h``."""
        if L is None:
            rates = spec.decay_rates()
            slow = min(rates["a_vanishing"], rates["b_vanishing"], rates["a_saturating"], rates["b_saturating"])
            if slow <= 0:
                raise DomainError("potential has a degenerate equilibrium; pass L explicitly")
            L = margin / slow
        N = int(round(2 * L / h)) - 1
        if N % 2 == 0:
            N += 1
        return cls(L, max(N, 3))


@dataclass(frozen=True, eq=False)
class RealField2:
    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    left_bc: tuple[float, float]
    right_bc: tuple[float, float]

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        if u1.shape != (self.grid.N,) or u2.shape != (self.grid.N,):
            raise UsageError(f"field arrays must have length N={self.grid.N}")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise DomainError("field contains non-finite values")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "left_bc", tuple(float(v) for v in self.left_bc))
        object.__setattr__(self, "right_bc", tuple(float(v) for v in self.right_bc))

    @classmethod
    def for_spec(cls, spec: PotentialSpec, grid: Grid, u1, u2) -> "RealField2":
        return cls(grid, u1, u2, spec.b_state, spec.a_state)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2])

    def with_stacked(self, v: np.ndarray) -> "RealField2":
        n = self.grid.N
        return RealField2(self.grid, v[:n], v[n:], self.left_bc, self.right_bc)

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        """Components including the two boundary nodes."""
        return (
            np.concatenate([[self.left_bc[0]], self.u1, [self.right_bc[0]]]),
            np.concatenate([[self.left_bc[1]], self.u2, [self.right_bc[1]]]),
        )

    def to_complex(self, phases: tuple[float, float] = (0.0, 0.0)) -> "ComplexField2":
        e1, e2 = np.exp(1j * phases[0]), np.exp(1j * phases[1])
        return ComplexField2(
            self.grid,
            e1 * self.u1,
            e2 * self.u2,
            (e1 * self.left_bc[0], e2 * self.left_bc[1]),
            (e1 * self.right_bc[0], e2 * self.right_bc[1]),
        )


@dataclass(frozen=True, eq=False)
class ComplexField2:
    grid: Grid
    psi1: np.ndarray
    psi2: np.ndarray
    left_bc: tuple[complex, complex]
    right_bc: tuple[complex, complex]

    def __post_init__(self):
        p1 = np.asarray(self.psi1, dtype=complex)
        p2 = np.asarray(self.psi2, dtype=complex)
        if p1.shape != (self.grid.N,) or p2.shape != (self.grid.N,):
            raise UsageError(f"field arrays must have length N={self.grid.N}")
        if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
            raise DomainError("field contains non-finite values")
        object.__setattr__(self, "psi1", p1)
        object.__setattr__(self, "psi2", p2)
        object.__setattr__(self, "left_bc", tuple(complex(v) for v in self.left_bc))
        object.__setattr__(self, "right_bc", tuple(complex(v) for v in self.right_bc))

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.concatenate([[self.left_bc[0]], self.psi1, [self.right_bc[0]]]),
            np.concatenate([[self.left_bc[1]], self.psi2, [self.right_bc[1]]]),
        )

    def moduli(self) -> tuple[np.ndarray, np.ndarray]:
        return np.abs(self.psi1), np.abs(self.psi2)

    def replace(self, psi1=None, psi2=None) -> "ComplexField2":
        return ComplexField2(
            self.grid,
            self.psi1 if psi1 is None else psi1,
            self.psi2 if psi2 is None else psi2,
            self.left_bc,
            self.right_bc,
        )


Field = RealField2 | ComplexField2


def _components(U: Field):
    if isinstance(U, RealField2):
        return (U.u1, U.u2)
    return (U.psi1, U.psi2)


def second_derivative(f: np.ndarray, bc: tuple[float, float], h: float) -> np.ndarray:
    """3-point Laplacian (f[i-1] - 2 f[i] + f[i+1]) / h^2 with Dirichlet ghosts ``bc``."""
    f = np.asarray(f)
    out = -2.0 * f
    out[1:] += f[:-1]
    out[:-1] += f[1:]
    out[0] += bc[0]
    out[-1] += bc[1]
    return out / h**2


def centered_derivative(f: np.ndarray, bc: tuple[float, float], h: float) -> np.ndarray:
    fp = np.concatenate([[bc[0]], f, [bc[1]]])
    return (fp[2:] - fp[:-2]) / (2.0 * h)


_D6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def derivative6(f: np.ndarray, bc: tuple[float, float], h: float) -> np.ndarray:
    """Sixth-order centered first derivative; the field is continued by its boundary values."""
    fp = np.concatenate([[bc[0]] * 3, f, [bc[1]] * 3])
    n = len(f)
    return sum(c * fp[k : k + n] for k, c in enumerate(_D6) if c != 0.0) / h


def edge_differences(f_full: np.ndarray, h: float) -> np.ndarray:
    return np.diff(f_full) / h


def integrate(values: np.ndarray, grid: Grid, boundary: tuple[float, float] = (0.0, 0.0)) -> float:
    """Trapezoid rule over [-L, L] given interior samples and the two end values."""
    return float(grid.h * (np.sum(values) + 0.5 * (boundary[0] + boundary[1])))


def energy(spec: PotentialSpec, U: Field) -> float:
    """Truncated-domain energy 1/2 int |psi1'|^2 + |psi2'|^2 + W dx."""
    h = U.grid.h
    f1, f2 = U.full()
    kinetic = 0.5 * h * float(np.sum(np.abs(np.diff(f1) / h) ** 2 + np.abs(np.diff(f2) / h) ** 2))
    m1, m2 = np.abs(f1), np.abs(f2)
    W = spec.F(m1**2, m2**2)
    potential = 0.5 * integrate(W[1:-1], U.grid, (W[0], W[-1]))
    return kinetic + potential


def el_residual(spec: PotentialSpec, U: RealField2) -> RealField2:
    """Nodewise Euler-Lagrange residual -U'' + (1/2) grad W(U), the gradient of E per unit h."""
    h = U.grid.h
    f1, f2 = spec.dF(U.u1**2, U.u2**2)
    r1 = -second_derivative(U.u1, (U.left_bc[0], U.right_bc[0]), h) + f1 * U.u1
    r2 = -second_derivative(U.u2, (U.left_bc[1], U.right_bc[1]), h) + f2 * U.u2
    return RealField2(U.grid, r1, r2, (0.0, 0.0), (0.0, 0.0))


def residual_sup(spec: PotentialSpec, U: RealField2) -> float:
    r = el_residual(spec, U)
    return float(max(np.abs(r.u1).max(), np.abs(r.u2).max()))


def _as_complex(U: Field) -> ComplexField2:
    return U.to_complex() if isinstance(U, RealField2) else U


def rho_A(psi: Field, phi: Field, A: float) -> float:
    """Discrete distance: derivative L^2 + modulus L^2 + local sup on (-A, A), summed over components."""
    psi, phi = _as_complex(psi), _as_complex(phi)
    if psi.grid != phi.grid:
        raise UsageError("rho_A needs both fields on the same grid")
    grid = psi.grid
    if not (0 < A <= grid.L):
        raise UsageError(f"rho_A requires 0 < A <= L (A={A}, L={grid.L})")
    h = grid.h
    inner = np.abs(grid.x) <= A
    total = 0.0
    for a, b in zip(psi.full(), phi.full()):
        d = a - b
        total += math.sqrt(h * float(np.sum(np.abs(np.diff(d) / h) ** 2)))
        dm = np.abs(a) - np.abs(b)
        total += math.sqrt(max(integrate(dm[1:-1] ** 2, grid, (dm[0] ** 2, dm[-1] ** 2)), 0.0))
        total += float(np.abs(d[1:-1][inner]).max()) if inner.any() else 0.0
    return total


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

REAL_COLUMNS = ["x", "u1", "u2"]
COMPLEX_COLUMNS = ["x", "re_psi1", "im_psi1", "re_psi2", "im_psi2"]


def write_field_csv(path, U: Field) -> None:
    """One row per node, boundary nodes included, full double precision."""
    x = U.grid.x_full
    f1, f2 = U.full()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(U, RealField2):
            w.writerow(REAL_COLUMNS)
            for row in zip(x, f1, f2):
                w.writerow([repr(float(v)) for v in row])
        else:
            w.writerow(COMPLEX_COLUMNS)
            for xi, a, b in zip(x, f1, f2):
                w.writerow([repr(float(v)) for v in (xi, a.real, a.imag, b.real, b.imag)])


def read_field_csv(path) -> Field:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty field file")
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if body.ndim != 2 or body.shape[0] < 5:
        raise UsageError(f"{path}: need at least 5 nodes")
    x = body[:, 0]
    grid = Grid(-x[0], body.shape[0] - 2)
    if not np.allclose(x, grid.x_full, rtol=0, atol=1e-9 * max(1.0, grid.L)):
        raise UsageError(f"{path}: nodes are not a uniform symmetric grid")
    if header == REAL_COLUMNS:
        u1, u2 = body[:, 1], body[:, 2]
        return RealField2(grid, u1[1:-1], u2[1:-1], (u1[0], u2[0]), (u1[-1], u2[-1]))
    if header == COMPLEX_COLUMNS:
        p1 = body[:, 1] + 1j * body[:, 2]
        p2 = body[:, 3] + 1j * body[:, 4]
        return ComplexField2(grid, p1[1:-1], p2[1:-1], (p1[0], p2[0]), (p1[-1], p2[-1]))
    raise UsageError(f"{path}: unrecognized header {header}")
