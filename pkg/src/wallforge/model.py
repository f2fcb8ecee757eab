"""Admissible two-well potentials W(psi) = F(|psi1|^2, |psi2|^2).

Three polynomial families are supported:

* ``symmetric-cubic``  F = 1/2 (x1 + x2 - 1)^2 + (gamma - 1) x1 x2
* ``general-cubic``    F = 1/2 (sqrt(g11) x1 + sqrt(g22) x2 - mu)^2
                           + (g12 - sqrt(g11 g22)) x1 x2
* ``quartic``          F = 1/4 (x1^2 + x2^2 - 1)^2 + (gamma - 1)/2 x1^2 x2^2

Derivatives of F are hand-coded per family; derivatives of W with respect to
the real amplitudes (u1, u2) follow from the chain rule with x_j = u_j^2.
All point-wise functions accept either a 2-vector or an array of shape
``(2, n)`` and broadcast over the trailing axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import AxiomViolation, DomainError, InvalidParameterError, UnsupportedError

KINDS = ("symmetric-cubic", "general-cubic", "quartic")

_PARAM_KEYS = {
    "symmetric-cubic": ("gamma",),
    "general-cubic": ("g11", "g22", "g12", "mu"),
    "quartic": ("gamma",),
}


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    gamma: float | None = None
    g11: float | None = None
    g22: float | None = None
    g12: float | None = None
    mu: float | None = None
    a_state: tuple[float, float] = field(init=False)
    b_state: tuple[float, float] = field(init=False)
    c_state: tuple[float, float] | None = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        for key in ("gamma", "g11", "g22", "g12", "mu"):
            val = getattr(self, key)
            wanted = key in _PARAM_KEYS[self.kind]
            if wanted and val is None:
                raise InvalidParameterError(f"{self.kind} potential requires parameter {key!r}")
            if not wanted and val is not None:
                raise InvalidParameterError(f"{self.kind} potential does not take parameter {key!r}")
            if val is not None:
                if not math.isfinite(val):
                    raise InvalidParameterError(f"parameter {key} must be finite, got {val}")
                object.__setattr__(self, key, float(val))

        c_state = None
        if self.kind in ("symmetric-cubic", "quartic"):
            if not self.gamma > 1.0:
                raise InvalidParameterError(
                    f"{self.kind} potential requires gamma > 1 (got gamma={self.gamma})"
                )
            a, b = 1.0, 1.0
            if self.kind == "symmetric-cubic":
                c = 1.0 / math.sqrt(1.0 + self.gamma)
                c_state = (c, c)
        else:
            if not (self.g11 > 0 and self.g22 > 0):
                raise InvalidParameterError("general-cubic potential requires g11 > 0 and g22 > 0")
            if not self.g12 > math.sqrt(self.g11 * self.g22):
                raise InvalidParameterError(
                    "general-cubic potential requires g12 > sqrt(g11*g22) "
                    f"(got g12={self.g12}, sqrt(g11*g22)={math.sqrt(self.g11 * self.g22)})"
                )
            if not self.mu > 0:
                raise InvalidParameterError("general-cubic potential requires mu > 0")
            a = math.sqrt(self.mu) / self.g11 ** 0.25
            b = math.sqrt(self.mu) / self.g22 ** 0.25
        object.__setattr__(self, "a_state", (a, 0.0))
        object.__setattr__(self, "b_state", (0.0, b))
        object.__setattr__(self, "c_state", c_state)

    # -- construction helpers -------------------------------------------------
    @classmethod
    def symmetric_cubic(cls, gamma: float) -> "PotentialSpec":
        return cls("symmetric-cubic", gamma=gamma)

    @classmethod
    def general_cubic(cls, g11: float, g22: float, g12: float, mu: float = 1.0) -> "PotentialSpec":
        return cls("general-cubic", g11=g11, g22=g22, g12=g12, mu=mu)

    @classmethod
    def quartic(cls, gamma: float) -> "PotentialSpec":
        return cls("quartic", gamma=gamma)

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        if not isinstance(data, dict):
            raise InvalidParameterError("potential spec must be a JSON object")
        kind = data.get("kind")
        if kind not in KINDS:
            raise InvalidParameterError(f"unknown potential kind {kind!r}; expected one of {KINDS}")
        unknown = set(data) - {"kind", *_PARAM_KEYS[kind]}
        if unknown:
            raise InvalidParameterError(f"unexpected keys for {kind} potential: {sorted(unknown)}")
        return cls(kind, **{k: data[k] for k in _PARAM_KEYS[kind] if k in data})

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in _PARAM_KEYS[self.kind]:
            out[key] = getattr(self, key)
        return out

    # -- derived data -----------------------------------------------------------
    @property
    def a(self) -> float:
        return self.a_state[0]

    @property
    def b(self) -> float:
        return self.b_state[1]

    @property
    def is_swap_symmetric(self) -> bool:
        """True when W(psi2, psi1) = W(psi1, psi2)."""
        if self.kind == "general-cubic":
            return self.g11 == self.g22
        return True

    @property
    def mass_weights(self) -> tuple[float, float, float]:
        """(sqrt(g11), sqrt(g22), mu) entering the center-of-mass density."""
        if self.kind == "general-cubic":
            return math.sqrt(self.g11), math.sqrt(self.g22), self.mu
        return 1.0, 1.0, 1.0

    # -- F and its derivatives in the squared-modulus variables ---------------
    def F(self, x1, x2):
        if self.kind == "symmetric-cubic":
            return 0.5 * (x1 + x2 - 1.0) ** 2 + (self.gamma - 1.0) * x1 * x2
        if self.kind == "general-cubic":
            s = math.sqrt(self.g11) * x1 + math.sqrt(self.g22) * x2 - self.mu
            return 0.5 * s**2 + (self.g12 - math.sqrt(self.g11 * self.g22)) * x1 * x2
        return 0.25 * (x1**2 + x2**2 - 1.0) ** 2 + 0.5 * (self.gamma - 1.0) * x1**2 * x2**2

    def dF(self, x1, x2):
        """(dF/dx1, dF/dx2)."""
        if self.kind == "symmetric-cubic":
            g = self.gamma
            return x1 + g * x2 - 1.0, g * x1 + x2 - 1.0
        if self.kind == "general-cubic":
            return (
                self.g11 * x1 + self.g12 * x2 - math.sqrt(self.g11) * self.mu,
                self.g12 * x1 + self.g22 * x2 - math.sqrt(self.g22) * self.mu,
            )
        g = self.gamma
        return x1**3 + g * x1 * x2**2 - x1, x2**3 + g * x1**2 * x2 - x2

    def d2F(self, x1, x2):
        """(F11, F12, F22)."""
        one = np.ones_like(np.asarray(x1, dtype=float))
        if self.kind == "symmetric-cubic":
            return one, self.gamma * one, one
        if self.kind == "general-cubic":
            return self.g11 * one, self.g12 * one, self.g22 * one
        g = self.gamma
        return 3 * x1**2 + g * x2**2 - 1.0, 2 * g * x1 * x2, 3 * x2**2 + g * x1**2 - 1.0

    def d3F(self, x1, x2):
        """(F111, F112, F122, F222)."""
        zero = np.zeros_like(np.asarray(x1, dtype=float))
        if self.kind != "quartic":
            return zero, zero, zero, zero
        g = self.gamma
        return 6 * x1, 2 * g * x2, 2 * g * x1, 6 * x2

    def mixed_sign_symbolic(self) -> bool:
        """Closed-form sign argument for (W5): d1 d2 F >= 0 and not identically zero on R^2_+."""
        if self.kind == "symmetric-cubic":
            return self.gamma > 0  # F12 = gamma
        if self.kind == "general-cubic":
            return self.g12 > 0  # F12 = g12
        return self.gamma > 0  # F12 = 2 gamma x1 x2

    def potential_hessian_at(self, which: str) -> np.ndarray:
        state = {"a": self.a_state, "b": self.b_state}[which]
        return hess_W(self, np.array(state))

    def essential_edge(self) -> float:
        """Bottom of the continuous spectrum of L+, min eigenvalue of D^2W/2 at a and b."""
        eigs = [np.linalg.eigvalsh(0.5 * self.potential_hessian_at(w)).min() for w in "ab"]
        return float(min(eigs))

    def decay_rates(self) -> dict[str, float]:
        """Linear decay rates of the wall tails at both equilibria.

        Keys: ``vanishing`` (component tending to 0) and ``saturating``
        (component tending to its nonzero equilibrium), for the right end ``a``
        and the left end ``b``.
        """
        ha = 0.5 * self.potential_hessian_at("a")
        hb = 0.5 * self.potential_hessian_at("b")
        return {
            "a_saturating": math.sqrt(max(ha[0, 0], 0.0)),
            "a_vanishing": math.sqrt(max(ha[1, 1], 0.0)),
            "b_saturating": math.sqrt(max(hb[1, 1], 0.0)),
            "b_vanishing": math.sqrt(max(hb[0, 0], 0.0)),
        }


def _as_points(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape[0] != 2:
        raise DomainError(f"expected a 2-vector or array of shape (2, n), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("potential evaluated at a non-finite point")
    return arr


def eval_W(spec: PotentialSpec, p):
    u = _as_points(p)
    return spec.F(u[0] ** 2, u[1] ** 2)


def grad_W(spec: PotentialSpec, p) -> np.ndarray:
    u = _as_points(p)
    f1, f2 = spec.dF(u[0] ** 2, u[1] ** 2)
    return np.array([2 * u[0] * f1, 2 * u[1] * f2])


def hess_W(spec: PotentialSpec, p) -> np.ndarray:
    """Hessian of W in (u1, u2); shape (2, 2) or (2, 2, n)."""
    u = _as_points(p)
    x1, x2 = u[0] ** 2, u[1] ** 2
    f1, f2 = spec.dF(x1, x2)
    f11, f12, f22 = spec.d2F(x1, x2)
    h11 = 2 * f1 + 4 * x1 * f11
    h22 = 2 * f2 + 4 * x2 * f22
    h12 = 4 * u[0] * u[1] * f12
    return np.array([[h11, h12], [h12, h22]])


def third_W(spec: PotentialSpec, p) -> np.ndarray:
    """Third derivative tensor of W in (u1, u2); shape (2, 2, 2) or (2, 2, 2, n).

    d_ijk W = 4 delta_ij u_k F_ik + 4 delta_ik u_j F_ij + 4 delta_jk u_i F_ij
              + 8 u_i u_j u_k F_ijk
    """
    u = _as_points(p)
    x1, x2 = u[0] ** 2, u[1] ** 2
    f11, f12, f22 = spec.d2F(x1, x2)
    f111, f112, f122, f222 = spec.d3F(x1, x2)
    F2 = [[f11, f12], [f12, f22]]
    F3 = {(0, 0, 0): f111, (0, 0, 1): f112, (0, 1, 1): f122, (1, 1, 1): f222}
    out = np.zeros((2, 2, 2) + u.shape[1:])
    for i in range(2):
        for j in range(2):
            for k in range(2):
                val = 8 * u[i] * u[j] * u[k] * F3[tuple(sorted((i, j, k)))]
                if i == j:
                    val = val + 4 * u[k] * F2[i][k]
                if i == k:
                    val = val + 4 * u[j] * F2[i][j]
                if j == k:
                    val = val + 4 * u[i] * F2[i][j]
                out[i, j, k] = val
    return out


def exact_wall(spec: PotentialSpec, x):
    """Closed-form wall (u1, u2) for the symmetric-cubic potential at gamma = 3."""
    if spec.kind != "symmetric-cubic" or spec.gamma != 3.0:
        raise UnsupportedError("exact_wall is only defined for the symmetric-cubic potential with gamma = 3")
    t = np.tanh(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return 0.5 * (1.0 + t), 0.5 * (1.0 - t)


# ---------------------------------------------------------------------------
# Axiom checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxiomFailure:
    axiom: str
    message: str
    witness: tuple[float, float]


@dataclass
class AxiomReport:
    spec: PotentialSpec
    n_samples: int
    min_W: float
    min_W_point: tuple[float, float]
    W_at_equilibria: tuple[float, float]
    hess_min_eig_a: float
    hess_min_eig_b: float
    R0: float | None
    c0: float | None
    mixed_min: float
    mixed_max: float
    mixed_symbolic_ok: bool
    failures: list[AxiomFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def passed(self, axiom: str) -> bool:
        return all(f.axiom != axiom for f in self.failures)

    def to_dict(self) -> dict:
        return {
            "potential": self.spec.to_dict(),
            "n_samples": self.n_samples,
            "min_W": self.min_W,
            "min_W_point": list(self.min_W_point),
            "W_at_equilibria": list(self.W_at_equilibria),
            "hess_min_eig_a": self.hess_min_eig_a,
            "hess_min_eig_b": self.hess_min_eig_b,
            "R0": self.R0,
            "c0": self.c0,
            "mixed_min": self.mixed_min,
            "mixed_max": self.mixed_max,
            "mixed_symbolic_ok": self.mixed_symbolic_ok,
            "ok": self.ok,
            "failures": [
                {"axiom": f.axiom, "message": f.message, "witness": list(f.witness)} for f in self.failures
            ],
        }


def check_W_axioms(
    spec: PotentialSpec,
    sample_box: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 2.0), (0.0, 2.0)),
    n_samples: int = 10_000,
    seed: int = 0,
    raise_on_failure: bool = True,
) -> AxiomReport:
    """Sampled verification of (W2)-(W5) on a box in the closed positive quadrant.

    (W1) holds by construction since every family is written through F.
    (W4) is reported as the smallest candidate radius R0 for which
    grad W(U).U >= c0 |U|^2 with c0 > 0 on all samples with |U| >= R0.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    (x_lo, x_hi), (y_lo, y_hi) = sample_box
    if x_lo < 0 or y_lo < 0 or x_hi <= x_lo or y_hi <= y_lo:
        raise DomainError(f"sample box must be a nondegenerate rectangle in R^2_+, got {sample_box}")
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.uniform(x_lo, x_hi, n_samples), rng.uniform(y_lo, y_hi, n_samples)])
    failures: list[AxiomFailure] = []

    # (W2) nonnegativity, zeros only at the equilibria
    W = eval_W(spec, pts)
    i_min = int(np.argmin(W))
    W_eq = (float(eval_W(spec, spec.a_state)), float(eval_W(spec, spec.b_state)))
    if W[i_min] < -1e-12:
        failures.append(AxiomFailure("W2", f"W takes negative value {W[i_min]:.3e}", tuple(pts[:, i_min])))
    if max(abs(w) for w in W_eq) > 1e-12:
        failures.append(AxiomFailure("W2", f"W does not vanish at the equilibria: {W_eq}", spec.a_state))
    dist = np.minimum(
        np.hypot(pts[0] - spec.a_state[0], pts[1] - spec.a_state[1]),
        np.hypot(pts[0] - spec.b_state[0], pts[1] - spec.b_state[1]),
    )
    away = dist > 1e-3 * max(spec.a, spec.b)
    if np.any(W[away] <= 0):
        k = int(np.flatnonzero(away & (W <= 0))[0])
        failures.append(AxiomFailure("W2", "W vanishes away from a and b", tuple(pts[:, k])))

    # (W3) nondegenerate minima
    eig_a = float(np.linalg.eigvalsh(hess_W(spec, np.array(spec.a_state))).min())
    eig_b = float(np.linalg.eigvalsh(hess_W(spec, np.array(spec.b_state))).min())
    for name, eig, state in (("a", eig_a, spec.a_state), ("b", eig_b, spec.b_state)):
        if not eig > 1e-12:
            failures.append(
                AxiomFailure("W3", f"Hessian at {name} is not positive definite (min eig {eig:.3e})", state)
            )

    # (W4) coercivity far out
    radius = np.hypot(pts[0], pts[1])
    flux = np.sum(grad_W(spec, pts) * pts, axis=0)
    ratio = flux / np.maximum(radius, 1e-300) ** 2
    r_eq = max(spec.a, spec.b)
    R0 = c0 = None
    candidates = np.linspace(r_eq, 0.95 * radius.max(), 40)
    for r in candidates:
        sel = radius >= r
        if sel.sum() < 10:
            break
        cmin = float(ratio[sel].min())
        if cmin > 0:
            R0, c0 = float(r), cmin
            break
    if R0 is None:
        far = radius >= candidates[0]
        k = int(np.argmin(np.where(far, ratio, np.inf))) if np.any(far) else int(np.argmax(radius))
        failures.append(
            AxiomFailure("W4", "no radius R0 in the sample box with grad W(U).U >= c0|U|^2, c0 > 0", tuple(pts[:, k]))
        )

    # (W5) cooperative coupling in the squared variables
    _, f12, _ = spec.d2F(pts[0] ** 2, pts[1] ** 2)
    f12 = np.broadcast_to(f12, pts[0].shape)
    k12 = int(np.argmin(f12))
    symbolic = spec.mixed_sign_symbolic()
    if f12[k12] < -1e-12:
        failures.append(AxiomFailure("W5", f"d1 d2 F negative ({f12[k12]:.3e})", tuple(pts[:, k12])))
    if not f12.max() > 0:
        failures.append(AxiomFailure("W5", "d1 d2 F vanishes identically on the samples", tuple(pts[:, 0])))
    if not symbolic:
        failures.append(AxiomFailure("W5", "closed-form sign argument fails", (0.0, 0.0)))

    report = AxiomReport(
        spec=spec,
        n_samples=n_samples,
        min_W=float(W[i_min]),
        min_W_point=tuple(float(v) for v in pts[:, i_min]),
        W_at_equilibria=W_eq,
        hess_min_eig_a=eig_a,
        hess_min_eig_b=eig_b,
        R0=R0,
        c0=c0,
        mixed_min=float(f12.min()),
        mixed_max=float(f12.max()),
        mixed_symbolic_ok=symbolic,
        failures=failures,
    )
    if failures and raise_on_failure:
        raise AxiomViolation(report)
    return report
