"""Domain walls in coupled Gross-Pitaevskii systems: profiles, spectra, dynamics, pinning."""

__version__ = "0.1.0"

from .model import PotentialSpec, eval_W, grad_W, hess_W, third_W, exact_wall, check_W_axioms
from .discretization import Grid, RealField2, ComplexField2, energy, el_residual, rho_A

__all__ = [
    "__version__",
    "PotentialSpec",
    "eval_W",
    "grad_W",
    "hess_W",
    "third_W",
    "exact_wall",
    "check_W_axioms",
    "Grid",
    "RealField2",
    "ComplexField2",
    "energy",
    "el_residual",
    "rho_A",
]
