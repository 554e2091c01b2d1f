"""Zero-Hopf bifurcations of the FitzHugh-Nagumo travelling-wave ODE."""

__version__ = "0.1.0"

from .errors import (DegenerateFamily, DomainError, FirstOrderNotZero, IntegrationError, MaxTimeExceeded,
                     NoReturn, QuadratureNotConverged, ShootingDiverged, StepSizeUnderflow, TangentialCrossing)
from .fhn_core import (Equilibrium, Params, State, ZeroHopfFamily, char_poly_origin, char_poly_pm,
                       classify_zero_hopf, eigenvalues_cubic, equilibria, vector_field)

__all__ = [
    "DegenerateFamily", "DomainError", "FirstOrderNotZero", "IntegrationError", "MaxTimeExceeded", "NoReturn",
    "QuadratureNotConverged", "ShootingDiverged", "StepSizeUnderflow", "TangentialCrossing",
    "Equilibrium", "Params", "State", "ZeroHopfFamily", "char_poly_origin", "char_poly_pm",
    "classify_zero_hopf", "eigenvalues_cubic", "equilibria", "vector_field",
]
