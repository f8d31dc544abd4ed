"""2D Euler on the torus with Ornstein-Uhlenbeck transport noise.

Lagrangian solvers for the colored-noise system, its white-noise
(Stratonovich) limit, and the coupled large/small-scale system, together
with a Monte Carlo convergence harness and a diagnostic suite.
"""

__version__ = "0.1.0"

from .fields import (
    Grid,
    ScalarField,
    SpectralField,
    TorusPoint,
    VectorField,
    biot_savart,
    curl,
    divergence,
    from_spectral,
    geodesic_distance,
    lp_norm,
    to_spectral,
)
from .modulus import gamma, gamma_ode_bound_check, log_lip_kernel_check

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "SpectralField",
    "TorusPoint",
    "to_spectral",
    "from_spectral",
    "biot_savart",
    "curl",
    "divergence",
    "lp_norm",
    "geodesic_distance",
    "gamma",
    "gamma_ode_bound_check",
    "log_lip_kernel_check",
]
