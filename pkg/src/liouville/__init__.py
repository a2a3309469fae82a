"""Phase-space densities, their entropy, and Hamiltonian transport."""
from .distributions import (
    AnalyticGaussian,
    GaussianMixture,
    GridDensity,
    Moments,
    ParticleEnsemble,
    density_at,
    moments,
    pushforward,
    sample,
)
from .dynamics import HamiltonianSystem, IntegratorConfig, centroid_track, evolve, step
from .entropy import EntropyEstimate, entropy_analytic, entropy_grid, entropy_knn, entropy_under_map
from .irreducible import InternalState, InternalTransform
from .phase_space import PhaseMap, PhasePoint, check_canonical, jacobian_at, symplectic_form
from .uncertainty import bound_from_entropy, check_bound, minimal_spread_distribution

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussian",
    "EntropyEstimate",
    "GaussianMixture",
    "GridDensity",
    "HamiltonianSystem",
    "IntegratorConfig",
    "InternalState",
    "InternalTransform",
    "Moments",
    "ParticleEnsemble",
    "PhaseMap",
    "PhasePoint",
    "bound_from_entropy",
    "centroid_track",
    "check_bound",
    "check_canonical",
    "density_at",
    "entropy_analytic",
    "entropy_grid",
    "entropy_knn",
    "entropy_under_map",
    "evolve",
    "jacobian_at",
    "minimal_spread_distribution",
    "moments",
    "pushforward",
    "sample",
    "step",
    "symplectic_form",
]
