"""Bayesian identification of cavities in a heat conductor.

Forward problem: reflected-Brownian-motion Monte Carlo evaluation of the
cavity heat field, finitized over an observation grid on the accessible
boundary arc.  Inverse problem: Gaussian-misfit posteriors over finite
families of cavity configurations, domain-ratio fields, and audits of the
posterior stability bounds.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .bayes import (
    DomainRatioField,
    ForwardTable,
    NoiseModel,
    PosteriorEnsemble,
    PriorEnsemble,
    average_observations,
    check_disintegration,
    domain_ratio,
    evidence,
    hellinger,
    l1_distance,
    posterior,
    potential,
    sigma_sup,
    simulate_data,
    stability_rhs_hellinger,
    stability_rhs_ratio,
    verify_stability,
)
from .forward import (
    BoundaryFlux,
    CFBound,
    FieldEstimate,
    ForwardCache,
    ObservationGrid,
    ObservationVector,
    SolverConfig,
    StartInsideCavity,
    bound_cf,
    estimate_u,
    finitize,
    forward,
    reflect_step,
    simulate_path,
)
from .geometry import (
    AxisBox,
    CavityEscapesOmega,
    CavitySet,
    ConductorDomain,
    DiskCavity,
    EmptyDomainError,
    GridDomain,
    OuterDomain,
    TangentialCavities,
    approximate_domain,
    conductor,
    contains,
    hausdorff_distance,
    hausdorff_to_grid_cover,
    validate_cavity_set,
)
from .priors import InfeasiblePrior, PriorSpec, benchmark_grid_family, enumerate_finite, sample_prior
from .radial import radial_oracle, richardson_value
