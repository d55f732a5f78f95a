"""Replicator dynamics as natural-gradient flows on statistical manifolds."""

from .errors import (
    BoundaryError,
    DimensionError,
    NotPositiveDefiniteError,
    NumericalError,
    ReplicatorError,
)
from .flow_engine import (
    AsymptoticReport,
    FlowConfig,
    RateFit,
    Trajectory,
    classify_asymptotics,
    closed_form_covariance,
    fit_convergence_rate,
    integrate,
)
from .gaussian_manifold import (
    GaussianParams,
    ManifoldTangent,
    QuadBilinearLandscape,
    expected_fitness,
    fisher_quadratic_form,
    kl_gaussian,
    natural_grad,
    replicator_rhs_gaussian,
    vanilla_grad,
)
from .nes_engine import (
    SampleBatch,
    ShapingSpec,
    estimate_search_gradient,
    log_likelihood_grad,
    natural_gradient_ascent,
    rank_utilities,
    sample_gaussian,
    sigma_f,
    sigma_normalized_rhs,
)
from .oracle import (
    GridDensity,
    finite_diff_grad,
    grid_moments,
    grid_replicator_rhs,
    integrate_grid,
    mc_expectation,
)
from .simplex_games import (
    FiniteLandscape,
    SimplexPoint,
    fisher_categorical,
    is_ess_candidate,
    kl_categorical,
    lyapunov_series,
    mean_fitness,
    replicator_rhs,
    shahshahani_gradient,
)

__version__ = "0.1.0"
