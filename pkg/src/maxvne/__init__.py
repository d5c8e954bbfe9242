"""maxvne: maximum von Neumann entropy over density matrices.

Spectral entropy functionals, numerical verification of the entropy minimax
game, and two kernel-learning applications: max-entropy kernel mixture
selection and max-entropy kernel completion, with a spectral-clustering
evaluation harness and a CLI (``mvne``).
"""

from .cluster_eval import ClusterLabels, MetricReport, acc, ari, evaluate, nmi, spectral_cluster
from .completion import (
    AdamSettings,
    CompletionProblem,
    CompletionResult,
    ObservationMask,
    complete_kernel,
    feasible_set_check,
    logdet_surrogate_objective,
    mask_generator,
    purity_objective,
)
from .games import (
    ConstraintSet,
    CqState,
    EqualizerReport,
    GibbsSolution,
    MinimaxReport,
    NewtonSettings,
    PolytopeAmbiguitySet,
    conditional_log_loss,
    conditional_quadratic_bayes,
    conditional_vne,
    lower_value,
    solve_gibbs,
    upper_value,
    verify_equalizer,
    verify_minimax,
)
from .kernels import (
    EmbeddingMatrix,
    KernelBundle,
    KernelMatrix,
    build_kernel,
    calibrate_bandwidth,
    covariance_density,
    kernel_density,
    normalize_kernel,
)
from .mixture import (
    BoxedSimplex,
    FullSimplex,
    MixtureProblem,
    MixtureSolution,
    PGASettings,
    concatenation_recipe,
    mixture_density,
    project_simplex,
    select_mixture,
    vne_alpha_gradient,
)
from .spectral import (
    DensityMatrix,
    EpsilonFloor,
    FGenerator,
    SymMatrix,
    bregman_divergence,
    f_loss,
    log_loss,
    matrix_function,
    purity,
    quantum_relative_entropy,
    random_density,
    renyi2,
    renyi_entropy,
    trace_entropy,
    vne,
)

__version__ = "0.1.0"
