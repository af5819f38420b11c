"""Kernel regression with network cohesion."""

from .errors import (
    CohesionError,
    DegenerateCriterionError,
    GraphDriftError,
    GraphError,
    InputError,
    RetryExhaustedError,
    SingularSystemError,
    UnreachableNodesError,
)
from .graph import (
    Graph,
    Laplacian,
    LaplacianPartition,
    NetworkTopology,
    build_laplacian,
    cohesion_penalty,
    generate_network,
    harmonic_extension,
    partition_laplacian,
    read_edge_list,
    write_edge_list,
)
from .kernels import KernelSpec, cross_gram, gram, kernel_eval
from .predictor import PredictionInput, fitted_values, mse, predict
from .solver import (
    CohesionFit,
    FitConfig,
    assemble_system,
    fit,
    fit_cohesion_only,
    gcv_score,
    hat_matrix,
    select_hyperparameters,
)

__version__ = "0.1.0"
