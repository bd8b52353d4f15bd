"""L1-regularized hierarchical non-stationary Gaussian process regression.

The package fits one-dimensional signals whose smoothness and amplitude
change over time.  Two equivalent model constructions are provided: a
dense-covariance one (:mod:`nsgpreg.batch`) and a Markovian one built on
a stochastic differential equation (:mod:`nsgpreg.ssm`,
:mod:`nsgpreg.sssolver`).  Sparsity-inducing penalties on the varying
parameters are handled by consensus splitting or subgradient descent,
and :mod:`nsgpreg.experiment` reproduces the shipped Monte-Carlo
benchmark.
"""

import os as _os

# Pin BLAS to one thread before numpy loads: results must not depend on
# how many worker processes or BLAS threads happen to be available.
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .batch import (  # noqa: E402
    AdmmState,
    BatchLatent,
    BatchModelSpec,
    BatchProblem,
    RegConfig,
    TimeSeriesDataset,
    admm_fit,
    admm_lower_bound_inequality,
    augmented_lagrangian,
    map_fit,
    nsgp_objective,
    soft_threshold,
    subgradient_fit,
)
from .experiment import (  # noqa: E402
    METHOD_IDS,
    ExperimentConfig,
    MethodSummary,
    ResultTable,
    emit_results,
    make_rectangular_dataset,
    run_experiment,
    run_replicate,
)
from .inference import (  # noqa: E402
    GpMleResult,
    PosteriorMarginal,
    batch_marginal_uq,
    gp_mle_fit,
    gp_regression,
    nlpd,
    rmse,
    ss_marginal_uq,
)
from .kernels import (  # noqa: E402
    CovarianceMatrix,
    MaternParams,
    build_cov_matrix,
    lengthscale_partial,
    matern_correlation,
    nonstationary_cov_terms,
    nonstationary_matern,
    stationary_matern,
)
from .optimize import (  # noqa: E402
    AdmmRecord,
    AdmmStop,
    L1Block,
    OptimResult,
    SmoothProblem,
    SubgradStop,
    admm_minimize,
    augmented_lagrangian_value,
    check_gradient,
    minimize_smooth,
    minimize_subgradient,
)
from .ssm import (  # noqa: E402
    SsNsgpModel,
    discretize,
    implied_covariance,
    sde_drift_diffusion,
)
from .sssolver import (  # noqa: E402
    SsAdmmState,
    SsLatent,
    SsProblem,
    ss_admm_fit,
    ss_augmented_lagrangian,
    ss_map_fit,
    ss_objective,
    ss_subgradient_fit,
)
from .transforms import LinkTransform  # noqa: E402

__version__ = "0.1.0"
