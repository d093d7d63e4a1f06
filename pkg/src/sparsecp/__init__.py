"""Sparse low-rank canonical tensor regression from scattered samples.

Builds m-term canonical models sum_i alpha_i prod_k w_i^(k)(y_k) from
noise-free point evaluations by greedy rank-one corrections, with
l1-regularized alternating least squares and cross-validated rank
selection.
"""

from .errors import (
    AllStepsInvalid,
    ConstantResponse,
    DegenerateColumn,
    DegenerateFactor,
    EmptyModel,
    MalformedDocument,
    OutOfDomain,
    RankDeficient,
    SparsecpError,
    ZeroDenominator,
)
from .linalg import hat_diagonal, solve_least_squares
from .bases import (
    Interval,
    TensorBasis,
    UnivariateBasis,
    basis_from_descriptor,
    design_matrix,
    eval_univariate,
    gram_matrix,
    legendre_basis,
    multiwavelet_basis,
    piecewise_legendre_basis,
)
from .solvers import (
    PathStep,
    RegularizationPath,
    SelectedSolution,
    lars_lasso_path,
    lasso_loo,
    loo_select,
    ols,
    ridge_cv,
)
from .tensor import (
    CanonicalModel,
    RankOneTerm,
    deserialize,
    evaluate,
    evaluate_batch,
    normalize_term,
    serialize,
    sparsity_ratios,
    term_sparsity,
    term_values,
)
from .greedy import (
    AlsConfig,
    FitReport,
    GreedyConfig,
    cv_rank_errors,
    greedy_fit,
    pick_rank,
    select_rank,
    sparse_rank_one,
    update_coefficients,
)
from .bench import (
    BenchmarkFunction,
    SampleSet,
    benchmark,
    crenel,
    evaluate_benchmark,
    evaluated_samples,
    read_sample_csv,
    relative_error,
    repetition_study,
    sample_rule,
    sample_uniform,
)

__version__ = "0.1.0"
