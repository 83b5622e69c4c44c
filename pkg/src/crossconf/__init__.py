"""Distribution-free prediction sets from cross-validation conformal methods.

The package builds fold-wise conformal p-values from any symmetric regression
algorithm and combines them into prediction sets with finite-sample marginal
coverage guarantees: the plain pooled-rank cross method, the mean-p-value
variant, and its exchangeable (e-), randomized (u-) and combined (eu-)
improvements, plus split conformal and CV+/jackknife+ for comparison.
"""

from .combiners import (
    CombinerSpec,
    CoverageBounds,
    MembershipVerdict,
    alpha_prime,
    coverage_bounds,
    evaluate_combiner,
    stat_emod,
    stat_eumod,
    stat_mod,
    stat_umod,
    stat_weighted_mean,
)
from .conformal_sets import (
    ALL_METHODS,
    FOLD_METHODS,
    InformativenessWarning,
    PredictionSet,
    SplitState,
    candidate_endpoints,
    cross_membership,
    cross_membership_pvalue_form,
    cross_set_direct,
    cross_set_from_scores,
    cv_plus_from_scores,
    cv_plus_set,
    empirical_quantile,
    endpoint_scan,
    fold_method_sets,
    is_subset,
    split_conformal,
    split_pvalue,
    split_set,
    split_set_from_state,
    variant_set,
    variant_set_from_scores,
)
from .data_model import (
    Dataset,
    FoldAssignment,
    RandomDraws,
    RandomSource,
    assign_folds,
    draw_randomization,
    load_csv,
    load_query_csv,
)
from .errors import InvalidConfigurationError, InvalidDataError, NumericalError
from .experiments import (
    AggregateReport,
    AggregateRow,
    SimulationConfig,
    TrialResult,
    mc_standard_error,
    run_real_data,
    run_simulation,
    simulate_instance,
)
from .pvalues import (
    FoldWeights,
    PValueVector,
    all_fold_pvalues,
    fold_pvalue,
    fold_pvalue_randomized,
    fold_weights,
)
from .regression import (
    KnnModel,
    LinearModel,
    RegressorSpec,
    fit,
    fit_knn,
    fit_min_norm_ols,
    fit_ridge,
    parse_regressor,
)
from .scores import CvScores, ScoreFunctionSpec, compute_cv_scores, test_score

__version__ = "0.1.0"
