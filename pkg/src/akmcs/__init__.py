"""Active-learning Kriging Monte Carlo simulation for failure probabilities."""

from .bench import (
    RASTRIGIN_REFERENCE_PF,
    RASTRIGIN_REFERENCE_PF_SE,
    ExternalEvaluatorFailure,
    ExternalLimitState,
    LinearGaussianLimitState,
    RastriginLimitState,
    linear_gaussian,
    make_limit_state,
    rastrigin,
)
from .bernoulli import (
    BernoulliField,
    ConsistencyError,
    DegenerateIndicator,
    bvn_orthant,
    failure_probability,
    rho_b,
    sigma_b2,
    sigma_b_cov,
)
from .driver import (
    ComparisonRow,
    IterationRecord,
    RunConfig,
    RunReport,
    compare,
    grid_dump,
    run,
)
from .enrich import EnrichmentBatch, FantasyPolicy, fantasy_score, quad_nodes, select_batch
from .estimator import (
    EstimatorStats,
    cov_mcs,
    pf_deterministic,
    pf_probabilistic,
    pool_cov_warning,
    stop_check,
    var_mc,
    var_mi,
)
from .kriging import (
    DesignOfExperiment,
    DuplicatePoints,
    JointPrediction,
    KrigingModel,
    MarginalPrediction,
    PoolPosterior,
    SingularCorrelation,
    fit,
    kernel,
    predict_joint,
    predict_marginal,
    refit_with,
)
from .learning import (
    ScoreVector,
    SelectionRule,
    StrategyKind,
    compute_scores,
    folded_mean,
    folded_std,
    score_eff,
    score_fneif,
    score_h,
    score_lif,
    score_opt_nco,
    score_opt_wco,
    score_reif,
    score_reif2,
    score_u,
    select,
)
from .rv_model import RandomVariableSpec, SamplePool, joint_pdf, lhs_sample, mc_sample

__version__ = "0.1.0"
