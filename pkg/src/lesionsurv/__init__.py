"""Survival benchmarking for multi-lesion cohorts: ROI aggregation
strategies, risk aggregation, inter-lesion heterogeneity indices, and a
leakage-safe Monte Carlo cross-validation harness."""

from .aggregation import (
    META_HISTOGRAM_STATS,
    RISK_AGG_KINDS,
    ROI_STRATEGY_KINDS,
    RiskAggregator,
    RoiStrategy,
    aggregate_risks,
    build_design,
    correlation_filter,
    meta_histogram_features,
    meta_histogram_schema,
)
from .cohort import (
    Cohort,
    DesignMatrix,
    IngestionError,
    Lesion,
    Patient,
    StandardizeParams,
    SurvivalResponse,
    load_lesions,
    load_outcomes,
    standardize,
    write_lesions,
    write_outcomes,
)
from .evaluation import (
    CohensD,
    KmCurve,
    LogrankResult,
    NoComparablePairsError,
    c_index,
    chi2_sf,
    cohens_d,
    effect_band,
    kaplan_meier,
    logrank_test,
)
from .harness import (
    GridAudit,
    PartitionPlan,
    Scheme,
    SchemeResult,
    SummaryRow,
    make_partitions,
    make_scheme_label,
    run_grid,
    run_scheme,
    run_scheme_shared,
    summarize,
)
from .heterogeneity import (
    DEFAULT_MINKOWSKI_P,
    METRIC_KINDS,
    Metric,
    cohort_heterogeneity,
    default_metrics,
    pairwise_distance,
    patient_heterogeneity,
    roi_count_groups,
    tercile_stratify,
)
from .survival import (
    AFT_DISTRIBUTIONS,
    MODEL_NAMES,
    FitError,
    FittedModel,
    ModelSpec,
    cox_fit,
    fit_model,
    stepwise_aic,
)
from .synthgen import HAZARD_LINKS, GenSpec, generate
from .util import rng_from, stable_seed

__version__ = "0.1.0"
