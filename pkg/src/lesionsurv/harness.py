"""Monte Carlo cross-validation engine: fixed patient-level partitions
shared by every scheme, scheme execution, and cross-scheme summaries.

Failure policy: iterations where the model cannot be fit or the test c-index
is undefined record NaN and stay in place, so schemes remain comparable
iteration by iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .aggregation import (
    ROI_STRATEGY_KINDS,
    RiskAggregator,
    RoiStrategy,
    aggregate_risks,
    build_design,
)
from .cohort import Cohort
from .evaluation import NoComparablePairsError, c_index, cohens_d
from .heterogeneity import DEFAULT_MINKOWSKI_P, default_metrics
from .survival import FitError, ModelSpec, fit_model
from .util import stable_seed

DEFAULT_CORRELATION_THRESHOLD = 0.9

BAND_STARS = {"negligible": "", "small": "*", "medium": "**", "large": "***"}


@dataclass(frozen=True)
class PartitionPlan:
    """Per-iteration train/test patient-id splits, fixed across schemes."""

    master_seed: int
    patient_ids: tuple[str, ...]
    train: tuple[tuple[str, ...], ...]
    test: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.train) != len(self.test):
            raise ValueError("train/test iteration counts differ")
        n = len(self.patient_ids)
        want_train = round(2 * n / 3)
        all_ids = set(self.patient_ids)
        for k, (tr, te) in enumerate(zip(self.train, self.test)):
            if len(tr) != want_train:
                raise ValueError(f"iteration {k}: train size {len(tr)} != {want_train}")
            tr_set, te_set = set(tr), set(te)
            if tr_set & te_set:
                raise ValueError(f"iteration {k}: train/test overlap")
            if tr_set | te_set != all_ids:
                raise ValueError(f"iteration {k}: split does not cover the cohort")

    @property
    def n_iterations(self) -> int:
        return len(self.train)

    def to_json(self) -> str:
        return json.dumps(
            {
                "master_seed": self.master_seed,
                "patient_ids": list(self.patient_ids),
                "train": [list(t) for t in self.train],
                "test": [list(t) for t in self.test],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        raw = json.loads(text)
        return cls(
            int(raw["master_seed"]),
            tuple(raw["patient_ids"]),
            tuple(tuple(t) for t in raw["train"]),
            tuple(tuple(t) for t in raw["test"]),
        )


def make_partitions(cohort: Cohort, n_iterations: int, seed: int) -> PartitionPlan:
    """Independent uniform 2/3-1/3 patient splits, one per iteration, with
    per-iteration RNG streams so execution order can never matter."""
    if cohort.n_patients < 6:
        raise ValueError("need at least 6 patients to partition")
    if n_iterations < 1:
        raise ValueError("n_iterations must be positive")
    ids = cohort.patient_ids
    n = len(ids)
    k = round(2 * n / 3)
    train: list[tuple[str, ...]] = []
    test: list[tuple[str, ...]] = []
    for i in range(n_iterations):
        rng = _partition_rng(seed, i)
        perm = rng.permutation(n)
        train.append(tuple(ids[j] for j in sorted(perm[:k])))
        test.append(tuple(ids[j] for j in sorted(perm[k:])))
    return PartitionPlan(seed, ids, tuple(train), tuple(test))


def _partition_rng(seed: int, iteration: int):
    from .util import rng_from

    return rng_from(seed, "partition", iteration)


@dataclass(frozen=True)
class Scheme:
    """One cell of the benchmark grid: ROI strategy x model, plus a risk
    aggregator when the strategy keeps all lesions."""

    strategy_kind: str
    model: ModelSpec
    aggregator: RiskAggregator | None = None
    label: str = ""

    def __post_init__(self):
        if self.strategy_kind not in ROI_STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind '{self.strategy_kind}'")
        if (self.strategy_kind == "all_roi") != (self.aggregator is not None):
            raise ValueError("aggregator must be present exactly when strategy is all_roi")
        if not self.label:
            object.__setattr__(self, "label", make_scheme_label(
                self.strategy_kind,
                self.aggregator.kind if self.aggregator else None,
                self.model.name,
            ))


def make_scheme_label(strategy_kind: str, agg_kind: str | None, model_name: str) -> str:
    base = strategy_kind if agg_kind is None else f"{strategy_kind}_{agg_kind}"
    return f"{base}+{model_name}"


@dataclass(frozen=True)
class SchemeResult:
    label: str
    c_indices: np.ndarray  # NaN marks a failed iteration

    @property
    def values(self) -> np.ndarray:
        return self.c_indices[~np.isnan(self.c_indices)]

    @property
    def n_failed(self) -> int:
        return int(np.isnan(self.c_indices).sum())

    @property
    def median(self) -> float:
        vals = self.values
        return float(np.median(vals)) if len(vals) else math.nan

    @property
    def n_below_half(self) -> int:
        return int((self.values < 0.5).sum())


@dataclass
class GridAudit:
    """Instrumentation: model-fit count and train/test patient overlaps
    observed while running (risk aggregators must share fits)."""

    n_fits: int = 0
    n_design_checks: int = 0
    n_overlaps: int = 0

    def record_designs(self, train_ids: Iterable[str], test_ids: Iterable[str]):
        self.n_design_checks += 1
        self.n_overlaps += len(set(train_ids) & set(test_ids))


def _strategy_for_iteration(kind: str, master_seed: int, iteration: int) -> RoiStrategy:
    if kind in ("random_roi", "random_roi_diversity"):
        return RoiStrategy(kind, seed=stable_seed(master_seed, "roi_draw", iteration))
    return RoiStrategy(kind)


def run_scheme_shared(
    cohort: Cohort,
    strategy_kind: str,
    model: ModelSpec,
    plan: PartitionPlan,
    aggregators: Sequence[RiskAggregator] | None = None,
    *,
    corr_threshold: float = DEFAULT_CORRELATION_THRESHOLD,
    minkowski_p: float = DEFAULT_MINKOWSKI_P,
    audit: GridAudit | None = None,
) -> list[SchemeResult]:
    """Run one strategy x model over the plan; for all_roi, score every
    aggregator from the single per-iteration fit."""
    if plan.patient_ids != cohort.patient_ids:
        raise ValueError("partition plan was built on a different cohort")
    if strategy_kind == "all_roi":
        if not aggregators:
            raise ValueError("all_roi needs at least one aggregator")
    else:
        if aggregators:
            raise ValueError("aggregators only apply to all_roi")
        aggregators = None

    metrics = default_metrics(minkowski_p)
    n_iter = plan.n_iterations
    n_outputs = len(aggregators) if aggregators else 1
    c_values = np.full((n_outputs, n_iter), np.nan)

    responses = {p.patient_id: p.response for p in cohort.patients}

    for i in range(n_iter):
        strategy = _strategy_for_iteration(strategy_kind, plan.master_seed, i)
        train_cohort = cohort.subset(plan.train[i])
        test_cohort = cohort.subset(plan.test[i])
        model_seed = stable_seed(plan.master_seed, "model", model.name, i)
        threshold = corr_threshold if strategy_kind == "meta_histogram" else None
        try:
            train_design = build_design(train_cohort, strategy, metrics)
            fitted = fit_model(
                train_design, model, model_seed, filter_threshold=threshold
            )
            if audit is not None:
                audit.n_fits += 1
            test_design = build_design(test_cohort, strategy, metrics)
            if audit is not None:
                audit.record_designs(train_design.patient_ids, test_design.patient_ids)
            risks = fitted.predict_risk(test_design)

            if aggregators is None:
                pids = list(test_design.patient_ids)
                per_patient = [dict(zip(pids, risks))]
            else:
                per_patient = [
                    aggregate_risks(test_design.patient_ids, risks, test_design.volumes, agg)
                    for agg in aggregators
                ]

            order = plan.test[i]
            times = np.array([responses[pid].time for pid in order])
            events = np.array([responses[pid].event for pid in order], dtype=bool)
            for out_idx, risk_map in enumerate(per_patient):
                patient_risks = np.array([risk_map[pid] for pid in order])
                c_values[out_idx, i] = c_index(patient_risks, times, events)
        except (FitError, NoComparablePairsError):
            continue  # NaN sentinel stays in place for every output

    if aggregators is None:
        label = make_scheme_label(strategy_kind, None, model.name)
        return [SchemeResult(label, c_values[0])]
    return [
        SchemeResult(make_scheme_label(strategy_kind, agg.kind, model.name), c_values[k])
        for k, agg in enumerate(aggregators)
    ]


def run_scheme(
    cohort: Cohort,
    scheme: Scheme,
    plan: PartitionPlan,
    *,
    corr_threshold: float = DEFAULT_CORRELATION_THRESHOLD,
    minkowski_p: float = DEFAULT_MINKOWSKI_P,
    audit: GridAudit | None = None,
) -> SchemeResult:
    aggs = [scheme.aggregator] if scheme.aggregator else None
    results = run_scheme_shared(
        cohort, scheme.strategy_kind, scheme.model, plan, aggs,
        corr_threshold=corr_threshold, minkowski_p=minkowski_p, audit=audit,
    )
    result = results[0]
    if scheme.label != result.label:
        result = SchemeResult(scheme.label, result.c_indices)
    return result


def run_grid(
    cohort: Cohort,
    schemes: Sequence[Scheme],
    plan: PartitionPlan,
    *,
    corr_threshold: float = DEFAULT_CORRELATION_THRESHOLD,
    minkowski_p: float = DEFAULT_MINKOWSKI_P,
    audit: GridAudit | None = None,
) -> list[SchemeResult]:
    """Run every scheme on the shared plan; schemes differing only in risk
    aggregator are grouped so each (iteration, model) is fit exactly once."""
    groups: dict[tuple[str, ModelSpec], list[Scheme]] = {}
    order: list[tuple[str, ModelSpec]] = []
    for scheme in schemes:
        key = (scheme.strategy_kind, scheme.model)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(scheme)

    results: dict[str, SchemeResult] = {}
    for key in order:
        strategy_kind, model = key
        members = groups[key]
        if strategy_kind == "all_roi":
            aggs = [s.aggregator for s in members]
            shared = run_scheme_shared(
                cohort, strategy_kind, model, plan, aggs,
                corr_threshold=corr_threshold, minkowski_p=minkowski_p, audit=audit,
            )
            for scheme, res in zip(members, shared):
                results[scheme.label] = SchemeResult(scheme.label, res.c_indices)
        else:
            for scheme in members:  # duplicates would be config mistakes but run fine
                results[scheme.label] = run_scheme(
                    cohort, scheme, plan,
                    corr_threshold=corr_threshold, minkowski_p=minkowski_p, audit=audit,
                )
    return [results[s.label] for s in schemes]


@dataclass(frozen=True)
class SummaryRow:
    label: str
    median: float
    delta_median: float
    cohens_d: float
    band: str
    stars: str
    c_min: float
    c_max: float
    n_below_half: int
    n_failed: int


def summarize(results: Sequence[SchemeResult], reference_label: str) -> list[SummaryRow]:
    """Per-scheme medians and effect sizes against the reference scheme."""
    by_label = {r.label: r for r in results}
    if reference_label not in by_label:
        raise ValueError(f"reference scheme '{reference_label}' not in results")
    ref_vals = by_label[reference_label].values
    ref_median = by_label[reference_label].median

    rows = []
    for res in results:
        vals = res.values
        if res.label == reference_label:
            d, band = 0.0, "negligible"
        elif len(vals) >= 2 and len(ref_vals) >= 2:
            try:
                d, band = cohens_d(vals, ref_vals)
            except ValueError:  # both samples constant but different
                d = math.inf if vals.mean() > ref_vals.mean() else -math.inf
                band = "large"
        else:
            d, band = math.nan, ""
        rows.append(
            SummaryRow(
                label=res.label,
                median=res.median,
                delta_median=res.median - ref_median,
                cohens_d=d,
                band=band,
                stars=BAND_STARS.get(band, ""),
                c_min=float(vals.min()) if len(vals) else math.nan,
                c_max=float(vals.max()) if len(vals) else math.nan,
                n_below_half=res.n_below_half,
                n_failed=res.n_failed,
            )
        )
    return rows
