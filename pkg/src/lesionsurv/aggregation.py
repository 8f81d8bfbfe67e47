"""Strategies for handling multiple lesions per patient.

ROI aggregation builds one representative feature row per patient before
model fitting (largest / random lesion, optionally with appended diversity
indices; unweighted or volume-weighted means; meta-histogram summaries).
Risk aggregation instead fits on every lesion and collapses per-lesion risk
scores to one per-patient value afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cohort import Cohort, DesignMatrix, Patient
from .heterogeneity import METRIC_KINDS, Metric, patient_heterogeneity
from .util import rng_from

ROI_STRATEGY_KINDS = (
    "largest_roi",
    "random_roi",
    "largest_roi_diversity",
    "random_roi_diversity",
    "arithmetic_mean_roi",
    "weighted_mean_roi",
    "meta_histogram",
    "all_roi",
)

RISK_AGG_KINDS = ("min", "max", "mean", "weighted_mean")

META_HISTOGRAM_STATS = ("mean", "var", "sum", "skew", "kurt", "energy", "entropy")


@dataclass(frozen=True)
class RoiStrategy:
    kind: str
    seed: int | None = None  # required by the random kinds

    def __post_init__(self):
        if self.kind not in ROI_STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind '{self.kind}'")
        if self.kind in ("random_roi", "random_roi_diversity") and self.seed is None:
            raise ValueError(f"strategy '{self.kind}' requires a seed")

    @property
    def needs_diversity(self) -> bool:
        return self.kind in ("largest_roi_diversity", "random_roi_diversity")


@dataclass(frozen=True)
class RiskAggregator:
    kind: str

    def __post_init__(self):
        if self.kind not in RISK_AGG_KINDS:
            raise ValueError(f"unknown risk aggregator '{self.kind}'")


def meta_histogram_features(patient: Patient, entropy_norm: str = "abs") -> np.ndarray:
    """Seven summary statistics per base feature over the patient's lesions.

    The per-feature value sequence (lesions in descending volume order) is
    treated as a one-dimensional histogram and summarised by mean, population
    variance, sum, skewness, excess kurtosis, energy, and entropy. Moments of
    a zero-variance sequence are set to 0; entropy normalises by absolute
    values since radiomic features may be negative.
    """
    if entropy_norm not in ("abs", "square"):
        raise ValueError(f"unknown entropy_norm '{entropy_norm}'")
    lesions = sorted(patient.lesions, key=lambda l: (-l.volume, l.roi_id))
    values = np.stack([l.features for l in lesions])  # (m, p)
    m = values.shape[0]

    mean = values.mean(axis=0)
    var = values.var(axis=0)  # population variance: one histogram per feature
    total = values.sum(axis=0)
    centered = values - mean
    sd = np.sqrt(var)
    safe_sd = np.where(sd > 0, sd, 1.0)
    skew = np.where(sd > 0, (centered**3).mean(axis=0) / safe_sd**3, 0.0)
    kurt = np.where(sd > 0, (centered**4).mean(axis=0) / safe_sd**4 - 3.0, 0.0)
    energy = (values**2).sum(axis=0)

    weight = np.abs(values) if entropy_norm == "abs" else values**2
    wsum = weight.sum(axis=0)
    q = np.divide(weight, wsum[None, :], out=np.zeros_like(weight), where=wsum[None, :] > 0)
    logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), 0.0)
    entropy = -(q * logq).sum(axis=0)

    stacked = np.stack([mean, var, total, skew, kurt, energy, entropy])  # (7, p)
    return stacked.T.reshape(-1)  # grouped per base feature


def meta_histogram_schema(schema: Sequence[str]) -> tuple[str, ...]:
    return tuple(f"{name}_mh_{stat}" for name in schema for stat in META_HISTOGRAM_STATS)


def _choose_lesion(patient: Patient, strategy: RoiStrategy):
    if strategy.kind in ("largest_roi", "largest_roi_diversity"):
        return patient.largest_lesion()
    # uniform draw, seeded per patient so train/test builds within one CV
    # iteration pick consistently and cohort order does not matter
    rng = rng_from(strategy.seed, "roi_draw", patient.patient_id)
    return patient.lesions[int(rng.integers(patient.n_lesions))]


def build_design(
    cohort: Cohort,
    strategy: RoiStrategy,
    metrics: Sequence[Metric] | None = None,
) -> DesignMatrix:
    """One DesignMatrix per (cohort, strategy): representative rows, or one
    row per lesion for the ``all_roi`` risk-aggregation input."""
    if strategy.needs_diversity:
        metrics = tuple(metrics or ())
        if tuple(m.kind for m in metrics) != METRIC_KINDS:
            raise ValueError(
                f"diversity strategies need the five metrics in order {METRIC_KINDS}"
            )

    for patient in cohort.patients:
        if patient.response is None:
            raise ValueError(f"patient {patient.patient_id} has no response attached")

    schema: tuple[str, ...]
    patient_ids: list[str] = []
    row_ids: list[str] = []
    rows: list[np.ndarray] = []
    volumes: list[float] = []
    times: list[float] = []
    events: list[bool] = []

    def add_row(patient: Patient, row_id: str, features: np.ndarray, volume: float):
        patient_ids.append(patient.patient_id)
        row_ids.append(row_id)
        rows.append(features)
        volumes.append(volume)
        times.append(patient.response.time)
        events.append(patient.response.event)

    if strategy.kind == "all_roi":
        schema = cohort.schema
        for patient in cohort.patients:
            for lesion in patient.lesions:
                add_row(patient, lesion.roi_id, lesion.features, lesion.volume)
    elif strategy.kind == "meta_histogram":
        schema = meta_histogram_schema(cohort.schema)
        for patient in cohort.patients:
            add_row(
                patient, f"{patient.patient_id}::mh",
                meta_histogram_features(patient),
                sum(l.volume for l in patient.lesions),
            )
    elif strategy.kind == "arithmetic_mean_roi":
        schema = cohort.schema
        for patient in cohort.patients:
            feats = np.mean([l.features for l in patient.lesions], axis=0)
            add_row(patient, f"{patient.patient_id}::mean", feats,
                    sum(l.volume for l in patient.lesions))
    elif strategy.kind == "weighted_mean_roi":
        schema = cohort.schema
        for patient in cohort.patients:
            vols = np.array([l.volume for l in patient.lesions])
            feats = np.stack([l.features for l in patient.lesions])
            weights = vols / vols.sum()
            add_row(patient, f"{patient.patient_id}::wmean", weights @ feats, float(vols.sum()))
    else:
        schema = cohort.schema
        if strategy.needs_diversity:
            schema = schema + tuple(f"div_{m.kind}" for m in metrics)
        for patient in cohort.patients:
            lesion = _choose_lesion(patient, strategy)
            feats = lesion.features
            if strategy.needs_diversity:
                div = [patient_heterogeneity(patient, m) for m in metrics]
                feats = np.concatenate([feats, div])
            add_row(patient, lesion.roi_id, feats, lesion.volume)

    n = len(rows)
    return DesignMatrix(
        schema,
        tuple(patient_ids),
        tuple(row_ids),
        np.array(rows).reshape(n, len(schema)),
        np.array(volumes),
        np.ones(n),
        np.array(times),
        np.array(events, dtype=bool),
    )


def correlation_filter(design: DesignMatrix, threshold: float) -> tuple[DesignMatrix, list[str]]:
    """Greedy redundancy filter on training data.

    While some feature pair exceeds |Pearson r| > threshold, take the most
    correlated offending pair and drop the member with the larger mean
    absolute correlation to the remaining features (ties drop the later
    schema position). Returns the filtered design and the removal list to
    replay on test data. Zero-variance columns count as uncorrelated.
    """
    if not (0 < threshold <= 1):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    X = design.X
    p = X.shape[1]
    if p < 2 or X.shape[0] < 2:
        return design, []

    sd = X.std(axis=0)
    centered = X - X.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (centered.T @ centered) / X.shape[0]
        denom = np.outer(sd, sd)
        corr = np.where(denom > 0, corr / np.where(denom > 0, denom, 1.0), 0.0)
    np.fill_diagonal(corr, 1.0)
    abs_corr = np.clip(np.abs(corr), 0.0, 1.0)

    alive = np.ones(p, dtype=bool)
    removed: list[int] = []
    while True:
        masked = np.where(np.outer(alive, alive), abs_corr, 0.0)
        np.fill_diagonal(masked, 0.0)
        if masked.max() <= threshold:
            break
        # most correlated offending pair; ties resolved by smallest (i, j)
        flat = np.argmax(masked)
        i, j = divmod(int(flat), p)
        if i > j:
            i, j = j, i
        mean_i = _mean_abs_corr(abs_corr, alive, i)
        mean_j = _mean_abs_corr(abs_corr, alive, j)
        drop = j if mean_j >= mean_i else i
        alive[drop] = False
        removed.append(drop)

    removed_names = [design.schema[k] for k in sorted(removed)]
    return design.drop_features(removed_names), removed_names


def _mean_abs_corr(abs_corr: np.ndarray, alive: np.ndarray, k: int) -> float:
    others = alive.copy()
    others[k] = False
    if not others.any():
        return 0.0
    return float(abs_corr[k, others].mean())


def aggregate_risks(
    patient_ids: Sequence[str],
    risks,
    volumes,
    agg: RiskAggregator,
) -> dict[str, float]:
    """Collapse per-lesion risks to one value per patient."""
    risks = np.asarray(risks, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if len(patient_ids) == 0:
        raise ValueError("no rows to aggregate")
    if not np.all(np.isfinite(risks)):
        raise ValueError("non-finite risk values")

    grouped: dict[str, list[int]] = {}
    for idx, pid in enumerate(patient_ids):
        grouped.setdefault(pid, []).append(idx)

    out: dict[str, float] = {}
    for pid, idxs in grouped.items():
        r = risks[idxs]
        if agg.kind == "min":
            out[pid] = float(r.min())
        elif agg.kind == "max":
            out[pid] = float(r.max())
        elif agg.kind == "mean":
            out[pid] = float(r.mean())
        else:
            v = volumes[idxs]
            # normalized weights keep the single-lesion case exact: v/v == 1
            out[pid] = float(r @ (v / v.sum()))
    return out
