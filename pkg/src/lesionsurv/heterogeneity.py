"""Inter-lesion heterogeneity: pairwise distances, per-patient index, terciles.

Radiomic features can be negative, which rules out entropy-style diversity
measures; the indices here are distance- and rank-correlation-based. The
per-patient index is 0 for single-lesion patients and otherwise the mean
distance over all unordered lesion pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import rankdata

from .cohort import Cohort, Patient

METRIC_KINDS = ("canberra", "euclidean", "minkowski", "kendall", "spearman")

DEFAULT_MINKOWSKI_P = 3.0


@dataclass(frozen=True)
class Metric:
    kind: str
    p: float = DEFAULT_MINKOWSKI_P  # Minkowski order, ignored by other kinds

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind '{self.kind}'")
        if not (math.isfinite(self.p) and self.p > 0):
            raise ValueError(f"Minkowski order must be finite and positive, got {self.p}")


def default_metrics(minkowski_p: float = DEFAULT_MINKOWSKI_P) -> tuple[Metric, ...]:
    """All five metrics, in the canonical order used by diversity columns."""
    return tuple(Metric(kind, minkowski_p) for kind in METRIC_KINDS)


def _canberra(x: np.ndarray, y: np.ndarray) -> float:
    num = np.abs(x - y)
    den = np.abs(x) + np.abs(y)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(terms.sum())


def _kendall_tau(x: np.ndarray, y: np.ndarray) -> float:
    # tie-adjusted tau by direct pair enumeration: tied pairs are dropped
    # from each vector's denominator so a tied vector still has |tau| = 1
    # against itself; a constant vector leaves no usable pairs and the
    # coefficient is defined as 0, matching the Spearman convention
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    upper = np.triu_indices(len(x), k=1)
    sxu = sx[upper]
    syu = sy[upper]
    den = math.sqrt(float((sxu != 0).sum()) * float((syu != 0).sum()))
    if den == 0:
        return 0.0
    return float((sxu * syu).sum()) / den


def _spearman_rho(x: np.ndarray, y: np.ndarray) -> float:
    # average ranks for ties; a constant vector has zero rank variance and
    # the coefficient is defined as 0
    rx = rankdata(x)
    ry = rankdata(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0 or sy == 0:
        return 0.0
    cov = np.mean((rx - rx.mean()) * (ry - ry.mean()))
    return float(cov / (sx * sy))


def pairwise_distance(x, y, metric: Metric) -> float:
    """Distance between two feature vectors under the chosen metric.

    Rank-based metrics (kendall, spearman) return 1 - |coefficient| and
    require vectors of length at least 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"vectors must be 1-d and equally sized, got {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in feature vectors")
    if metric.kind in ("kendall", "spearman") and len(x) < 2:
        raise ValueError(f"{metric.kind} distance requires vectors of length >= 2")
    if len(x) < 1:
        raise ValueError("empty feature vectors")

    if metric.kind == "canberra":
        return _canberra(x, y)
    if metric.kind == "euclidean":
        return float(np.sqrt(np.sum((x - y) ** 2)))
    if metric.kind == "minkowski":
        return float(np.sum(np.abs(x - y) ** metric.p) ** (1.0 / metric.p))
    # clamp: float noise can push a perfect coefficient one ulp past 1
    if metric.kind == "kendall":
        return 1.0 - min(abs(_kendall_tau(x, y)), 1.0)
    return 1.0 - min(abs(_spearman_rho(x, y)), 1.0)


def patient_heterogeneity(patient: Patient, metric: Metric) -> float:
    """Mean pairwise lesion distance; 0 when the patient has a single lesion."""
    if patient.n_lesions == 1:
        return 0.0
    dists = [
        pairwise_distance(a.features, b.features, metric)
        for a, b in combinations(patient.lesions, 2)
    ]
    return float(np.mean(dists))


def cohort_heterogeneity(cohort: Cohort, metric: Metric) -> np.ndarray:
    """Heterogeneity index per patient, in cohort order."""
    return np.array([patient_heterogeneity(p, metric) for p in cohort.patients])


def tercile_stratify(values) -> list[str]:
    """Split values into low/mid/high groups at the 1/3 and 2/3 quantiles.

    Boundaries use the inverse-empirical-CDF quantile (the ceil(n*q)-th order
    statistic), and ties at a boundary all fall into the lower group, so the
    groups have near-equal sizes unless the data are heavily tied.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 3:
        raise ValueError(f"need at least 3 values to stratify, got {n}")
    ordered = np.sort(values)
    lo_cut = ordered[math.ceil(n / 3) - 1]
    hi_cut = ordered[math.ceil(2 * n / 3) - 1]
    labels = []
    for v in values:
        if v <= lo_cut:
            labels.append("low")
        elif v <= hi_cut:
            labels.append("mid")
        else:
            labels.append("high")
    return labels


def roi_count_groups(cohort: Cohort) -> list[str]:
    """Group patients by lesion count: one, two to three, four or more."""
    labels = []
    for patient in cohort.patients:
        if patient.n_lesions == 1:
            labels.append("1")
        elif patient.n_lesions <= 3:
            labels.append("2-3")
        else:
            labels.append("4+")
    return labels
