"""Benchmark statistics: concordance index, Kaplan-Meier estimator,
k-group log-rank test, and Cohen's d with effect-size bands."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaincc

from .cohort import SurvivalResponse


class NoComparablePairsError(ValueError):
    """No (i, j) pair with t_i < t_j and an event at t_i."""


def c_index(risks, times, events) -> float:
    """Harrell's concordance index.

    A pair (i, j) is comparable iff t_i < t_j and patient i had an event;
    it is concordant when risk_i > risk_j, and tied risks credit 0.5.
    Pairs with exactly equal times are never comparable.
    """
    risks = np.asarray(risks, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not (risks.shape == times.shape == events.shape) or risks.ndim != 1:
        raise ValueError("risks, times, events must be equal-length 1-d arrays")
    if not np.all(np.isfinite(risks)):
        raise ValueError("non-finite risk values")

    # comparable[i, j]: i strictly earlier and i is an event
    earlier = times[:, None] < times[None, :]
    comparable = earlier & events[:, None]
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise NoComparablePairsError("no comparable pairs")

    higher = risks[:, None] > risks[None, :]
    tied = risks[:, None] == risks[None, :]
    concordant = float((comparable & higher).sum())
    half = float((comparable & tied).sum())
    return (concordant + 0.5 * half) / n_comparable


@dataclass(frozen=True)
class KmCurve:
    """Product-limit survival estimate sampled at the distinct event times."""

    event_times: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    survival: np.ndarray

    def __post_init__(self):
        k = len(self.event_times)
        if not (len(self.at_risk) == len(self.n_events) == len(self.survival) == k):
            raise ValueError("KmCurve field lengths differ")

    def to_rows(self) -> list[tuple[float, int, int, float]]:
        return [
            (float(t), int(r), int(d), float(s))
            for t, r, d, s in zip(self.event_times, self.at_risk, self.n_events, self.survival)
        ]


def kaplan_meier(responses: Sequence[SurvivalResponse]) -> KmCurve:
    """Kaplan-Meier estimate; subjects censored at t count as at risk at t."""
    if len(responses) == 0:
        raise ValueError("empty response list")
    times = np.array([r.time for r in responses])
    events = np.array([r.event for r in responses], dtype=bool)

    event_times = np.unique(times[events])
    at_risk = np.empty(len(event_times), dtype=int)
    n_events = np.empty(len(event_times), dtype=int)
    survival = np.empty(len(event_times))
    # exact rational product, rounded once per output value; with no
    # censoring the fraction telescopes to (subjects beyond t) / n, so the
    # emitted floats equal the empirical survivor function bit for bit
    s = Fraction(1)
    for k, t in enumerate(event_times):
        r = int((times >= t).sum())
        d = int(((times == t) & events).sum())
        s *= Fraction(r - d, r)
        at_risk[k] = r
        n_events[k] = d
        survival[k] = float(s)
    return KmCurve(event_times.astype(float), at_risk, n_events, survival)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution with df degrees of freedom."""
    if x < 0 or df <= 0:
        raise ValueError("need x >= 0 and df >= 1")
    return float(gammaincc(df / 2.0, x / 2.0))


class LogrankResult(NamedTuple):
    statistic: float
    df: int
    p_value: float


def logrank_test(groups: Sequence[Sequence[SurvivalResponse]]) -> LogrankResult:
    """k-group log-rank test over the pooled distinct event times.

    Statistic is the quadratic form of the observed-minus-expected event
    counts in the first G-1 groups against their estimated covariance.
    """
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    for g, members in enumerate(groups):
        if len(members) == 0:
            raise ValueError(f"group {g} is empty")

    n_groups = len(groups)
    times = [np.array([r.time for r in members]) for members in groups]
    events = [np.array([r.event for r in members], dtype=bool) for members in groups]

    all_times = np.concatenate(times)
    all_events = np.concatenate(events)
    pooled = np.unique(all_times[all_events])
    if len(pooled) == 0:
        raise ValueError("no events in any group")

    observed = np.zeros(n_groups)
    expected = np.zeros(n_groups)
    cov = np.zeros((n_groups, n_groups))
    for t in pooled:
        n_at = np.array([float((tg >= t).sum()) for tg in times])
        d_at = np.array([float(((tg == t) & eg).sum()) for tg, eg in zip(times, events)])
        n_tot = n_at.sum()
        d_tot = d_at.sum()
        observed += d_at
        frac = n_at / n_tot
        expected += d_tot * frac
        if n_tot > 1:
            scale = d_tot * (n_tot - d_tot) / (n_tot - 1)
            cov += scale * (np.diag(frac) - np.outer(frac, frac))

    diff = (observed - expected)[:-1]
    v = cov[:-1, :-1]
    stat = float(diff @ np.linalg.pinv(v) @ diff)
    stat = max(stat, 0.0)  # guard tiny negative round-off from pinv
    df = n_groups - 1
    return LogrankResult(stat, df, chi2_sf(stat, df))


EFFECT_BANDS = ((0.2, "negligible"), (0.5, "small"), (0.8, "medium"))


class CohensD(NamedTuple):
    d: float
    band: str


def effect_band(d: float) -> str:
    for cut, label in EFFECT_BANDS:
        if abs(d) < cut:
            return label
    return "large"


def cohens_d(a, b) -> CohensD:
    """Standardized mean difference (mean(a) - mean(b)) / pooled sd."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = len(a), len(b)
    pooled_var = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    pooled_sd = float(np.sqrt(pooled_var))
    diff = float(a.mean() - b.mean())
    if pooled_sd == 0.0:
        if diff == 0.0:
            return CohensD(0.0, "negligible")
        raise ValueError("zero pooled standard deviation with unequal means")
    d = diff / pooled_sd
    return CohensD(d, effect_band(d))
