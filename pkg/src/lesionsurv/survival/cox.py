"""Cox proportional hazards: Efron-tie partial likelihood, Newton fitting,
and forward stepwise selection by AIC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..cohort import DesignMatrix
from .base import FitError, ModelSpec, usable_columns

MAX_NEWTON_ITER = 50
SCORE_TOL = 1e-8
STALL_TOL = 1e-13
SEPARATION_BOUND = 15.0


def efron_quantities(
    X: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    beta: np.ndarray,
    *,
    need_derivatives: bool = True,
):
    """Log partial likelihood with Efron tie handling, plus score vector and
    observed information (negative Hessian) when requested.

    Runs one pass over rows in descending time order, maintaining risk-set
    sums of w = exp(eta), w*x, and w*x*x^T; each tied-event group contributes
    closed-form combinations of those sums. Linear predictors are centered by
    their max before exponentiation; the likelihood value is unchanged.
    """
    n, p = X.shape
    eta = X @ beta if p else np.zeros(n)
    center = eta.max() if n else 0.0
    w = np.exp(eta - center)

    order = np.argsort(times, kind="stable")[::-1]
    ts = times[order]

    loglik = 0.0
    grad = np.zeros(p)
    info = np.zeros((p, p))
    w_run = 0.0
    s1_run = np.zeros(p)
    s2_run = np.zeros((p, p))

    i = 0
    while i < n:
        j = i
        t = ts[i]
        while j < n and ts[j] == t:
            j += 1
        block = order[i:j]
        wb = w[block]
        xb = X[block]
        w_run += wb.sum()
        if p:
            s1_run = s1_run + wb @ xb
            if need_derivatives:
                s2_run = s2_run + (xb * wb[:, None]).T @ xb

        dead = block[events[block]]
        d = len(dead)
        if d:
            wd = w[dead]
            w_d = wd.sum()
            a = np.arange(d) / d
            phi = w_run - a * w_d
            loglik += float((eta[dead] - center).sum() - np.log(phi).sum())
            if p:
                xd = X[dead]
                s1_d = wd @ xd
                inv = 1.0 / phi
                b0 = inv.sum()
                b1 = (a * inv).sum()
                grad += xd.sum(axis=0) - (b0 * s1_run - b1 * s1_d)
                if need_derivatives:
                    s2_d = (xd * wd[:, None]).T @ xd
                    inv2 = inv * inv
                    e0 = inv2.sum()
                    e1 = (a * inv2).sum()
                    e2 = (a * a * inv2).sum()
                    cross = np.outer(s1_run, s1_d)
                    info += (
                        b0 * s2_run
                        - b1 * s2_d
                        - (
                            e0 * np.outer(s1_run, s1_run)
                            - e1 * (cross + cross.T)
                            + e2 * np.outer(s1_d, s1_d)
                        )
                    )
        i = j

    return loglik, grad, info


@dataclass(frozen=True)
class CoxResult:
    beta: np.ndarray  # full design width; zeros outside the fitted subset
    subset: tuple[int, ...]
    loglik: float
    aic: float
    n_iter: int
    converged: bool
    separated: bool


def cox_fit(design: DesignMatrix, subset: Sequence[int] | None = None) -> CoxResult:
    """Newton maximization of the Efron partial likelihood on a feature
    subset (None: all, empty: null model). Constant columns are pinned at 0;
    a coefficient escaping |beta| > 15 flags separation instead of failing."""
    if design.n_events == 0:
        raise FitError("cannot fit a Cox model with zero events")
    p_total = len(design.schema)
    subset = tuple(range(p_total)) if subset is None else tuple(subset)
    if any(j < 0 or j >= p_total for j in subset):
        raise ValueError("feature subset index out of range")
    if len(set(subset)) != len(subset):
        raise ValueError("duplicate feature indices in subset")

    times, events = design.times, design.events
    Xs = design.X[:, list(subset)]
    local_active = usable_columns(Xs)
    Xa = Xs[:, local_active] if len(local_active) < Xs.shape[1] else Xs
    p = Xa.shape[1]

    beta = np.zeros(p)
    loglik, grad, info = efron_quantities(Xa, times, events, beta)
    converged = bool(p == 0 or np.max(np.abs(grad)) < SCORE_TOL)
    separated = False
    it = 0
    stalls = 0
    while not converged and it < MAX_NEWTON_ITER:
        it += 1
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        new_beta = beta + step
        new = efron_quantities(Xa, times, events, new_beta)
        halvings = 0
        while (not np.isfinite(new[0]) or new[0] < loglik) and halvings < 30:
            step = step / 2.0
            new_beta = beta + step
            new = efron_quantities(Xa, times, events, new_beta)
            halvings += 1
        if not np.isfinite(new[0]) or new[0] < loglik:
            break  # no ascent left at this floating-point precision
        gained = new[0] - loglik
        beta = new_beta
        loglik, grad, info = new
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            separated = True
            break
        if np.max(np.abs(grad)) < SCORE_TOL:
            converged = True
        elif gained <= STALL_TOL * (1.0 + abs(loglik)):
            stalls += 1
            if stalls >= 2:
                break
        else:
            stalls = 0

    beta_full = np.zeros(p_total)
    if p:
        sub_idx = np.asarray(subset)[local_active]
        beta_full[sub_idx] = beta
    aic = -2.0 * loglik + 2.0 * len(subset)
    return CoxResult(beta_full, subset, loglik, aic, it, converged, separated)


class CoxModel:
    """Linear risk scorer eta = X beta restricted to the fitted columns so
    that padding columns with zero coefficients cannot perturb the sums."""

    def __init__(self, result: CoxResult, p_total: int):
        self.result = result
        self.beta = result.beta
        self.active = np.flatnonzero(result.beta != 0.0)
        self.p_total = p_total

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.p_total:
            raise ValueError("feature width mismatch")
        if len(self.active) == 0:
            return np.zeros(X.shape[0])
        return X[:, self.active] @ self.beta[self.active]


def stepwise_aic(design: DesignMatrix, budget: int | None = None) -> CoxResult:
    """Forward selection from the null model, adding the feature with the
    largest AIC decrease each round; separating or non-finite candidate fits
    are skipped. Budget defaults to min(p, n_events - 1)."""
    if design.n_events == 0:
        raise FitError("cannot fit a Cox model with zero events")
    p = len(design.schema)
    if budget is None:
        budget = min(p, design.n_events - 1)
    budget = max(0, min(budget, p))

    current: list[int] = []
    best = cox_fit(design, ())
    while len(current) < budget:
        round_best: CoxResult | None = None
        round_feature = -1
        for j in range(p):
            if j in current:
                continue
            cand = cox_fit(design, (*current, j))
            if cand.separated or not np.isfinite(cand.loglik):
                continue
            if cand.aic < best.aic and (round_best is None or cand.aic < round_best.aic):
                round_best = cand
                round_feature = j
        if round_best is None:
            break
        current.append(round_feature)
        best = round_best
    return best


def fit_cox_model(design: DesignMatrix, spec: ModelSpec) -> CoxModel:
    if spec.kind == "cox_step_aic":
        result = stepwise_aic(design)
    else:
        result = cox_fit(design)
        if result.separated:
            raise FitError("separation in unpenalized Cox fit")
    return CoxModel(result, len(design.schema))
