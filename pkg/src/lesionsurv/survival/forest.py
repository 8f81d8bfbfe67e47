"""Random survival forest: bootstrap trees split by the two-sample log-rank
statistic, Nelson-Aalen leaf hazards, scalar mortality predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..cohort import DesignMatrix
from ..util import rng_from
from .base import FitError, ModelSpec, usable_columns

MAX_SPLIT_CANDIDATES = 10


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value  # leaf mortality (sum of CHF over the forest grid)

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _leaf_mortality(times, events, grid) -> float:
    """Nelson-Aalen cumulative hazard of the leaf members, evaluated on the
    forest-wide event-time grid and summed into one mortality scalar."""
    if not events.any():
        return 0.0
    order = np.argsort(times, kind="stable")
    ts = times[order]
    ev = events[order]
    n = len(ts)
    starts = np.flatnonzero(np.concatenate(([True], ts[1:] != ts[:-1])))
    d = np.add.reduceat(ev.astype(float), starts)
    at_risk = n - starts
    keep = d > 0
    tau = ts[starts][keep]
    chf = np.cumsum(d[keep] / at_risk[keep])
    pos = np.searchsorted(tau, grid, side="right") - 1
    inside = pos >= 0
    return float(chf[np.where(inside, pos, 0)][inside].sum())


class _NodeSurvival:
    """Sorted-by-time view of a node's rows with per-distinct-time tables,
    letting each candidate split be scored in O(m)."""

    def __init__(self, times, events):
        self.m = len(times)
        self.order = np.argsort(times, kind="stable")
        ts = times[self.order]
        ev = events[self.order].astype(float)
        starts = np.flatnonzero(np.concatenate(([True], ts[1:] != ts[:-1])))
        d = np.add.reduceat(ev, starts)
        keep = d > 0
        self.starts = starts[keep]
        self.d = d[keep]
        self.n_at = self.m - self.starts
        self.ev_sorted = ev
        self.has_events = keep.any()

    def logrank_stat(self, left_mask) -> float:
        """(O - E)^2 / V for membership in the left child."""
        if not self.has_events:
            return -math.inf
        mem = left_mask[self.order].astype(float)
        prefix = np.concatenate(([0.0], np.cumsum(mem)))
        total = prefix[-1]
        nL = total - prefix[self.starts]
        dL = np.add.reduceat(mem * self.ev_sorted, self.starts)
        # reduceat segments end at the next start; segments between kept
        # starts may include later zero-event times, which contribute 0
        frac = nL / self.n_at
        o_minus_e = float((dL - self.d * frac).sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            var_terms = np.where(
                self.n_at > 1,
                self.d * frac * (1.0 - frac) * (self.n_at - self.d) / np.maximum(self.n_at - 1, 1),
                0.0,
            )
        v = float(var_terms.sum())
        if v <= 1e-12:
            return -math.inf
        return o_minus_e * o_minus_e / v


def _candidate_gaps(n_gaps: int) -> np.ndarray:
    if n_gaps <= MAX_SPLIT_CANDIDATES:
        return np.arange(n_gaps)
    return np.unique(np.round(np.linspace(0, n_gaps - 1, MAX_SPLIT_CANDIDATES)).astype(int))


def _grow(X, times, events, rows, pool, mtry, min_node, grid, rng) -> _Node:
    node_t = times[rows]
    node_e = events[rows]
    if len(rows) < 2 * min_node or node_e.sum() < 2:
        return _Node(value=_leaf_mortality(node_t, node_e, grid))

    surv = _NodeSurvival(node_t, node_e)
    k = min(mtry, len(pool))
    feats = rng.choice(pool, size=k, replace=False)

    best_stat = 0.0
    best = None
    for j in feats:
        v = X[rows, j]
        u = np.unique(v)
        if len(u) < 2:
            continue
        for g in _candidate_gaps(len(u) - 1):
            thr = u[g]
            mask = v <= thr
            nl = int(mask.sum())
            if nl < min_node or len(rows) - nl < min_node:
                continue
            stat = surv.logrank_stat(mask)
            if stat > best_stat:
                best_stat = stat
                best = (int(j), float(thr), mask)

    if best is None:
        return _Node(value=_leaf_mortality(node_t, node_e, grid))

    j, thr, mask = best
    node = _Node()
    node.feature = j
    node.threshold = thr
    node.left = _grow(X, times, events, rows[mask], pool, mtry, min_node, grid, rng)
    node.right = _grow(X, times, events, rows[~mask], pool, mtry, min_node, grid, rng)
    return node


def _tree_predict(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        cur = node
        while not cur.is_leaf:
            cur = cur.left if X[i, cur.feature] <= cur.threshold else cur.right
        out[i] = cur.value
    return out


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[_Node, ...]
    grid: np.ndarray
    pool: np.ndarray
    p_total: int
    oob_mortality: np.ndarray  # NaN where a row was never out of bag
    train_mortality: np.ndarray

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.p_total:
            raise ValueError("feature width mismatch")
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += _tree_predict(tree, X)
        return acc / len(self.trees)


def fit_forest_model(design: DesignMatrix, spec: ModelSpec, seed: int) -> ForestModel:
    if design.n_events < 2:
        raise FitError("random survival forest needs at least two events")
    X, times, events = design.X, design.times, design.events
    n = X.shape[0]
    pool = usable_columns(X)
    if len(pool) == 0:
        pool = np.arange(X.shape[1])  # degenerate: trees become single leaves
    mtry = spec.mtry if spec.mtry is not None else math.ceil(math.sqrt(len(pool)))
    grid = np.unique(times[events])

    trees = []
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n)
    for t in range(spec.n_trees):
        rng = rng_from(seed, "tree", t)
        boot = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
        root = _grow(X, times, events, boot, pool, mtry, spec.min_node, grid, rng)
        trees.append(root)
        oob = np.setdiff1d(np.arange(n), np.unique(boot), assume_unique=True)
        if len(oob):
            oob_sum[oob] += _tree_predict(root, X[oob])
            oob_cnt[oob] += 1.0

    with np.errstate(invalid="ignore"):
        oob_mort = np.where(oob_cnt > 0, oob_sum / np.maximum(oob_cnt, 1.0), np.nan)
    model = ForestModel(tuple(trees), grid, pool, X.shape[1], oob_mort, np.empty(0))
    train_mort = model.predict_rows(X)
    return ForestModel(tuple(trees), grid, pool, X.shape[1], oob_mort, train_mort)
