"""Shared fit/predict contract for the survival model zoo."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..cohort import DesignMatrix, StandardizeParams, standardize

MODEL_KINDS = ("cox", "cox_step_aic", "coxnet", "random_forest", "boost_aft")
AFT_DISTRIBUTIONS = ("weibull", "loglog", "lognormal")

#: CLI-facing model names accepted by ModelSpec.from_name.
MODEL_NAMES = ("cox", "cox_step_aic", "coxnet", "random_forest") + AFT_DISTRIBUTIONS


class FitError(RuntimeError):
    """Model fitting failed on legitimate statistical grounds
    (no events, too few events for the method, numerical breakdown)."""


@dataclass(frozen=True)
class ModelSpec:
    """Model kind plus hyperparameters; a value object used as part of scheme
    labels and seed derivation."""

    kind: str
    aft_distribution: str | None = None
    # random_forest
    n_trees: int = 1000
    mtry: int | None = None  # None: ceil(sqrt(#usable features))
    min_node: int = 15
    bootstrap: bool = True  # False: every tree sees the full sample
    # coxnet
    alpha: float = 1.0
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    cv_folds: int = 5
    # boost_aft
    steps: int = 100
    step_size: float = 0.1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind '{self.kind}'")
        if self.kind == "boost_aft":
            if self.aft_distribution not in AFT_DISTRIBUTIONS:
                raise ValueError(
                    f"boost_aft needs aft_distribution in {AFT_DISTRIBUTIONS}"
                )
        elif self.aft_distribution is not None:
            raise ValueError("aft_distribution only applies to boost_aft")
        if self.n_trees < 1 or self.min_node < 1:
            raise ValueError("forest hyperparameters must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")
        if not (0 < self.alpha <= 1):
            raise ValueError("alpha must be in (0, 1]")
        if self.n_lambda < 2 or not (0 < self.lambda_min_ratio < 1):
            raise ValueError("bad lambda path parameters")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.steps < 0 or self.step_size <= 0:
            raise ValueError("bad boosting parameters")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "ModelSpec":
        if name in AFT_DISTRIBUTIONS:
            return cls(kind="boost_aft", aft_distribution=name, **overrides)
        if name in MODEL_KINDS and name != "boost_aft":
            return cls(kind=name, **overrides)
        raise ValueError(f"unknown model name '{name}' (expected one of {MODEL_NAMES})")

    @property
    def name(self) -> str:
        return self.aft_distribution if self.kind == "boost_aft" else self.kind

    def with_overrides(self, **overrides) -> "ModelSpec":
        return replace(self, **overrides)


@dataclass(frozen=True)
class FittedModel:
    """Immutable fitted model plus the training-time transforms needed to
    score new rows: feature-filter replay list and standardization params."""

    spec: ModelSpec
    schema: tuple[str, ...]  # schema expected of incoming designs (pre-filter)
    removed_features: tuple[str, ...]
    std_params: StandardizeParams | None
    inner: object

    def predict_risk(self, design: DesignMatrix) -> np.ndarray:
        if design.schema != self.schema:
            raise ValueError(
                f"schema mismatch: model trained on {len(self.schema)} features, "
                f"got {len(design.schema)}"
            )
        if self.removed_features:
            design = design.drop_features(self.removed_features)
        if self.std_params is not None:
            design, _ = standardize(design, self.std_params)
        return self.inner.predict_rows(design.X)


def usable_columns(X: np.ndarray) -> np.ndarray:
    """Indices of columns with more than one distinct value. Models restrict
    fitting to these so that appended constant columns (e.g. diversity
    indices on single-lesion cohorts) leave results bit-identical."""
    if X.shape[0] == 0:
        return np.arange(X.shape[1])
    varying = ~(X == X[0, :]).all(axis=0)
    return np.flatnonzero(varying)


def fit_model(
    design: DesignMatrix,
    spec: ModelSpec,
    seed: int,
    *,
    apply_standardize: bool = True,
    filter_threshold: float | None = None,
) -> FittedModel:
    """Fit one model: optional correlation filter, standardization, then the
    model itself. The returned FittedModel replays filter and scaling on any
    design handed to predict_risk."""
    from ..aggregation import correlation_filter

    removed: list[str] = []
    work = design
    if filter_threshold is not None:
        work, removed = correlation_filter(work, filter_threshold)
    params: StandardizeParams | None = None
    if apply_standardize and spec.kind != "random_forest":
        # trees split on feature order, so scaling cannot change them;
        # fitting on raw values keeps stored thresholds interpretable
        work, params = standardize(work)

    if spec.kind in ("cox", "cox_step_aic"):
        from .cox import fit_cox_model

        inner = fit_cox_model(work, spec)
    elif spec.kind == "coxnet":
        from .coxnet import fit_coxnet_model

        inner = fit_coxnet_model(work, spec, seed)
    elif spec.kind == "random_forest":
        from .forest import fit_forest_model

        inner = fit_forest_model(work, spec, seed)
    else:
        from .boosting import fit_boost_model

        inner = fit_boost_model(work, spec)

    return FittedModel(spec, design.schema, tuple(removed), params, inner)
