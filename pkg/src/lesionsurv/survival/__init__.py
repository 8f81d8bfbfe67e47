"""Survival model zoo with one fit/predict contract."""

from .base import (
    AFT_DISTRIBUTIONS,
    MODEL_KINDS,
    MODEL_NAMES,
    FitError,
    FittedModel,
    ModelSpec,
    fit_model,
    usable_columns,
)
from .boosting import BoostModel, family_loglik, fit_boost_model
from .cox import CoxModel, CoxResult, cox_fit, efron_quantities, fit_cox_model, stepwise_aic
from .coxnet import CoxnetModel, eta_derivatives, fit_coxnet_model, fit_path, lambda_path, partial_loglik
from .forest import ForestModel, fit_forest_model

__all__ = [
    "AFT_DISTRIBUTIONS",
    "MODEL_KINDS",
    "MODEL_NAMES",
    "FitError",
    "FittedModel",
    "ModelSpec",
    "fit_model",
    "usable_columns",
    "BoostModel",
    "family_loglik",
    "fit_boost_model",
    "CoxModel",
    "CoxResult",
    "cox_fit",
    "efron_quantities",
    "fit_cox_model",
    "stepwise_aic",
    "CoxnetModel",
    "eta_derivatives",
    "fit_coxnet_model",
    "fit_path",
    "lambda_path",
    "partial_loglik",
    "ForestModel",
    "fit_forest_model",
]
