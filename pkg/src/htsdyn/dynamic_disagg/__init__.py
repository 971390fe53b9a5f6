"""Machine-learned disaggregation of middle-level forecasts.

One model per parent group maps the parent's (forecast) sales and price to
its children's proportions; predictions are clipped and renormalized so the
bottom level always sums back to the middle.
"""

from htsdyn.dynamic_disagg.features import (
    MinMaxScaler,
    ProportionTrainingSet,
    build_training_set,
    forecast_feature_rows,
)
from htsdyn.dynamic_disagg.gbt import GbtModel, fit_gbt
from htsdyn.dynamic_disagg.mlp import MlpModel, fit_mlp
from htsdyn.dynamic_disagg.svr import SvrModel, fit_svr
from htsdyn.dynamic_disagg.search import HyperGrid, grid_search
from htsdyn.dynamic_disagg.dhf import dhf_forecast, predict_proportions
from htsdyn.dynamic_disagg.serialize import load_model_json, save_model_json

__all__ = [
    "MinMaxScaler",
    "ProportionTrainingSet",
    "build_training_set",
    "forecast_feature_rows",
    "GbtModel",
    "fit_gbt",
    "MlpModel",
    "fit_mlp",
    "SvrModel",
    "fit_svr",
    "HyperGrid",
    "grid_search",
    "dhf_forecast",
    "predict_proportions",
    "save_model_json",
    "load_model_json",
]
