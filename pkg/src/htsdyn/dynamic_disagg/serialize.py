"""Self-describing JSON export/import for trained proportion models.

The document carries the model family, hyperparameters, learned state
(trees, weights, or support vectors), the feature scaler bounds, and the
parent/children ids, so a saved model can reproduce its scores exactly.
"""

from __future__ import annotations

import json

import numpy as np

from htsdyn.dynamic_disagg.features import MinMaxScaler
from htsdyn.dynamic_disagg.gbt import GbtModel
from htsdyn.dynamic_disagg.mlp import MlpModel
from htsdyn.dynamic_disagg.svr import ChildSvr, SvrModel

FORMAT_NAME = "htsdyn-proportion-model"
FORMAT_VERSION = 1


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model, parent_id: str = "", child_ids=()) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "group": {"parent": parent_id, "children": list(child_ids)},
    }
    if isinstance(model, GbtModel):
        doc["family"] = "gbt"
        doc["hyperparams"] = {
            "eta": model.eta,
            "rounds": model.rounds,
            "max_depth": model.max_depth,
            "subsample": model.subsample,
            "colsample": model.colsample,
        }
        doc["state"] = {"base_scores": _arr(model.base_scores), "trees": model.trees}
    elif isinstance(model, MlpModel):
        doc["family"] = "mlp"
        doc["hyperparams"] = {
            "activation": model.activation,
            "learning_rate": model.learning_rate,
            "decay": model.decay,
        }
        doc["state"] = {
            "w1": _arr(model.w1),
            "b1": _arr(model.b1),
            "w2": _arr(model.w2),
            "b2": _arr(model.b2),
            "scaler_lo": _arr(model.scaler.lo),
            "scaler_hi": _arr(model.scaler.hi),
        }
    elif isinstance(model, SvrModel):
        doc["family"] = "svr"
        doc["hyperparams"] = {
            "kernel": model.kernel,
            "gamma": model.gamma,
            "C": model.C,
            "epsilon": model.epsilon,
            "degree": model.degree,
            "coef0": model.coef0,
        }
        doc["state"] = {
            "children": [
                {
                    "beta": _arr(ch.beta),
                    "support": _arr(ch.support),
                    "bias": ch.bias,
                    "kkt_gap": ch.kkt_gap,
                }
                for ch in model.children
            ]
        }
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a proportion-model document")
    family = doc["family"]
    hp = doc["hyperparams"]
    state = doc["state"]
    if family == "gbt":
        return GbtModel(
            base_scores=np.asarray(state["base_scores"], dtype=float),
            trees=state["trees"],
            eta=hp["eta"],
            rounds=hp["rounds"],
            max_depth=hp["max_depth"],
            subsample=hp["subsample"],
            colsample=hp["colsample"],
        )
    if family == "mlp":
        return MlpModel(
            w1=np.asarray(state["w1"], dtype=float),
            b1=np.asarray(state["b1"], dtype=float),
            w2=np.asarray(state["w2"], dtype=float),
            b2=np.asarray(state["b2"], dtype=float),
            activation=hp["activation"],
            learning_rate=hp["learning_rate"],
            decay=hp["decay"],
            scaler=MinMaxScaler(
                lo=np.asarray(state["scaler_lo"], dtype=float),
                hi=np.asarray(state["scaler_hi"], dtype=float),
            ),
        )
    if family == "svr":
        children = [
            ChildSvr(
                beta=np.asarray(ch["beta"], dtype=float),
                support=np.asarray(ch["support"], dtype=float).reshape(
                    len(ch["beta"]), -1
                )
                if len(ch["beta"])
                else np.empty((0, 0)),
                bias=ch["bias"],
                kkt_gap=ch["kkt_gap"],
            )
            for ch in state["children"]
        ]
        return SvrModel(
            children=children,
            kernel=hp["kernel"],
            gamma=hp["gamma"],
            C=hp["C"],
            epsilon=hp["epsilon"],
            degree=hp["degree"],
            coef0=hp["coef0"],
        )
    raise ValueError(f"unknown model family {family!r}")


def save_model_json(model, path, parent_id: str = "", child_ids=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, parent_id, child_ids), fh, indent=2, sort_keys=True)


def load_model_json(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
