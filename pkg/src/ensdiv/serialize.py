"""JSON persistence for models, ensembles and reports.

Floats are written by :mod:`json`, which uses the shortest decimal string
that round-trips to the same double, so a saved model reloads bit-identically.
Weight matrices are stored row-major as nested lists with shape
``(fan_out, fan_in)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .losses import Ensemble, Task
from .nnet import Activation, MlpModel

FORMAT_VERSION = 1


def model_to_dict(model: MlpModel) -> dict:
    return {
        "layer_dims": list(model.layer_dims),
        "activation": model.activation.value,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(data: dict) -> MlpModel:
    dims = [int(d) for d in data["layer_dims"]]
    weights = [np.asarray(w, dtype=np.float64).reshape(b, a) for w, a, b in zip(data["weights"], dims[:-1], dims[1:])]
    biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in data["biases"]]
    return MlpModel(dims, weights, biases, Activation(data["activation"]))


def ensemble_to_dict(ensemble: Ensemble) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "n_classes": ensemble.task.n_classes,
        "rho": ensemble.rho.tolist(),
        "models": [model_to_dict(m) for m in ensemble.models],
    }


def ensemble_from_dict(data: dict) -> Ensemble:
    if data.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {data['format_version']}")
    task = Task(data.get("n_classes"))
    models = [model_from_dict(m) for m in data["models"]]
    return Ensemble(models, data["rho"], task)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "value"):  # enums
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, **kwargs) -> str:
    return json.dumps(obj, default=_default, allow_nan=False, **kwargs)


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def save_ensemble(ensemble: Ensemble, path) -> Path:
    return write_json(ensemble_to_dict(ensemble), path)


def load_ensemble(path) -> Ensemble:
    return ensemble_from_dict(read_json(path))
