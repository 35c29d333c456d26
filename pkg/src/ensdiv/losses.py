"""Per-sample losses and the three ensemble predictors.

* regression ensembles: rho-weighted average output, squared error;
* model averaging: rho-weighted average of member class probabilities,
  cross-entropy;
* weighted majority vote: rho-weighted count of hard member votes, 0-1 loss.

Ties in any argmax go to the smallest class index. Probabilities entering a
logarithm (or the cross-entropy diversity) are clamped to ``[PROB_FLOOR, 1]``
member by member, so every cross-entropy quantity in the package is a
function of the same clamped member probabilities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nnet import MlpModel, mlp_forward, softmax

PROB_FLOOR = 1e-12


class LossKind(str, enum.Enum):
    SQUARED_ERROR = "sq"
    CROSS_ENTROPY = "ce"
    ZERO_ONE = "01"

    @property
    def alpha(self) -> float:
        return 4.0 if self is LossKind.ZERO_ONE else 1.0

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        aliases = {"mse": "sq", "squared": "sq", "crossentropy": "ce", "zeroone": "01", "0-1": "01"}
        value = str(value).lower()
        return cls(aliases.get(value, value))


@dataclass(frozen=True)
class Task:
    """Regression (``n_classes is None``) or classification with ``n_classes`` labels."""

    n_classes: int | None = None

    @classmethod
    def regression(cls) -> "Task":
        return cls(None)

    @classmethod
    def classification(cls, n_classes: int) -> "Task":
        if n_classes < 2:
            raise ValueError("classification needs at least two classes")
        return cls(int(n_classes))

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    @property
    def output_dim(self) -> int:
        return self.n_classes if self.is_classification else 1

    def check_kind(self, kind: LossKind) -> LossKind:
        kind = LossKind.parse(kind)
        if self.is_classification == (kind is LossKind.SQUARED_ERROR):
            raise ValueError(f"loss {kind.value!r} is incompatible with {self}")
        return kind

    def __str__(self):
        return f"classification({self.n_classes})" if self.is_classification else "regression"


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    task: Task

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.asarray(self.targets).ravel()
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.targets.shape[0] != n:
            raise ValueError(f"{n} feature rows but {self.targets.shape[0]} targets")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.task.is_classification:
            labels = self.targets.astype(np.float64)
            if np.any(labels != np.round(labels)):
                raise ValueError("classification targets must be integral")
            self.targets = labels.astype(np.int64)
            if self.targets.min() < 0 or self.targets.max() >= self.task.n_classes:
                raise ValueError(f"class indices must lie in [0, {self.task.n_classes})")
        else:
            self.targets = self.targets.astype(np.float64)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.targets[index], self.task)


@dataclass
class Ensemble:
    """K members with identical architecture and mixing weights ``rho``."""

    models: list[MlpModel]
    rho: np.ndarray
    task: Task

    def __post_init__(self):
        self.models = list(self.models)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if not self.models:
            raise ValueError("an ensemble needs at least one model")
        if self.rho.shape != (len(self.models),):
            raise ValueError(f"rho has shape {self.rho.shape} for {len(self.models)} models")
        if np.any(self.rho < 0) or abs(self.rho.sum() - 1.0) > 1e-12:
            raise ValueError("rho must be nonnegative and sum to one")
        dims = self.models[0].layer_dims
        if any(m.layer_dims != dims for m in self.models):
            raise ValueError("all members must share the same layer_dims")
        if dims[-1] != self.task.output_dim:
            raise ValueError(f"members output {dims[-1]} values but {self.task} needs {self.task.output_dim}")

    @classmethod
    def uniform(cls, models: Sequence[MlpModel], task: Task) -> "Ensemble":
        k = len(models)
        return cls(list(models), np.full(k, 1.0 / k), task)

    @property
    def size(self) -> int:
        return len(self.models)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.rho == self.rho[0]))


def _check_dataset(dataset: Dataset):
    if dataset.n < 1:
        raise ValueError("empty dataset")


def member_outputs(ensemble: Ensemble, features) -> np.ndarray:
    """Raw outputs of every member, shape ``(K, n, o)``."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.stack([mlp_forward(m, features) for m in ensemble.models])


def member_predictions(ensemble: Ensemble, features) -> np.ndarray:
    """Regression outputs ``(K, n)`` or class probabilities ``(K, n, C)``."""
    raw = member_outputs(ensemble, features)
    if ensemble.task.is_classification:
        return softmax(raw)
    return raw[..., 0]


def true_class_probs(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Clamped ``p(y_i | x_i, theta_k)`` as an ``(n, K)`` matrix from ``(K, n, C)`` probabilities."""
    n = targets.shape[0]
    p = probs[:, np.arange(n), targets].T
    return np.clip(p, PROB_FLOOR, 1.0)


def _argmax_first(a, axis=-1):
    # np.argmax already returns the first maximal index
    return np.argmax(a, axis=axis)


def individual_loss(model: MlpModel, sample, kind, task: Task) -> float:
    """Loss of one model on one ``(x, y)`` pair."""
    kind = task.check_kind(kind)
    x, y = sample
    out = mlp_forward(model, np.asarray(x, dtype=np.float64))
    if kind is LossKind.SQUARED_ERROR:
        return float((float(y) - out[0]) ** 2)
    if kind is LossKind.CROSS_ENTROPY:
        p = softmax(out)[int(y)]
        return float(-np.log(np.clip(p, PROB_FLOOR, 1.0)))
    return float(_argmax_first(out) != int(y))


def ensemble_predict_average(ensemble: Ensemble, x) -> np.ndarray:
    """Rho-averaged output (regression) or rho-averaged class probabilities."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    preds = member_predictions(ensemble, x)
    avg = np.tensordot(ensemble.rho, preds, axes=1)
    return avg[0] if single else avg


def member_votes(ensemble: Ensemble, features) -> np.ndarray:
    """Hard class votes of every member, shape ``(K, n)``."""
    return _argmax_first(member_outputs(ensemble, features))


def majority_vote(votes: np.ndarray, rho: np.ndarray, n_classes: int) -> np.ndarray:
    """Rho-weighted hard majority vote from a ``(K, n)`` vote matrix."""
    weights = np.zeros((votes.shape[1], n_classes))
    for k in range(votes.shape[0]):
        weights[np.arange(votes.shape[1]), votes[k]] += rho[k]
    return _argmax_first(weights)


def ensemble_predict_mv(ensemble: Ensemble, x):
    if not ensemble.task.is_classification:
        raise ValueError("majority vote needs a classification ensemble")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    labels = majority_vote(member_votes(ensemble, x), ensemble.rho, ensemble.task.n_classes)
    return int(labels[0]) if single else labels


def per_sample_member_losses(ensemble: Ensemble, dataset: Dataset, kind) -> np.ndarray:
    """Individual losses of every member on every sample, ``(n, K)``."""
    kind = dataset.task.check_kind(kind)
    y = dataset.targets
    if kind is LossKind.SQUARED_ERROR:
        h = member_predictions(ensemble, dataset.features).T
        return (y[:, None] - h) ** 2
    if kind is LossKind.CROSS_ENTROPY:
        p = true_class_probs(member_predictions(ensemble, dataset.features), y)
        return -np.log(p)
    votes = member_votes(ensemble, dataset.features).T
    return (votes != y[:, None]).astype(np.float64)


def per_sample_ensemble_loss(ensemble: Ensemble, dataset: Dataset, kind) -> np.ndarray:
    kind = dataset.task.check_kind(kind)
    y = dataset.targets
    if kind is LossKind.SQUARED_ERROR:
        h = member_predictions(ensemble, dataset.features).T
        return (y - h @ ensemble.rho) ** 2
    if kind is LossKind.CROSS_ENTROPY:
        p = true_class_probs(member_predictions(ensemble, dataset.features), y)
        return -np.log(p @ ensemble.rho)
    labels = majority_vote(member_votes(ensemble, dataset.features), ensemble.rho, dataset.task.n_classes)
    return (labels != y).astype(np.float64)


def empirical_loss(model_or_ensemble, dataset: Dataset, kind) -> float:
    """Mean loss of a single model or of an ensemble's combined predictor."""
    _check_dataset(dataset)
    if isinstance(model_or_ensemble, MlpModel):
        model_or_ensemble = Ensemble([model_or_ensemble], np.ones(1), dataset.task)
    return float(np.mean(per_sample_ensemble_loss(model_or_ensemble, dataset, kind)))


def avg_individual_loss(ensemble: Ensemble, dataset: Dataset, kind) -> float:
    """``E_rho[L(theta, D)]``."""
    _check_dataset(dataset)
    return float(np.mean(per_sample_member_losses(ensemble, dataset, kind), axis=0) @ ensemble.rho)
