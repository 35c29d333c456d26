"""Ensemble training: independent members, joint bound minimization, negative correlation.

All three trainers run the same mini-batch SGD loop over the ``K`` members
and share initialization (member ``k`` starts from seed ``seed + k``) and the
shuffling stream, so runs with equal seeds are paired. They differ only in
the data term of the objective:

* ``independent``: ``E_rho[L(theta, B)]``, which splits into one problem per member;
* ``p2b``: ``E_rho[L(theta, B)] - V(rho, B)``;
* ``nc``: ``E_rho[L_sq(theta, B)] + nc_lambda * NC(rho, B)``.

Each objective adds the same prior term ``2 KL(rho_delta || pi) / (lam n)``
with ``n`` the full training-set size. Member gradients of the joint objective
are multiplied by ``K`` before the update so that a member's step size does
not depend on the ensemble size.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from ._errors import NumericFailureError
from .losses import Dataset, Ensemble, LossKind
from .nnet import Activation, MlpModel, mlp_backward, mlp_forward, mlp_init
from .pacbayes import (
    DEFAULT_LAMBDA,
    DEFAULT_MIXTURE_SIGMA2,
    ObjectiveValue,
    Prior,
    _prior_term,
    member_output_gradients,
)

logger = logging.getLogger(__name__)


class Objective(str, enum.Enum):
    INDEPENDENT = "independent"
    P2B = "p2b"
    NEGATIVE_CORRELATION = "nc"


@dataclass
class TrainConfig:
    loss_kind: LossKind = LossKind.SQUARED_ERROR
    k: int = 4
    epochs: int = 250
    base_learning_rate: float = 0.001
    batch_size: int = 32
    l2_coefficient: float = 2e-4
    learning_rate_decay_epochs: tuple = (60, 120, 160)
    learning_rate_decay_factor: float = 0.1
    seed: int = 0
    objective: Objective = Objective.INDEPENDENT
    nc_lambda: float = 1.0
    lam: float = DEFAULT_LAMBDA
    prior_variance: float | None = None
    mixture_sigma2: float = DEFAULT_MIXTURE_SIGMA2
    hidden: tuple = (50,)
    activation: Activation = Activation.TANH
    tight_ce: bool = False
    full_batch: bool = False
    # debug switches
    diversity_weight: float = 1.0
    shared_init: bool = False

    def __post_init__(self):
        self.loss_kind = LossKind.parse(self.loss_kind)
        self.objective = Objective(self.objective)
        self.activation = Activation(self.activation)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.learning_rate_decay_epochs = tuple(int(e) for e in self.learning_rate_decay_epochs)
        positive = {"k": self.k, "epochs": self.epochs, "base_learning_rate": self.base_learning_rate,
                    "batch_size": self.batch_size, "lam": self.lam, "mixture_sigma2": self.mixture_sigma2}
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.l2_coefficient < 0:
            raise ValueError("l2_coefficient must be nonnegative")
        if self.prior_variance is not None and not self.prior_variance > 0:
            raise ValueError("prior_variance must be positive")
        if not 0.0 <= self.nc_lambda <= 1.0:
            raise ValueError("nc_lambda must lie in [0, 1]")
        if self.loss_kind is LossKind.ZERO_ONE:
            raise ValueError("0-1 loss is not differentiable; train with cross-entropy")
        if self.objective is Objective.NEGATIVE_CORRELATION and self.loss_kind is not LossKind.SQUARED_ERROR:
            raise ValueError("negative correlation learning is defined for squared error only")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["loss_kind"] = self.loss_kind.value
        out["objective"] = self.objective.value
        out["activation"] = self.activation.value
        out["hidden"] = list(self.hidden)
        out["learning_rate_decay_epochs"] = list(self.learning_rate_decay_epochs)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)


def prior_variance_from_l2(l2_coefficient: float, lam: float, n: int, kl_multiplier: float = 1.0) -> float:
    """Prior variance whose term ``kl_multiplier * (-ln pi(theta)) / (lam n)`` has the gradient of ``l2 * |theta|^2``."""
    if not l2_coefficient > 0:
        raise ValueError("an L2 coefficient of zero corresponds to a flat prior")
    return kl_multiplier / (2.0 * l2_coefficient * lam * n)


def resolve_prior(config: TrainConfig, dataset: Dataset) -> Prior:
    """Prior for the trainers; without an explicit variance it reproduces the configured weight decay."""
    dims = [dataset.dim, *config.hidden, dataset.task.output_dim]
    n_params = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    variance = config.prior_variance
    if variance is None:
        variance = prior_variance_from_l2(config.l2_coefficient, config.lam, dataset.n, kl_multiplier=2.0)
    return Prior(variance, n_params)


def negative_correlation(ensemble: Ensemble, dataset: Dataset) -> float:
    """``E_D[(1/K) sum_k (h_k - h_rho) sum_{j != k} (h_j + h_rho)]`` by explicit double sum."""
    if dataset.task.is_classification:
        raise ValueError("negative correlation needs a regression task")
    h = np.stack([mlp_forward(m, dataset.features)[:, 0] for m in ensemble.models])  # (K, n)
    h_bar = ensemble.rho @ h
    k = ensemble.size
    total = np.zeros(dataset.n)
    for a in range(k):
        others = np.zeros(dataset.n)
        for b in range(k):
            if b != a:
                others += h[b] + h_bar
        total += (h[a] - h_bar) * others
    return float(np.mean(total / k))


def nc_objective(ensemble: Ensemble, minibatch: Dataset, nc_lambda: float = 1.0) -> ObjectiveValue:
    """Squared loss plus ``nc_lambda`` times the negative correlation penalty.

    The penalty equals minus the squared-error diversity; this identity is
    checked on every call.
    """
    if minibatch.task.is_classification:
        raise ValueError("negative correlation learning needs a regression task")
    if not ensemble.is_uniform:
        raise ValueError("negative correlation learning assumes uniform weights")
    if not 0.0 <= nc_lambda <= 1.0:
        raise ValueError("nc_lambda must lie in [0, 1]")
    nc = negative_correlation(ensemble, minibatch)
    avg_loss, div, upstream = member_output_gradients(ensemble.models, minibatch, LossKind.SQUARED_ERROR,
                                                      diversity_weight=nc_lambda)
    if abs(nc + div) > 1e-10 * max(1.0, div):
        raise NumericFailureError(f"negative correlation {nc} differs from -diversity {-div}")
    grads = [mlp_backward(m, minibatch.features, up) for m, up in zip(ensemble.models, upstream)]
    return ObjectiveValue(value=avg_loss + nc_lambda * nc, gradients=grads, avg_loss=avg_loss,
                          diversity=div, kl_term=0.0)


def _data_term_weight(config: TrainConfig) -> float:
    if config.objective is Objective.INDEPENDENT:
        return 0.0
    if config.objective is Objective.NEGATIVE_CORRELATION:
        return config.nc_lambda
    return config.diversity_weight


def _objective(models: list[MlpModel], batch: Dataset, config: TrainConfig, prior: Prior, n_total: int):
    weight = _data_term_weight(config)
    avg_loss, div, upstream = member_output_gradients(models, batch, config.loss_kind, weight, config.tight_ce)
    kl_term, prior_grads = _prior_term(models, prior, config.lam, n_total, config.mixture_sigma2)
    grads = [mlp_backward(m, batch.features, up) + pg for m, up, pg in zip(models, upstream, prior_grads)]
    return ObjectiveValue(avg_loss - weight * div + kl_term, grads, avg_loss, div, kl_term)


def learning_rate(config: TrainConfig, epoch: int) -> float:
    drops = sum(1 for e in config.learning_rate_decay_epochs if epoch >= e)
    return config.base_learning_rate * config.learning_rate_decay_factor ** drops


def initial_models(config: TrainConfig, dataset: Dataset) -> list[MlpModel]:
    dims = [dataset.dim, *config.hidden, dataset.task.output_dim]
    seeds = [config.seed] * config.k if config.shared_init else [config.seed + k for k in range(config.k)]
    return [mlp_init(dims, config.activation, s) for s in seeds]


def train(config: TrainConfig, dataset: Dataset, log_sink: Callable[[dict], None] | None = None) -> Ensemble:
    """Run the configured objective; ``log_sink`` receives one record per epoch."""
    kind = dataset.task.check_kind(config.loss_kind)
    if kind is LossKind.ZERO_ONE:
        raise ValueError("0-1 loss is not differentiable")
    models = initial_models(config, dataset)
    prior = resolve_prior(config, dataset)
    shuffle = np.random.default_rng([config.seed, 1])
    batch_size = dataset.n if config.full_batch else min(config.batch_size, dataset.n)
    k = config.k
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        order = np.arange(dataset.n) if config.full_batch else shuffle.permutation(dataset.n)
        for start in range(0, dataset.n, batch_size):
            batch = dataset.subset(order[start:start + batch_size])
            result = _objective(models, batch, config, prior, dataset.n)
            step = lr * k
            models = [_apply(m, g, step) for m, g in zip(models, result.gradients)]
        if log_sink is not None:
            summary = _objective(models, dataset, config, prior, dataset.n)
            log_sink({"epoch": epoch, "objective": summary.value, "avg_loss": summary.avg_loss,
                      "diversity": summary.diversity, "kl_term": summary.kl_term})
    return Ensemble.uniform(models, dataset.task)


def _apply(model: MlpModel, grad, step: float) -> MlpModel:
    weights = [w - step * g for w, g in zip(model.weights, grad.weights)]
    biases = [b - step * g for b, g in zip(model.biases, grad.biases)]
    if not all(np.all(np.isfinite(w)) for w in weights):
        raise NumericFailureError("training diverged; lower the learning rate")
    return MlpModel(model.layer_dims, weights, biases, model.activation)


def train_independent(config: TrainConfig, dataset: Dataset, log_sink=None) -> Ensemble:
    return train(replace(config, objective=Objective.INDEPENDENT), dataset, log_sink)


def train_p2b(config: TrainConfig, dataset: Dataset, log_sink=None) -> Ensemble:
    return train(replace(config, objective=Objective.P2B), dataset, log_sink)


def train_nc(config: TrainConfig, dataset: Dataset, log_sink=None) -> Ensemble:
    return train(replace(config, objective=Objective.NEGATIVE_CORRELATION), dataset, log_sink)


class JsonlLog:
    """Collects epoch records and writes them as line-delimited JSON."""

    def __init__(self):
        self.records: list[dict] = []

    def __call__(self, record: dict):
        self.records.append(record)
        logger.debug("epoch %(epoch)d objective %(objective).6g", record)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            for record in self.records:
                handle.write(json.dumps(record) + "\n")
