"""Random ensembles and datasets for property checks."""

from __future__ import annotations

import numpy as np

from .losses import Dataset, Ensemble, Task
from .nnet import Activation, MlpModel


def random_mlp(rng: np.random.Generator, dims, activation=Activation.TANH, scale: float = 1.0) -> MlpModel:
    weights = [scale * rng.standard_normal((b, a)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [scale * rng.standard_normal(b) for b in dims[1:]]
    return MlpModel(list(dims), weights, biases, activation)


def random_rho(rng: np.random.Generator, k: int) -> np.ndarray:
    """Uniform, point-mass or Dirichlet weights (chosen at random)."""
    choice = rng.integers(3)
    if choice == 0 or k == 1:
        return np.full(k, 1.0 / k)
    if choice == 1:
        rho = np.zeros(k)
        rho[rng.integers(k)] = 1.0
        return rho
    rho = rng.dirichlet(np.ones(k))
    return rho / rho.sum()


def random_dataset(rng: np.random.Generator, task: Task, n: int | None = None, dim: int | None = None) -> Dataset:
    n = int(rng.integers(2, 30)) if n is None else n
    dim = int(rng.integers(1, 4)) if dim is None else dim
    x = rng.standard_normal((n, dim))
    if task.is_classification:
        y = rng.integers(0, task.n_classes, size=n)
    else:
        y = rng.standard_normal(n)
    return Dataset(x, y, task)


def random_instance(rng: np.random.Generator, classification: bool = False, k: int | None = None,
                    uniform: bool = False):
    """A random ``(ensemble, dataset)`` pair with ``K`` in ``1..5`` unless given."""
    k = int(rng.integers(1, 6)) if k is None else k
    task = Task.classification(int(rng.integers(2, 5))) if classification else Task.regression()
    data = random_dataset(rng, task)
    dims = [data.dim, int(rng.integers(1, 6)), task.output_dim]
    activation = Activation.TANH if rng.integers(2) else Activation.RELU
    scale = float(rng.choice([0.3, 1.0, 3.0]))
    models = [random_mlp(rng, dims, activation, scale) for _ in range(k)]
    rho = np.full(k, 1.0 / k) if uniform else random_rho(rng, k)
    return Ensemble(models, rho, task), data
