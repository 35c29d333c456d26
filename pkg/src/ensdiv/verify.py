"""Fast invariant suite run by ``ensdiv verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diversity import (
    covariance_decomposition,
    decompose,
    diversity_pairwise_form,
    diversity_variance_form,
    tandem_matrix,
)
from .fisher import variance_lower_bound
from .losses import Dataset, Ensemble, LossKind, avg_individual_loss, empirical_loss
from .nnet import grad_check, mlp_init, reparametrize
from .pacbayes import MixtureSpec, Prior, kl_mixture_delta, p2b_objective
from .random_instances import random_instance
from .trainers import negative_correlation, nc_objective


@dataclass
class CheckResult:
    """``worst`` is the largest error divided by its tolerance; a check passes when it is at most 1."""

    name: str
    passed: bool
    worst: float
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} (worst error/tolerance {self.worst:.3g}, {self.seconds:.2f}s)"


class _Worst:
    def __init__(self):
        self.ratio = 0.0

    def add(self, error: float, tol: float):
        self.ratio = max(self.ratio, error / tol if error > 0 else 0.0)


def _instances(seed, count, **kwargs):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield random_instance(rng, **kwargs)


def check_sq_equality(count):
    w = _Worst()
    for ens, data in _instances(1, count):
        r = decompose(ens, data, LossKind.SQUARED_ERROR)
        w.add(abs(r.ensemble_loss - r.rhs), 1e-9)
    return w.ratio


def check_classification_bounds(count):
    w = _Worst()
    for ens, data in _instances(2, count, classification=True):
        for kind in (LossKind.CROSS_ENTROPY, LossKind.ZERO_ONE):
            r = decompose(ens, data, kind)
            w.add(r.ensemble_loss - r.rhs, 1e-9)
        loose = decompose(ens, data, LossKind.CROSS_ENTROPY).rhs
        tight = decompose(ens, data, LossKind.CROSS_ENTROPY, tight_ce=True).rhs
        w.add(tight - loose, 1e-9)
        w.add(empirical_loss(ens, data, LossKind.CROSS_ENTROPY) - tight, 1e-9)
    return w.ratio


def check_pairwise_and_covariance(count):
    w = _Worst()
    for ens, data in _instances(3, count):
        v = diversity_variance_form(ens, data, LossKind.SQUARED_ERROR)
        w.add(abs(v - diversity_pairwise_form(ens, data, LossKind.SQUARED_ERROR)), 1e-12)
        c = covariance_decomposition(ens, data, LossKind.SQUARED_ERROR)
        w.add(abs(c.diversity - (c.total_variance - c.avg_covariance)), 1e-9)
    return w.ratio


def check_diversity_range(count):
    w = _Worst()
    rng = np.random.default_rng(40)
    for classification in (False, True):
        for ens, data in _instances(4, count, classification=classification):
            kind = LossKind.ZERO_ONE if classification else LossKind.SQUARED_ERROR
            r = decompose(ens, data, kind)
            w.add(-r.diversity, 1e-12)
            w.add(r.diversity - r.avg_individual_loss, 1e-12 * max(1.0, r.avg_individual_loss))
            same = Ensemble([ens.models[0]] * ens.size, ens.rho, ens.task)
            w.add(abs(diversity_variance_form(same, data, kind)), 1e-300)
            swapped = Ensemble([reparametrize(m, rng) for m in ens.models], ens.rho, ens.task)
            w.add(abs(diversity_variance_form(swapped, data, kind) - r.diversity), 1e-300)
    return w.ratio


def check_tandem(count):
    w = _Worst()
    for classification, kinds in ((False, [LossKind.SQUARED_ERROR]),
                                  (True, [LossKind.CROSS_ENTROPY, LossKind.ZERO_ONE])):
        for ens, data in _instances(5, count, classification=classification):
            for kind in kinds:
                t = ens.rho @ tandem_matrix(ens, data, kind) @ ens.rho
                rhs = avg_individual_loss(ens, data, kind) - diversity_variance_form(ens, data, kind)
                w.add(abs(t - rhs), 1e-9)
    return w.ratio


def check_negative_correlation(count):
    w = _Worst()
    for ens, data in _instances(6, count, uniform=True):
        nc = negative_correlation(ens, data)
        w.add(abs(nc + diversity_variance_form(ens, data, LossKind.SQUARED_ERROR)), 1e-10)
        value = nc_objective(ens, data, 1.0).value
        w.add(abs(value - empirical_loss(ens, data, LossKind.SQUARED_ERROR)), 1e-9)
    return w.ratio


def check_fisher(count):
    w = _Worst()
    r = variance_lower_bound([0.25], [3.0, 1.0])
    w.add(max(abs(r.lower_bound - 0.75), abs(r.exact_variance - 0.75)), 1e-12)
    r = variance_lower_bound([0.2, 0.3], [1.0, 2.0, 4.0])
    w.add(max(abs(r.lower_bound - 1.56), abs(r.exact_variance - 1.56)), 1e-9)
    rng = np.random.default_rng(7)
    for _ in range(count):
        k = int(rng.integers(2, 6))
        p = rng.dirichlet(np.ones(k))
        r = variance_lower_bound(p[:-1], rng.standard_normal(k))
        w.add(r.lower_bound - r.exact_variance, 1e-12 * max(1.0, r.exact_variance))
    return w.ratio


def check_gradients(count):
    rng = np.random.default_rng(8)
    w = _Worst()

    def half_square(out):
        return 0.5 * float(np.sum(out ** 2)), out

    for i in range(count):
        ens, data = random_instance(rng, classification=bool(i % 2), uniform=True, k=int(rng.integers(1, 4)))
        w.add(grad_check(ens.models[0], half_square, data.features), 1e-5)
        w.add(p2b_fd_error(ens, data), 1e-5)
    return w.ratio


def p2b_fd_error(ens: Ensemble, data: Dataset, step: float = 1e-5, n_total: int = 50) -> float:
    """Max relative error between bound-objective gradients and central differences."""
    prior = Prior(2.0, ens.models[0].n_parameters)
    result = p2b_objective(ens, data, prior=prior, n_total=n_total)
    worst = 0.0
    for k, model in enumerate(ens.models):
        theta = model.flat_parameters()
        analytic = result.gradients[k].flat()
        for j in range(theta.size):
            values = []
            for sign in (1.0, -1.0):
                shifted = theta.copy()
                shifted[j] += sign * step
                members = list(ens.models)
                members[k] = model.with_flat_parameters(shifted)
                values.append(p2b_objective(Ensemble(members, ens.rho, ens.task), data,
                                            prior=prior, n_total=n_total).value)
            numeric = (values[0] - values[1]) / (2.0 * step)
            worst = max(worst, abs(analytic[j] - numeric) / max(1.0, abs(numeric)))
    return worst


def check_kl_formula(count):
    # 12.5 + ln 5: cross-entropy 1/2 ln(2 pi) + 12.5, ln(1/2), and -1/2 ln(2 pi 0.01)
    kl = kl_mixture_delta(MixtureSpec(np.array([[-5.0], [5.0]]), 0.01), Prior(1.0, 1))
    return abs(kl - (12.5 + math.log(5.0))) / 1e-4


def check_reproducible_init(count):
    a = mlp_init([3, 7, 2], seed=11).flat_parameters()
    b = mlp_init([3, 7, 2], seed=11).flat_parameters()
    return 0.0 if np.array_equal(a, b) else math.inf


CHECKS: dict[str, tuple[Callable, int]] = {
    "squared-error decomposition is exact": (check_sq_equality, 300),
    "cross-entropy and 0-1 bounds hold": (check_classification_bounds, 300),
    "pairwise and covariance forms agree": (check_pairwise_and_covariance, 300),
    "diversity lies in [0, average loss]": (check_diversity_range, 150),
    "tandem losses average to loss minus diversity": (check_tandem, 200),
    "negative correlation equals minus diversity": (check_negative_correlation, 300),
    "Fisher bound never exceeds the variance": (check_fisher, 500),
    "analytic gradients match finite differences": (check_gradients, 10),
    "mixture KL closed form": (check_kl_formula, 1),
    "initialization is reproducible": (check_reproducible_init, 1),
}


def run_all(scale: float = 1.0) -> list[CheckResult]:
    """Run every check; ``scale`` multiplies the number of random instances."""
    results = []
    for name, (fn, count) in CHECKS.items():
        start = time.perf_counter()
        try:
            worst = float(fn(max(1, int(count * scale))))
        except (ArithmeticError, ValueError) as exc:
            worst = math.inf
            name = f"{name}: {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, worst <= 1.0, worst, time.perf_counter() - start))
    return results
