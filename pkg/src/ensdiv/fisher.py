"""Cramer-Rao style lower bound on the rho-variance of ``f`` for categorical weights.

The ensemble weights are parametrized by the ``K - 1`` free probabilities
``p``; the last one is ``1 - sum(p)``. The score of outcome ``k < K`` is
``e_k / p_k`` and the score of outcome ``K`` is ``-1 / p_K`` in every
coordinate, so the Fisher matrix is ``diag(1 / p) + 1 / p_K``. This is
the positive definite matrix ``E[score score^T]``; a naive second-derivative
calculation produces negative diagonal entries, which are wrong.

For this family the bound ``a^T J^{-1} a`` with ``a_i = f_i - f_K`` is
attained: ``J^{-1} = diag(p) - p p^T`` and the quadratic form is exactly the
variance of ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._errors import NumericFailureError


@dataclass(frozen=True)
class CategoricalWeights:
    p: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=np.float64))
        if p.ndim != 1 or p.size < 1:
            raise ValueError("need at least one free probability (K >= 2)")
        if np.any(p <= 0.0) or 1.0 - p.sum() <= 0.0:
            raise ValueError(f"degenerate categorical weights {p.tolist()}")
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.size + 1

    @property
    def last(self) -> float:
        return float(1.0 - self.p.sum())

    def full(self) -> np.ndarray:
        return np.append(self.p, self.last)


@dataclass
class FisherReport:
    J: np.ndarray
    a: np.ndarray
    lower_bound: float
    exact_variance: float

    def to_dict(self) -> dict:
        return {
            "J": self.J.tolist(),
            "a": self.a.tolist(),
            "lower_bound": self.lower_bound,
            "exact_variance": self.exact_variance,
        }


def _as_weights(weights) -> CategoricalWeights:
    return weights if isinstance(weights, CategoricalWeights) else CategoricalWeights(weights)


def outcome_scores(weights) -> np.ndarray:
    """Score vectors ``d/dp log rho(theta_k; p)``, one row per outcome ``k``."""
    w = _as_weights(weights)
    scores = np.zeros((w.k, w.k - 1))
    scores[:-1] = np.diag(1.0 / w.p)
    scores[-1] = -1.0 / w.last
    return scores


def fisher_information(weights) -> np.ndarray:
    w = _as_weights(weights)
    return np.diag(1.0 / w.p) + 1.0 / w.last


def score_vector(weights, f) -> np.ndarray:
    """``a_i = f_i - f_K``, the gradient of ``p -> E_rho(p)[f]``."""
    w = _as_weights(weights)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (w.k,):
        raise ValueError(f"f needs {w.k} entries, got {f.shape}")
    return f[:-1] - f[-1]


def variance_lower_bound(weights, f) -> FisherReport:
    w = _as_weights(weights)
    f = np.asarray(f, dtype=np.float64)
    a = score_vector(w, f)
    J = fisher_information(w)
    try:
        x = np.linalg.solve(J, a)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError("Fisher matrix is singular") from exc
    bound = float(a @ x)
    rho = w.full()
    mean = float(rho @ f)
    variance = float(rho @ (f - mean) ** 2)
    if not (np.isfinite(bound) and np.isfinite(variance)):
        raise NumericFailureError("non-finite Fisher bound")
    return FisherReport(J=J, a=a, lower_bound=bound, exact_variance=variance)
