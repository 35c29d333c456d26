"""Diversity measures and the loss decompositions built on them.

For each loss kind there is a per-sample, per-member scalar ``f`` whose
rho-variance, averaged over the data, is the diversity:

* squared error: the regression output ``h(x; theta)``;
* cross-entropy: ``p(y|x, theta) / (sqrt(2) * max_k p(y|x, theta_k))``;
* 0-1: the error indicator ``1[h(x; theta) != y]``.

With this diversity ``D``, the ensemble loss satisfies
``L(rho) <= alpha * (E_rho[L(theta)] - D)`` with ``alpha = 4`` for 0-1 and
``1`` otherwise, and equality for squared error. All expectations over data
are plain means (``1/n``), so the identities below hold to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._errors import NumericFailureError
from .losses import (
    Dataset,
    Ensemble,
    LossKind,
    avg_individual_loss,
    empirical_loss,
    member_predictions,
    member_votes,
    per_sample_member_losses,
    true_class_probs,
)

_SQRT2 = math.sqrt(2.0)
# below this gap between max and mean probability the curvature factor takes its limit
TIGHT_LIMIT_GAP = 1e-8
_SERIES_T = 1e-3


@dataclass
class DecompositionReport:
    kind: LossKind
    ensemble_loss: float
    avg_individual_loss: float
    diversity: float
    alpha: float
    rhs: float
    gap: float
    rhs_alpha1: float
    tight_ce: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DecompositionReport":
        data = dict(data)
        data["kind"] = LossKind.parse(data["kind"])
        return cls(**data)


@dataclass
class CovarianceReport:
    total_variance: float
    avg_covariance: float
    diversity: float
    covariance_matrix: np.ndarray

    def to_dict(self) -> dict:
        return {
            "total_variance": self.total_variance,
            "avg_covariance": self.avg_covariance,
            "diversity": self.diversity,
            "covariance_matrix": self.covariance_matrix.tolist(),
        }


def f_matrix(ensemble: Ensemble, dataset: Dataset, kind) -> np.ndarray:
    """The diversity function for every sample and member, shape ``(n, K)``."""
    kind = dataset.task.check_kind(kind)
    y = dataset.targets
    if kind is LossKind.SQUARED_ERROR:
        return member_predictions(ensemble, dataset.features).T
    if kind is LossKind.CROSS_ENTROPY:
        p = true_class_probs(member_predictions(ensemble, dataset.features), y)
        return p / (_SQRT2 * p.max(axis=1, keepdims=True))
    return (member_votes(ensemble, dataset.features).T != y[:, None]).astype(np.float64)


def f_value(kind, ensemble: Ensemble, sample, model_index: int) -> float:
    """``f`` for a single ``(x, y)`` pair and one member."""
    x, y = sample
    data = Dataset(np.atleast_2d(np.asarray(x, dtype=np.float64)), [y], ensemble.task)
    return float(f_matrix(ensemble, data, kind)[0, model_index])


def weighted_variance(f: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Per-row rho-variance of an ``(n, K)`` matrix.

    Rows are shifted by their first entry so that equal entries give exactly 0
    even when ``rho`` sums to one only up to rounding.
    """
    f = f - f[:, :1]
    mean = f @ rho
    return ((f - mean[:, None]) ** 2) @ rho


def diversity_variance_form(ensemble: Ensemble, dataset: Dataset, kind) -> float:
    f = f_matrix(ensemble, dataset, kind)
    return float(np.mean(weighted_variance(f, ensemble.rho)))


def diversity_pairwise_form(ensemble: Ensemble, dataset: Dataset, kind) -> float:
    """``E_{rho x rho} E_data[f(theta)^2 - f(theta) f(theta')]``."""
    f = f_matrix(ensemble, dataset, kind)
    rho = ensemble.rho
    cross = (f.T @ f) / f.shape[0]
    squares = np.diag(cross)
    return float(rho @ (squares[:, None] - cross) @ rho)


def curvature_factor(m, mu):
    """``(ln mu - ln m) / (m - mu)^2 + 1 / (mu (m - mu))``, with its limit at ``mu = m``.

    Written as ``g(t) / mu^2`` with ``t = m / mu - 1`` and
    ``g(t) = (t - log1p(t)) / t^2``; a short series replaces ``g`` for small
    ``t`` where the closed form cancels catastrophically.
    """
    m = np.asarray(m, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    t = (m - mu) / mu
    small = np.abs(t) < _SERIES_T
    t_safe = np.where(small, 1.0, t)
    closed = (t_safe - np.log1p(t_safe)) / t_safe ** 2
    series = 0.5 - t / 3.0 + t ** 2 / 4.0 - t ** 3 / 5.0 + t ** 4 / 6.0
    h = np.where(small, series, closed) / mu ** 2
    return np.where(np.abs(m - mu) < TIGHT_LIMIT_GAP, 1.0 / (2.0 * m ** 2), h)


def curvature_factor_grad(m, mu):
    """Partial derivatives of :func:`curvature_factor` w.r.t. ``m`` and ``mu``."""
    m = np.asarray(m, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    t = (m - mu) / mu
    small = np.abs(t) < _SERIES_T
    t_safe = np.where(small, 1.0, t)
    g = np.where(small, 0.5 - t / 3.0 + t ** 2 / 4.0 - t ** 3 / 5.0 + t ** 4 / 6.0,
                 (t_safe - np.log1p(t_safe)) / t_safe ** 2)
    closed_dg = (t_safe / (1.0 + t_safe) - 2.0) / t_safe ** 2 + 2.0 * np.log1p(t_safe) / t_safe ** 3
    series_dg = -1.0 / 3.0 + t / 2.0 - 3.0 * t ** 2 / 5.0 + 2.0 * t ** 3 / 3.0 - 5.0 * t ** 4 / 7.0
    dg = np.where(small, series_dg, closed_dg)
    dh_dm = dg / mu ** 3
    dh_dmu = -m * dg / mu ** 4 - 2.0 * g / mu ** 3
    return dh_dm, dh_dmu


def diversity_tight_ce(ensemble: Ensemble, dataset: Dataset) -> float:
    """Curvature-weighted variance of the true-class probability (sharper than ``D_ce``)."""
    dataset.task.check_kind(LossKind.CROSS_ENTROPY)
    p = true_class_probs(member_predictions(ensemble, dataset.features), dataset.targets)
    mu = p @ ensemble.rho
    m = p.max(axis=1)
    value = float(np.mean(curvature_factor(m, mu) * weighted_variance(p, ensemble.rho)))
    if not math.isfinite(value):
        raise NumericFailureError("tight cross-entropy diversity is not finite")
    return value


def decompose(ensemble: Ensemble, dataset: Dataset, kind, tight_ce: bool = False) -> DecompositionReport:
    kind = dataset.task.check_kind(kind)
    ens_loss = empirical_loss(ensemble, dataset, kind)
    avg = avg_individual_loss(ensemble, dataset, kind)
    if tight_ce and kind is LossKind.CROSS_ENTROPY:
        div = diversity_tight_ce(ensemble, dataset)
    else:
        div = diversity_variance_form(ensemble, dataset, kind)
        tight_ce = False
    return DecompositionReport(
        kind=kind,
        ensemble_loss=ens_loss,
        avg_individual_loss=avg,
        diversity=div,
        alpha=kind.alpha,
        rhs=kind.alpha * (avg - div),
        gap=avg - ens_loss,
        rhs_alpha1=avg - div,
        tight_ce=tight_ce,
    )


def covariance_decomposition(ensemble: Ensemble, dataset: Dataset, kind) -> CovarianceReport:
    """Split diversity into total variance minus rho-averaged member covariance."""
    if dataset.n < 2:
        raise ValueError("covariance decomposition needs at least two samples")
    f = f_matrix(ensemble, dataset, kind)
    rho = ensemble.rho
    n = f.shape[0]
    joint_mean = float(np.mean(f @ rho))
    total_var = float(np.mean((f ** 2) @ rho) - joint_mean ** 2)
    centred = f - f.mean(axis=0)
    cov = centred.T @ centred / n
    return CovarianceReport(
        total_variance=total_var,
        avg_covariance=float(rho @ cov @ rho),
        diversity=float(np.mean(weighted_variance(f, rho))),
        covariance_matrix=cov,
    )


def gap_check(report: DecompositionReport, tol: float = 1e-9) -> bool:
    """Diversity never exceeds ``E_rho[L] - L(rho) / alpha`` (equality for squared error)."""
    slack = report.avg_individual_loss - report.ensemble_loss / report.alpha
    ok = report.diversity <= slack + tol
    if report.kind is LossKind.SQUARED_ERROR and not report.tight_ce:
        ok = ok and abs(report.diversity - slack) <= tol
    return bool(ok)


@dataclass
class SingleModelCheck:
    condition_met: bool
    ensemble_beats_single: bool


def single_model_check(ensemble: Ensemble, dataset: Dataset, kind, best_model_index: int) -> SingleModelCheck:
    """Sufficient condition for the ensemble to beat one given member.

    ``E_rho[L] - L(theta*) / alpha < D`` implies ``L(rho) < L(theta*)``; for
    squared error the converse holds as well.
    """
    kind = dataset.task.check_kind(kind)
    if not 0 <= best_model_index < ensemble.size:
        raise ValueError(f"model index {best_model_index} out of range for {ensemble.size} members")
    report = decompose(ensemble, dataset, kind)
    single = empirical_loss(ensemble.models[best_model_index], dataset, kind)
    condition = report.avg_individual_loss - single / kind.alpha < report.diversity
    beats = report.ensemble_loss < single
    return SingleModelCheck(bool(condition), bool(beats))


def tandem_loss(ensemble: Ensemble, i: int, j: int, dataset: Dataset, kind) -> float:
    """Pairwise loss ``L(theta_i) - E_data[f_i^2 - f_i f_j]``.

    For 0-1 this is the joint error ``E[1(h_i != y) 1(h_j != y)]``; its
    rho x rho average is ``E_rho[L] - D``.
    """
    kind = dataset.task.check_kind(kind)
    k = ensemble.size
    if not (0 <= i < k and 0 <= j < k):
        raise ValueError(f"member indices ({i}, {j}) out of range for {k} members")
    f = f_matrix(ensemble, dataset, kind)
    losses = per_sample_member_losses(ensemble, dataset, kind)
    return float(np.mean(losses[:, i]) - np.mean(f[:, i] ** 2 - f[:, i] * f[:, j]))


def tandem_matrix(ensemble: Ensemble, dataset: Dataset, kind) -> np.ndarray:
    """All pairwise tandem losses as a ``(K, K)`` matrix."""
    f = f_matrix(ensemble, dataset, kind)
    losses = per_sample_member_losses(ensemble, dataset, kind).mean(axis=0)
    n = f.shape[0]
    cross = f.T @ f / n
    return losses[:, None] - (np.diag(cross)[:, None] - cross)


def positivity_witness(ensemble: Ensemble, dataset: Dataset, kind=None, tol: float = 1e-12):
    """First sample on which two weighted members disagree, or ``None``.

    Disagreement is measured on the diversity function of ``kind`` (the
    prediction for squared error, the true-class probability for
    cross-entropy, the error indicator for 0-1), which is exactly what makes
    the diversity strictly positive.
    """
    if ensemble.size < 2:
        raise ValueError("need at least two members")
    if kind is None:
        kind = LossKind.CROSS_ENTROPY if dataset.task.is_classification else LossKind.SQUARED_ERROR
    kind = dataset.task.check_kind(kind)
    f = f_matrix(ensemble, dataset, kind)[:, ensemble.rho > 0]
    spread = f.max(axis=1) - f.min(axis=1)
    hits = np.flatnonzero(spread > tol)
    if hits.size == 0:
        return None
    if diversity_variance_form(ensemble, dataset, kind) <= 0.0:
        raise NumericFailureError("members disagree but the diversity is not positive")
    return int(hits[0])
