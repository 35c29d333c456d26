"""PAC-Bayes bounds with tandem losses and the bound-minimizing training objective.

With probability at least ``1 - xi`` over the training sample, for every
posterior ``rho``::

    L(rho) <= alpha * (E_rho[L(theta, D)] - D(rho, D) + (2 KL(rho || pi) + eps) / (lam n))

The ensemble is the uniform mixture of ``K`` narrow Gaussians centred on the
member parameters. Treating each component as a point mass gives::

    KL ~= -(1/K) sum_k ln pi(theta_k) + ln(1/K) - (M/2) ln(2 pi s2)

where ``s2`` is the component variance. The value keeps its constants and can
be negative for large ``s2``; it approximates a nonnegative divergence but is
not clamped, so gradients of the training objective stay simple.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .diversity import curvature_factor, curvature_factor_grad, diversity_variance_form, weighted_variance
from .losses import (
    PROB_FLOOR,
    Dataset,
    Ensemble,
    LossKind,
    avg_individual_loss,
)
from .nnet import GradientSet, MlpModel, mlp_backward, mlp_forward, softmax

DEFAULT_LAMBDA = 2.0
DEFAULT_MIXTURE_SIGMA2 = 1e-4


@dataclass(frozen=True)
class Prior:
    """Isotropic Gaussian prior ``N(0, variance * I)`` over the ``dimension`` parameters of a member."""

    variance: float
    dimension: int

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("prior variance must be positive")
        if self.dimension < 0:
            raise ValueError("prior dimension must be nonnegative")

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dimension,):
            raise ValueError(f"prior has dimension {self.dimension}, parameters have shape {theta.shape}")
        return float(-0.5 * self.dimension * math.log(2.0 * math.pi * self.variance)
                     - theta @ theta / (2.0 * self.variance))


@dataclass
class MixtureSpec:
    component_means: np.ndarray
    mixture_sigma2: float = DEFAULT_MIXTURE_SIGMA2

    def __post_init__(self):
        means = np.asarray(self.component_means, dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        self.component_means = means
        if not self.mixture_sigma2 > 0:
            raise ValueError("mixture_sigma2 must be positive")

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble, mixture_sigma2: float = DEFAULT_MIXTURE_SIGMA2) -> "MixtureSpec":
        return cls(np.stack([m.flat_parameters() for m in ensemble.models]), mixture_sigma2)

    @property
    def k(self) -> int:
        return self.component_means.shape[0]

    @property
    def dimension(self) -> int:
        return self.component_means.shape[1]


def kl_mixture_delta(mixture: MixtureSpec, prior: Prior) -> float:
    """Point-mass approximation of ``KL(rho_delta || pi)``, constants included."""
    if prior.dimension != mixture.dimension:
        raise ValueError(f"prior dimension {prior.dimension} != parameter count {mixture.dimension}")
    cross = -np.mean([prior.log_density(theta) for theta in mixture.component_means])
    const = math.log(1.0 / mixture.k) - 0.5 * mixture.dimension * math.log(2.0 * math.pi * mixture.mixture_sigma2)
    return float(cross + const)


def kl_mixture_separated(mixture: MixtureSpec, prior: Prior) -> float:
    """KL for well-separated components, keeping each component's entropy and spread.

    Differs from :func:`kl_mixture_delta` by ``M * s2 / (2 var) - M / 2``; it
    is the limit the true divergence approaches when the components do not
    overlap.
    """
    m = mixture.dimension
    return kl_mixture_delta(mixture, prior) + m * mixture.mixture_sigma2 / (2.0 * prior.variance) - 0.5 * m


class EpsilonKind(str, enum.Enum):
    HOEFFDING = "hoeffding"
    USER = "user"
    OMIT = "omit"


@dataclass(frozen=True)
class EpsilonMode:
    """How to fill in the data-dependent ``eps`` term of the bound.

    ``hoeffding(r)`` bounds the log moment generating function of a tandem
    loss with range ``r`` by ``lam^2 r^2 / (8 n)``; ``rigorous=True`` scales
    the exponent by ``lam * n`` instead, matching the ``lam * n``
    denominator of the bound (``lam^2 n r^2 / 8``). ``user(v)`` takes ``v``
    as given. ``omit()`` keeps only ``ln(1/xi)`` and marks the report as an
    underestimate.
    """

    kind: EpsilonKind
    range_width: float = 1.0
    value: float = 0.0
    rigorous: bool = False

    @classmethod
    def hoeffding(cls, range_width: float = 1.0, rigorous: bool = False) -> "EpsilonMode":
        return cls(EpsilonKind.HOEFFDING, range_width=range_width, rigorous=rigorous)

    @classmethod
    def user(cls, value: float) -> "EpsilonMode":
        return cls(EpsilonKind.USER, value=value)

    @classmethod
    def omit(cls) -> "EpsilonMode":
        return cls(EpsilonKind.OMIT)

    @classmethod
    def parse(cls, spec) -> "EpsilonMode":
        """Build from a string (``"hoeffding"``, ``"omit"``) or a config dict."""
        if isinstance(spec, cls):
            return spec
        if isinstance(spec, str):
            spec = {"mode": spec}
        mode = EpsilonKind(spec.get("mode", "omit"))
        if mode is EpsilonKind.HOEFFDING:
            return cls.hoeffding(float(spec.get("range", 1.0)), bool(spec.get("rigorous", False)))
        if mode is EpsilonKind.USER:
            return cls.user(float(spec["value"]))
        return cls.omit()

    def __str__(self):
        if self.kind is EpsilonKind.HOEFFDING:
            suffix = ",rigorous" if self.rigorous else ""
            return f"hoeffding(r={self.range_width:g}{suffix})"
        if self.kind is EpsilonKind.USER:
            return f"user({self.value:g})"
        return "omit"


def pac_epsilon(kind, lam: float, n: int, xi: float, mode: EpsilonMode) -> float:
    kind = LossKind.parse(kind)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0.0 < xi < 1.0:
        raise ValueError("xi must lie in (0, 1)")
    confidence = math.log(1.0 / xi)
    if mode.kind is EpsilonKind.HOEFFDING:
        if not mode.range_width > 0:
            raise ValueError("Hoeffding range must be positive")
        if kind is not LossKind.ZERO_ONE:
            raise ValueError(f"tandem {kind.value!r} losses are unbounded; supply eps or omit it")
        r2 = mode.range_width ** 2
        mgf = lam ** 2 * n * r2 / 8.0 if mode.rigorous else lam ** 2 * r2 / (8.0 * n)
        return mgf + confidence
    if mode.kind is EpsilonKind.USER:
        return float(mode.value) + confidence
    return confidence


@dataclass
class PacBoundReport:
    kind: LossKind
    alpha: float
    avg_empirical_loss: float
    empirical_diversity: float
    kl: float
    epsilon: float
    lam: float
    xi: float
    n: int
    bound: float
    epsilon_mode: str
    underestimated: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PacBoundReport":
        data = dict(data)
        data["kind"] = LossKind.parse(data["kind"])
        data["lam"] = data.pop("lambda")
        return cls(**data)


def default_prior(ensemble: Ensemble, variance: float = 1.0) -> Prior:
    return Prior(variance, ensemble.models[0].n_parameters)


def pac_bound(ensemble: Ensemble, dataset: Dataset, prior: Prior | None = None,
              mixture_sigma2: float = DEFAULT_MIXTURE_SIGMA2, lam: float = DEFAULT_LAMBDA,
              xi: float = 0.05, kind=None, epsilon_mode: EpsilonMode | None = None) -> PacBoundReport:
    if not ensemble.is_uniform:
        raise ValueError("the mixture posterior requires uniform member weights")
    if kind is None:
        kind = LossKind.ZERO_ONE if dataset.task.is_classification else LossKind.SQUARED_ERROR
    kind = dataset.task.check_kind(kind)
    prior = prior or default_prior(ensemble)
    epsilon_mode = epsilon_mode or EpsilonMode.omit()
    avg = avg_individual_loss(ensemble, dataset, kind)
    div = diversity_variance_form(ensemble, dataset, kind)
    kl = kl_mixture_delta(MixtureSpec.from_ensemble(ensemble, mixture_sigma2), prior)
    eps = pac_epsilon(kind, lam, dataset.n, xi, epsilon_mode)
    bound = kind.alpha * (avg - div + (2.0 * kl + eps) / (lam * dataset.n))
    return PacBoundReport(
        kind=kind, alpha=kind.alpha, avg_empirical_loss=avg, empirical_diversity=div,
        kl=kl, epsilon=eps, lam=lam, xi=xi, n=dataset.n, bound=float(bound),
        epsilon_mode=str(epsilon_mode), underestimated=epsilon_mode.kind is EpsilonKind.OMIT,
    )


@dataclass
class ObjectiveValue:
    """Value and per-member gradients of an ensemble training objective."""

    value: float
    gradients: list[GradientSet]
    avg_loss: float
    diversity: float
    kl_term: float


def _prior_term(models, prior: Prior, lam, n_total, mixture_sigma2):
    """``2 KL / (lam n)`` and its gradient for each member."""
    k = len(models)
    weight = 2.0 / (lam * n_total)
    kl = kl_mixture_delta(MixtureSpec(np.stack([m.flat_parameters() for m in models]), mixture_sigma2), prior)
    grads = []
    for model in models:
        scale = weight / (k * prior.variance)
        grads.append(GradientSet([scale * w for w in model.weights], [scale * b for b in model.biases]))
    return weight * kl, grads


def member_output_gradients(models: list[MlpModel], batch: Dataset, kind: LossKind,
                            diversity_weight: float = 1.0, tight_ce: bool = False):
    """Loss-minus-diversity on a batch and its gradient w.r.t. every member's raw outputs.

    Assumes uniform weights. Returns ``(avg_loss, diversity, upstream)``
    with ``upstream`` of shape ``(K, n, o)``.
    """
    k = len(models)
    rho = np.full(k, 1.0 / k)
    n = batch.n
    y = batch.targets
    outputs = np.stack([mlp_forward(model, batch.features) for model in models])
    if kind is LossKind.SQUARED_ERROR:
        h = outputs[..., 0].T  # (n, K)
        mean = h @ rho
        avg_loss = float(np.mean((y[:, None] - h) ** 2))
        div = float(np.mean(weighted_variance(h, rho)))
        d_h = (2.0 / n) * (rho[None, :] * (h - y[:, None]) - diversity_weight * rho[None, :] * (h - mean[:, None]))
        return avg_loss, div, d_h.T[..., None]
    if kind is not LossKind.CROSS_ENTROPY:
        raise ValueError("only squared error and cross-entropy are differentiable")
    probs = softmax(outputs)  # (K, n, C)
    raw = probs[:, np.arange(n), y].T
    clamped = raw < PROB_FLOOR
    p = np.where(clamped, PROB_FLOOR, raw)
    mu = p @ rho
    var = weighted_variance(p, rho)
    top = np.argmax(p, axis=1)
    m = p[np.arange(n), top]
    is_top = np.zeros_like(p)
    is_top[np.arange(n), top] = 1.0
    avg_loss = float(np.mean(-np.log(p)))
    d_var = 2.0 * rho[None, :] * (p - mu[:, None])
    if tight_ce:
        h = curvature_factor(m, mu)
        dh_dm, dh_dmu = curvature_factor_grad(m, mu)
        div = float(np.mean(h * var))
        d_div = h[:, None] * d_var + var[:, None] * (dh_dmu[:, None] * rho[None, :] + dh_dm[:, None] * is_top)
    else:
        div = float(np.mean(var / (2.0 * m ** 2)))
        d_div = d_var / (2.0 * m[:, None] ** 2) - is_top * (var / m ** 3)[:, None]
    d_p = (rho[None, :] * (-1.0 / p) - diversity_weight * d_div) / n
    d_p = np.where(clamped, 0.0, d_p)
    onehot = np.zeros(probs.shape[1:])
    onehot[np.arange(n), y] = 1.0
    # dp_y / dz_c = p_y (1[c = y] - s_c)
    d_z = (d_p.T * raw.T)[..., None] * (onehot[None] - probs)
    return avg_loss, div, d_z


def p2b_objective(ensemble: Ensemble, minibatch: Dataset, prior: Prior | None = None,
                  lam: float = DEFAULT_LAMBDA, n_total: int | None = None, kind=None,
                  mixture_sigma2: float = DEFAULT_MIXTURE_SIGMA2, tight_ce: bool = False,
                  diversity_weight: float = 1.0) -> ObjectiveValue:
    """``E_rho[L(theta, B)] - V(rho, B) + 2 KL / (lam n_total)`` with exact member gradients.

    The cross-entropy diversity divides by the per-sample maximum member
    probability; its gradient flows through the first maximizer. With
    ``tight_ce`` the curvature-weighted variance replaces it.
    """
    if not ensemble.is_uniform:
        raise ValueError("the bound objective requires uniform member weights")
    if kind is None:
        kind = LossKind.CROSS_ENTROPY if minibatch.task.is_classification else LossKind.SQUARED_ERROR
    kind = minibatch.task.check_kind(kind)
    if kind is LossKind.ZERO_ONE:
        raise ValueError("0-1 loss is not differentiable; train with cross-entropy instead")
    prior = prior or default_prior(ensemble)
    n_total = minibatch.n if n_total is None else n_total
    avg_loss, div, upstream = member_output_gradients(ensemble.models, minibatch, kind, diversity_weight, tight_ce)
    kl_term, prior_grads = _prior_term(ensemble.models, prior, lam, n_total, mixture_sigma2)
    grads = [mlp_backward(model, minibatch.features, up) + pg
             for model, up, pg in zip(ensemble.models, upstream, prior_grads)]
    value = avg_loss - diversity_weight * div + kl_term
    return ObjectiveValue(value=float(value), gradients=grads, avg_loss=avg_loss, diversity=div, kl_term=kl_term)
