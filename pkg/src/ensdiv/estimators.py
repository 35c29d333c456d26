"""scikit-learn compatible wrappers around the ensemble trainers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .diversity import DecompositionReport, decompose
from .losses import Dataset, Ensemble, LossKind, Task, ensemble_predict_average, ensemble_predict_mv
from .pacbayes import DEFAULT_LAMBDA, DEFAULT_MIXTURE_SIGMA2, PacBoundReport, pac_bound
from .trainers import JsonlLog, TrainConfig, resolve_prior, train


class _EnsembleBase(BaseEstimator):
    _loss_kind = LossKind.SQUARED_ERROR

    def __init__(self, n_members=4, objective="independent", epochs=250, learning_rate=0.001,
                 batch_size=32, l2_coefficient=2e-4, decay_epochs=(60, 120, 160), decay_factor=0.1,
                 hidden=(50,), activation="tanh", lam=DEFAULT_LAMBDA, prior_variance=None,
                 mixture_sigma2=DEFAULT_MIXTURE_SIGMA2, nc_lambda=1.0, tight_ce=False, random_state=0):
        self.n_members = n_members
        self.objective = objective
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.l2_coefficient = l2_coefficient
        self.decay_epochs = decay_epochs
        self.decay_factor = decay_factor
        self.hidden = hidden
        self.activation = activation
        self.lam = lam
        self.prior_variance = prior_variance
        self.mixture_sigma2 = mixture_sigma2
        self.nc_lambda = nc_lambda
        self.tight_ce = tight_ce
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            loss_kind=self._loss_kind, k=self.n_members, epochs=self.epochs,
            base_learning_rate=self.learning_rate, batch_size=self.batch_size,
            l2_coefficient=self.l2_coefficient, learning_rate_decay_epochs=tuple(self.decay_epochs),
            learning_rate_decay_factor=self.decay_factor, seed=int(self.random_state or 0),
            objective=self.objective, nc_lambda=self.nc_lambda, lam=self.lam,
            prior_variance=self.prior_variance, mixture_sigma2=self.mixture_sigma2,
            hidden=tuple(self.hidden), activation=self.activation, tight_ce=self.tight_ce,
        )

    def _fit_dataset(self, dataset: Dataset):
        config = self._config()
        log = JsonlLog()
        self.ensemble_ = train(config, dataset, log)
        self.training_log_ = log.records
        self.prior_ = resolve_prior(config, dataset)
        self.n_features_in_ = dataset.dim
        return self

    def _check_X(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the ensemble was fitted with {self.n_features_in_}")
        return X

    def decompose(self, X, y, kind=None) -> DecompositionReport:
        """Ensemble loss, average member loss and diversity on ``(X, y)``."""
        data = self._dataset(X, y)
        return decompose(self.ensemble_, data, kind or self._loss_kind, tight_ce=self.tight_ce)

    def bound(self, X, y, kind=None, xi=0.05, epsilon_mode=None) -> PacBoundReport:
        """PAC-Bayes bound with the prior the ensemble was trained against."""
        data = self._dataset(X, y)
        return pac_bound(self.ensemble_, data, prior=self.prior_, mixture_sigma2=self.mixture_sigma2,
                         lam=self.lam, xi=xi, kind=kind or self._loss_kind, epsilon_mode=epsilon_mode)


class EnsembleRegressor(RegressorMixin, _EnsembleBase):
    """Uniform ensemble of MLP regressors trained jointly or independently."""

    _loss_kind = LossKind.SQUARED_ERROR

    def _dataset(self, X, y) -> Dataset:
        X = self._check_X(X)
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return Dataset(X, y, Task.regression())

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit_dataset(Dataset(X, y, Task.regression()))

    def predict(self, X):
        X = self._check_X(X)
        return ensemble_predict_average(self.ensemble_, X)

    def predict_members(self, X):
        """Member predictions, shape ``(n_members, n_samples)``."""
        X = self._check_X(X)
        return np.stack([ensemble_predict_average(_single(self.ensemble_, k), X) for k in range(self.n_members)])


class EnsembleClassifier(ClassifierMixin, _EnsembleBase):
    """Uniform ensemble of MLP classifiers; ``predict`` uses model averaging."""

    _loss_kind = LossKind.CROSS_ENTROPY

    def _encode(self, y):
        labels = np.searchsorted(self.classes_, y)
        if np.any(labels >= self.classes_.size) or np.any(self.classes_[np.minimum(labels, self.classes_.size - 1)] != y):
            raise ValueError("y contains labels unseen during fit")
        return labels

    def _dataset(self, X, y) -> Dataset:
        X = self._check_X(X)
        X, y = check_X_y(X, y, dtype=np.float64)
        return Dataset(X, self._encode(y), Task.classification(self.classes_.size))

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        return self._fit_dataset(Dataset(X, self._encode(y), Task.classification(self.classes_.size)))

    def predict_proba(self, X):
        X = self._check_X(X)
        return ensemble_predict_average(self.ensemble_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def predict_vote(self, X):
        """Weighted majority vote of the members' hard predictions."""
        X = self._check_X(X)
        return self.classes_[ensemble_predict_mv(self.ensemble_, X)]


def _single(ensemble, k):
    return Ensemble([ensemble.models[k]], np.ones(1), ensemble.task)
