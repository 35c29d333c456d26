import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ensdiv import EnsembleClassifier, EnsembleRegressor
from ensdiv.data import SyntheticKind, SyntheticSpec, generate, sine_fixture
from ensdiv.losses import empirical_loss

FAST = dict(n_members=3, epochs=20, learning_rate=0.05, batch_size=16, hidden=(8,), decay_epochs=(15,))


@pytest.fixture(scope="module")
def sine():
    data = sine_fixture(80, seed=0)
    return data.features, data.targets


@pytest.fixture(scope="module")
def blobs():
    data = generate(SyntheticSpec(SyntheticKind.BLOBS, n=90, seed=1, n_classes=3, sd=0.5))
    return data.features, data.targets


class TestRegressor:
    def test_fit_predict(self, sine):
        X, y = sine
        est = EnsembleRegressor(**FAST).fit(X, y)
        pred = est.predict(X)
        assert pred.shape == (80,)
        np.testing.assert_allclose(pred, est.predict_members(X).mean(axis=0), rtol=1e-12, atol=1e-12)
        assert len(est.training_log_) == 20 and est.n_features_in_ == 1

    def test_decompose_matches_predictions(self, sine):
        X, y = sine
        est = EnsembleRegressor(**FAST).fit(X, y)
        report = est.decompose(X, y)
        assert report.ensemble_loss == pytest.approx(np.mean((est.predict(X) - y) ** 2), rel=1e-12)
        assert report.rhs == pytest.approx(report.ensemble_loss, rel=1e-9, abs=1e-12)

    def test_bound_uses_training_prior(self, sine):
        X, y = sine
        est = EnsembleRegressor(objective="p2b", **FAST).fit(X, y)
        report = est.bound(X, y)
        assert report.bound >= report.avg_empirical_loss - report.empirical_diversity

    def test_random_state_reproducible(self, sine):
        X, y = sine
        a = EnsembleRegressor(random_state=7, **FAST).fit(X, y).predict(X)
        b = EnsembleRegressor(random_state=7, **FAST).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_clone_and_params(self):
        est = EnsembleRegressor(n_members=5, objective="nc", nc_lambda=0.5)
        params = clone(est).get_params()
        assert params["n_members"] == 5 and params["objective"] == "nc" and params["nc_lambda"] == 0.5

    def test_not_fitted(self, sine):
        with pytest.raises(NotFittedError):
            EnsembleRegressor().predict(sine[0])

    def test_feature_count(self, sine):
        X, y = sine
        est = EnsembleRegressor(**FAST).fit(X, y)
        with pytest.raises(ValueError):
            est.predict(np.zeros((3, 2)))

    def test_invalid_params_surface_at_fit(self, sine):
        with pytest.raises(ValueError):
            EnsembleRegressor(n_members=0).fit(*sine)


class TestClassifier:
    def test_fit_predict(self, blobs):
        X, y = blobs
        est = EnsembleClassifier(**FAST).fit(X, y)
        proba = est.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=1e-12)
        assert est.score(X, y) > 0.8
        assert est.predict_vote(X).shape == (90,)

    def test_string_labels(self, blobs):
        X, y = blobs
        names = np.array(["ant", "bee", "cat"])[y]
        est = EnsembleClassifier(**FAST).fit(X, names)
        assert list(est.classes_) == ["ant", "bee", "cat"]
        assert set(est.predict(X)) <= set(names)
        numeric = EnsembleClassifier(**FAST).fit(X, y)
        np.testing.assert_array_equal(est.predict(X), np.array(["ant", "bee", "cat"])[numeric.predict(X)])

    def test_decompose_kinds(self, blobs):
        X, y = blobs
        est = EnsembleClassifier(**FAST).fit(X, y)
        ce = est.decompose(X, y)
        zero_one = est.decompose(X, y, kind="01")
        assert ce.ensemble_loss <= ce.rhs + 1e-12
        assert zero_one.alpha == 4.0
        assert zero_one.ensemble_loss == pytest.approx(1 - np.mean(est.predict_vote(X) == y))
        assert empirical_loss(est.ensemble_, est._dataset(X, y), "ce") == pytest.approx(ce.ensemble_loss)

    def test_bound(self, blobs):
        X, y = blobs
        est = EnsembleClassifier(objective="p2b", **FAST).fit(X, y)
        report = est.bound(X, y, kind="01")
        assert report.alpha == 4.0 and report.bound > 0

    def test_unseen_label(self, blobs):
        X, y = blobs
        est = EnsembleClassifier(**FAST).fit(X, y)
        with pytest.raises(ValueError):
            est.decompose(X, np.full_like(y, 9))

    def test_single_class(self, blobs):
        with pytest.raises(ValueError):
            EnsembleClassifier(**FAST).fit(blobs[0], np.zeros(90, dtype=int))

    def test_continuous_targets_rejected(self, blobs):
        with pytest.raises(ValueError):
            EnsembleClassifier(**FAST).fit(blobs[0], np.linspace(0, 1, 90))
