import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensdiv.fisher import (
    CategoricalWeights,
    fisher_information,
    outcome_scores,
    score_vector,
    variance_lower_bound,
)


class TestFisherInformation:
    def test_bernoulli_half(self):
        np.testing.assert_allclose(fisher_information([0.5]), [[4.0]])

    def test_bernoulli_quarter(self):
        np.testing.assert_allclose(fisher_information([0.25]), [[1 / 0.1875]], rtol=1e-14)

    def test_three_outcomes(self):
        np.testing.assert_allclose(fisher_information([0.2, 0.3]), [[7.0, 2.0], [2.0, 16 / 3]], rtol=1e-14)

    def test_equals_score_covariance(self, rng):
        for _ in range(20):
            p = rng.dirichlet(np.ones(4))
            scores = outcome_scores(p[:-1])
            expected = (scores * p[:, None]).T @ scores
            np.testing.assert_allclose(fisher_information(p[:-1]), expected, rtol=1e-12)

    def test_scores_have_zero_mean(self, rng):
        p = rng.dirichlet(np.ones(5))
        np.testing.assert_allclose(p @ outcome_scores(p[:-1]), 0.0, atol=1e-12)

    @pytest.mark.parametrize("p", [[0.0], [1.0], [0.6, 0.4], [-0.1, 0.5]])
    def test_degenerate(self, p):
        with pytest.raises(ValueError):
            CategoricalWeights(p)


class TestScoreVector:
    def test_constant(self):
        np.testing.assert_array_equal(score_vector([0.2, 0.3], [5.0, 5.0, 5.0]), [0.0, 0.0])

    def test_two(self):
        np.testing.assert_array_equal(score_vector([0.25], [3.0, 1.0]), [2.0])

    def test_three(self):
        np.testing.assert_array_equal(score_vector([0.2, 0.3], [1.0, 2.0, 4.0]), [-3.0, -2.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            score_vector([0.2, 0.3], [1.0, 2.0])

    def test_is_gradient_of_mean(self, rng):
        p = rng.dirichlet(np.ones(4))[:-1]
        f = rng.standard_normal(4)

        def mean(q):
            return float(np.append(q, 1 - q.sum()) @ f)

        step = 1e-6
        numeric = [(mean(p + step * e) - mean(p - step * e)) / (2 * step) for e in np.eye(3)]
        np.testing.assert_allclose(score_vector(p, f), numeric, rtol=1e-8)


class TestVarianceLowerBound:
    def test_bernoulli(self):
        r = variance_lower_bound([0.25], [3.0, 1.0])
        assert abs(r.exact_variance - 0.75) <= 1e-12
        assert abs(r.lower_bound - 0.75) <= 1e-12

    def test_three_outcomes(self):
        r = variance_lower_bound([0.2, 0.3], [1.0, 2.0, 4.0])
        assert abs(r.exact_variance - 1.56) <= 1e-9
        assert abs(r.lower_bound - 1.56) <= 1e-9

    def test_constant(self):
        r = variance_lower_bound([0.2, 0.3], [2.0, 2.0, 2.0])
        assert r.lower_bound == 0.0 and r.exact_variance == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=100)
    @given(st.integers(2, 7), st.integers(0, 2 ** 32 - 1))
    def test_never_exceeds_variance(self, k, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(k))
        if p.min() < 1e-6:
            return
        r = variance_lower_bound(p[:-1], rng.standard_normal(k) * 3)
        assert r.lower_bound <= r.exact_variance + 1e-12 * max(1.0, r.exact_variance)
        assert r.lower_bound >= -1e-15

    def test_report_json(self):
        payload = json.loads(json.dumps(variance_lower_bound([0.2, 0.3], [1.0, 2.0, 4.0]).to_dict()))
        assert payload["J"] == [[7.0, 2.0], [2.0, pytest.approx(16 / 3)]]
        assert payload["a"] == [-3.0, -2.0]
