import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensdiv import CsvParseError, MissingColumnError
from ensdiv.data import (
    SyntheticKind,
    SyntheticSpec,
    generate,
    load_csv,
    sine_fixture,
    split,
    standardize,
    write_csv,
)
from ensdiv.losses import Dataset, Task


class TestGenerate:
    def test_noiseless_sine(self):
        data = generate(SyntheticSpec(SyntheticKind.SINE, n=50, seed=1, freq=6.0, noise_sd=0.0))
        np.testing.assert_array_equal(data.targets, np.sin(6.0 * data.features[:, 0]))

    def test_sine_domain(self):
        data = sine_fixture(500, seed=2)
        assert data.features.min() >= -1 and data.features.max() <= 1
        assert data.n == 500 and not data.task.is_classification

    def test_degenerate_blobs_nearest_center(self):
        spec = SyntheticSpec(SyntheticKind.BLOBS, n=200, seed=3, n_classes=4, sd=1e-9)
        data = generate(spec)
        centers = spec.class_centers()
        nearest = np.argmin(((data.features[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        np.testing.assert_array_equal(nearest, data.targets)

    def test_explicit_centers(self):
        spec = SyntheticSpec(SyntheticKind.BLOBS, n=20, seed=0, centers=((0, 0, 0), (5, 5, 5)))
        data = generate(spec)
        assert data.dim == 3 and data.task.n_classes == 2

    @settings(max_examples=20)
    @given(st.integers(0, 2 ** 31), st.sampled_from(list(SyntheticKind)))
    def test_deterministic(self, seed, kind):
        spec = SyntheticSpec(kind, n=30, seed=seed)
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)

    @pytest.mark.parametrize("kwargs", [{"n": 0}, {"noise_sd": -1.0},
                                        {"kind": SyntheticKind.BLOBS, "n_classes": 1}])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticSpec(**kwargs)


class TestLoadCsv:
    def test_semicolon_wine_style(self, tmp_path):
        path = tmp_path / "wine.csv"
        path.write_text('"fixed acidity";"pH";"quality"\n7.4;3.51;5\n7.8;3.2;5\n11.2;3.16;6\n')
        data = load_csv(path, ";", "quality")
        assert (data.n, data.dim) == (3, 2)
        np.testing.assert_array_equal(data.targets, [5.0, 5.0, 6.0])
        np.testing.assert_array_equal(data.features[:, 1], [3.51, 3.2, 3.16])

    def test_named_delimiter(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a;quality\n1;2\n")
        assert load_csv(path, "semicolon").n == 1

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(MissingColumnError) as info:
            load_csv(path, ",", "quality")
        assert "a" in str(info.value) and "b" in str(info.value)

    def test_parse_error_cites_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,quality\n1,2\nabc,3\n")
        with pytest.raises(CsvParseError) as info:
            load_csv(path)
        assert info.value.row == 2
        assert "2" in str(info.value) and "abc" in str(info.value)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(ValueError):
            load_csv(path)

    def test_bad_delimiter(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,quality\n1,2\n")
        with pytest.raises(ValueError):
            load_csv(path, "\t")

    def test_classification_targets(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n0.5,1\n0.2,0\n")
        data = load_csv(path, ",", "label", Task.classification(2))
        assert data.targets.dtype == np.int64

    def test_round_trip(self, tmp_path, rng):
        data = Dataset(rng.standard_normal((25, 3)) * 1e3, rng.standard_normal(25) / 7, Task.regression())
        path = tmp_path / "round.csv"
        write_csv(data, path, delimiter=";", target_column="quality")
        again = load_csv(path, ";", "quality")
        np.testing.assert_array_equal(again.features, data.features)
        np.testing.assert_array_equal(again.targets, data.targets)


class TestSplit:
    def test_sizes(self):
        data = sine_fixture(10, seed=0)
        parts = split(data, 0.5, seed=1)
        assert (parts.train.n, parts.test.n) == (5, 5)

    def test_ceil(self):
        parts = split(sine_fixture(7, seed=0), 0.5, seed=1)
        assert (parts.train.n, parts.test.n) == (4, 3)

    @settings(max_examples=30)
    @given(st.integers(2, 60), st.floats(0.05, 0.9), st.integers(0, 1000))
    def test_partition(self, n, fraction, seed):
        data = sine_fixture(n, seed=0)
        try:
            parts = split(data, fraction, seed)
        except ValueError:
            return
        everything = np.concatenate([parts.train_index, parts.test_index])
        np.testing.assert_array_equal(np.sort(everything), np.arange(n))
        assert np.intersect1d(parts.train_index, parts.test_index).size == 0

    def test_seeded(self):
        data = sine_fixture(30, seed=0)
        np.testing.assert_array_equal(split(data, 0.3, 4).train_index, split(data, 0.3, 4).train_index)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_range(self, fraction):
        with pytest.raises(ValueError):
            split(sine_fixture(10), fraction)


class TestStandardize:
    def test_uses_training_statistics(self, rng):
        train = Dataset(rng.normal(3.0, 2.0, (100, 2)), np.zeros(100), Task.regression())
        test = Dataset(rng.normal(3.0, 2.0, (50, 2)), np.zeros(50), Task.regression())
        train_s, test_s, scaler = standardize(train, test)
        np.testing.assert_allclose(train_s.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train_s.features.std(axis=0), 1.0, rtol=1e-12)
        np.testing.assert_allclose(test_s.features, (test.features - train.features.mean(0)) / train.features.std(0))
