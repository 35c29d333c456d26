"""Synthetic generators, CSV ingestion and splitting."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from ._errors import CsvParseError, MissingColumnError
from .losses import Dataset, Task


class SyntheticKind(str, enum.Enum):
    SINE = "sine"
    BLOBS = "blobs"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic data generator.

    ``sine``: ``x ~ U[-1, 1]``, ``y = sin(freq * x) + noise_sd * N(0, 1)``.
    ``blobs``: a uniformly drawn label ``c`` and ``x = centers[c] + sd * N(0, I)``;
    without explicit centers, ``n_classes`` points on a circle of radius
    ``radius`` are used.
    """

    kind: SyntheticKind = SyntheticKind.SINE
    n: int = 200
    seed: int = 0
    freq: float = 6.0
    noise_sd: float = 0.1
    n_classes: int = 3
    centers: tuple | None = None
    sd: float = 1.0
    radius: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.noise_sd < 0 or self.sd < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.kind is SyntheticKind.BLOBS and self.class_centers().shape[0] < 2:
            raise ValueError("blobs need at least two classes")

    def class_centers(self) -> np.ndarray:
        if self.centers is not None:
            return np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        angles = 2.0 * np.pi * np.arange(self.n_classes) / self.n_classes
        return self.radius * np.column_stack([np.cos(angles), np.sin(angles)])

    def replace(self, **changes) -> "SyntheticSpec":
        fields = {**self.__dict__, **changes}
        return SyntheticSpec(**fields)


def generate(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    if spec.kind is SyntheticKind.SINE:
        x = rng.uniform(-1.0, 1.0, size=(spec.n, 1))
        y = np.sin(spec.freq * x[:, 0])
        if spec.noise_sd > 0:
            y = y + spec.noise_sd * rng.standard_normal(spec.n)
        return Dataset(x, y, Task.regression())
    centers = spec.class_centers()
    labels = rng.integers(0, centers.shape[0], size=spec.n)
    x = centers[labels] + spec.sd * rng.standard_normal((spec.n, centers.shape[1]))
    return Dataset(x, labels, Task.classification(centers.shape[0]))


def sine_fixture(n: int = 200, seed: int = 0, noise_sd: float = 0.1, freq: float = 6.0) -> Dataset:
    """Noisy ``sin(6x)`` on ``[-1, 1]``: a target with many local minima for small MLPs."""
    return generate(SyntheticSpec(SyntheticKind.SINE, n=n, seed=seed, freq=freq, noise_sd=noise_sd))


_DELIMITERS = {"comma": ",", "semicolon": ";", ",": ",", ";": ";"}


def _delimiter(value: str) -> str:
    try:
        return _DELIMITERS[value]
    except KeyError:
        raise ValueError(f"delimiter must be ',' or ';' (got {value!r})") from None


def load_csv(path, delimiter: str = ",", target_column: str = "quality", task: Task | None = None) -> Dataset:
    """Read a headed CSV file; every column but ``target_column`` is a feature.

    Rows in parse errors are numbered from 1 for the first data row.
    """
    task = task or Task.regression()
    delimiter = _delimiter(delimiter)
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [row for row in csv.reader(handle, delimiter=delimiter) if row]
    if not rows:
        raise ValueError(f"{path} is empty")
    header = [name.strip().strip('"') for name in rows[0]]
    if target_column not in header:
        raise MissingColumnError(target_column, header)
    if len(rows) < 2:
        raise ValueError(f"{path} has a header but no data rows")
    target_index = header.index(target_column)
    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise CsvParseError(r, "<row>", delimiter.join(row))
        for c, cell in enumerate(row):
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise CsvParseError(r, header[c], cell) from None
    features = np.delete(values, target_index, axis=1)
    return Dataset(features, values[:, target_index], task)


def write_csv(dataset: Dataset, path, delimiter: str = ",", target_column: str = "target",
              feature_names: Sequence[str] | None = None) -> None:
    """Write a dataset with a header; floats use shortest round-trip notation."""
    delimiter = _delimiter(delimiter)
    names = list(feature_names) if feature_names else [f"x{i}" for i in range(dataset.dim)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=delimiter, lineterminator="\n")
        writer.writerow(names + [target_column])
        for x, y in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(v)) for v in x] + [repr(y.item())])


class Split(NamedTuple):
    train: Dataset
    test: Dataset
    train_index: np.ndarray
    test_index: np.ndarray


def split(dataset: Dataset, train_fraction: float, seed: int = 0) -> Split:
    """Seeded shuffle into ``ceil(fraction * n)`` training rows and the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(dataset.n)
    n_train = math.ceil(train_fraction * dataset.n)
    if n_train >= dataset.n:
        raise ValueError(f"a {train_fraction} split of {dataset.n} rows leaves no test data")
    train_index, test_index = np.sort(order[:n_train]), np.sort(order[n_train:])
    return Split(dataset.subset(train_index), dataset.subset(test_index), train_index, test_index)


def standardize(train: Dataset, *others: Dataset):
    """Scale features to zero mean and unit variance using training statistics only."""
    scaler = StandardScaler().fit(train.features)
    out = [Dataset(scaler.transform(d.features), d.targets, d.task) for d in (train, *others)]
    return (*out, scaler)
