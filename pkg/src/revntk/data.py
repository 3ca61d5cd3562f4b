"""Datasets, input normalization and the synthetic generators used in experiments."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, replace

import numpy as np

KINDS = ("regression", "classification", "signed")
NORMALIZE_MODES = ("per_sample", "average", "off")


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    kind: str = "regression"
    dummy_value: float | None = None  # set when a dummy coordinate was appended

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        t = np.asarray(self.targets, dtype=float)
        self.targets = t[:, None] if t.ndim == 1 else t
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets have different sample counts")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    def __len__(self):
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx])


def normalize(data: Dataset, mode: str = "per_sample", dummy_index: bool = False,
              dummy_value: float | None = None) -> Dataset:
    """Rescale inputs so |x| = sqrt(d) per sample, or on average.

    With ``dummy_index`` a constant coordinate (default: the mean input norm)
    is appended first, which keeps the map invertible; pass the training
    set's ``dummy_value`` when normalizing held-out data.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"mode must be one of {NORMALIZE_MODES}")
    X = data.inputs
    if mode == "off":
        return replace(data, inputs=X.copy())
    if dummy_index:
        if dummy_value is None:
            dummy_value = float(np.mean(np.linalg.norm(X, axis=1)))
        X = np.hstack([X, np.full((len(X), 1), dummy_value)])
    d = X.shape[1]
    norms = np.linalg.norm(X, axis=1)
    if mode == "per_sample":
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ValueError(f"cannot normalize zero input row {int(zero[0])}")
        X = X * (np.sqrt(d) / norms)[:, None]
    else:
        X = X * (np.sqrt(d) / norms.mean())
    return replace(data, inputs=X, dummy_value=dummy_value if dummy_index else None)


def denormalize(data: Dataset) -> np.ndarray:
    """Original inputs from a per-sample normalized set with a dummy coordinate."""
    if data.dummy_value is None:
        raise ValueError("inversion needs the appended dummy coordinate")
    X = data.inputs
    return X[:, :-1] * (data.dummy_value / X[:, -1])[:, None]


def boolean_cube(n_bits: int) -> np.ndarray:
    if not 1 <= n_bits <= 20:
        raise ValueError("n_bits must lie in [1, 20]")
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n_bits)))


def parity_labels(X) -> np.ndarray:
    """+1 if x has an odd number of +1 entries, else -1."""
    n_pos = np.sum(np.asarray(X) > 0, axis=1)
    return np.where(n_pos % 2 == 1, 1.0, -1.0)


def parity_split(n_bits: int, train_fraction: float = 0.5, seed: int = 0):
    """Random train/test split of the labelled boolean cube.

    ``train_fraction=1`` trains on the whole cube and evaluates on it too.
    """
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must lie in (0, 1]")
    X = boolean_cube(n_bits)
    data = Dataset(X, parity_labels(X), kind="signed")
    if train_fraction == 1:
        return data, data
    perm = np.random.default_rng(seed).permutation(len(X))
    n_train = int(round(train_fraction * len(X)))
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def circle_inputs(n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Points (sqrt2 cos t, sqrt2 sin t), t in [0, pi]; c = cos t against the first."""
    theta = np.linspace(0.0, np.pi, n)
    X = np.sqrt(2.0) * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return X, np.cos(theta)


def synthetic_regression(n_train: int = 256, n_test: int = 256, d: int = 11,
                         noise: float = 0.3, seed: int = 0):
    """Smooth random target on the sphere of radius sqrt(d) plus label noise.

    The target is a sum of a linear term, a quadratic form and a sinusoid of
    a random projection, rescaled to unit variance.
    """
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    X = rng.standard_normal((n, d))
    X *= (np.sqrt(d) / np.linalg.norm(X, axis=1))[:, None]
    w = rng.standard_normal(d) / np.sqrt(d)
    A = rng.standard_normal((d, d)) / d
    A = 0.5 * (A + A.T)
    p = rng.standard_normal(d) / np.sqrt(d)
    y = X @ w + np.einsum("ni,ij,nj->n", X, A, X) + np.sin(2.0 * (X @ p))
    y = (y - y.mean()) / y.std()
    y = y + noise * rng.standard_normal(n)
    data = Dataset(X, y, kind="regression")
    return data.subset(slice(0, n_train)), data.subset(slice(n_train, n))


def load_csv(path, target: str | None = None, onehot: int = 0, delimiter: str = ",",
             kind: str | None = None) -> Dataset:
    """Read a headed CSV: either a named target column or a trailing one-hot block."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    if len(rows) < 2:
        raise ValueError(f"{path} needs a header row and at least one data row")
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if (target is None) == (onehot == 0):
        raise ValueError("give exactly one of target= or onehot=")
    if target is not None:
        if target not in header:
            raise ValueError(f"no column {target!r} in {path}")
        j = header.index(target)
        y = body[:, j]
        X = np.delete(body, j, axis=1)
        if kind is None:
            kind = "signed" if np.all(np.isin(y, (-1.0, 1.0))) else "regression"
    else:
        X, y = body[:, :-onehot], body[:, -onehot:]
        kind = kind or "classification"
    return Dataset(X, y, kind=kind)


def write_csv(path, data: Dataset, delimiter: str = ","):
    """Inverse of load_csv with ``target='y'`` (scalar) or a one-hot block."""
    d, k = data.input_dim, data.output_dim
    names = [f"x{i}" for i in range(d)] + (["y"] if k == 1 else [f"y{j}" for j in range(k)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(names)
        for xi, yi in zip(data.inputs, data.targets):
            w.writerow([repr(float(v)) for v in (*xi, *yi)])
