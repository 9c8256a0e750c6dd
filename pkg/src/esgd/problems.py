"""Fitness/gradient interface and desk-scale built-in problems.

A Problem exposes empirical risk (mean per-sample loss over a designated
split) and unbiased minibatch gradients of it. Problems are immutable
after construction; fitness and gradient calls are side-effect free and
safe to run concurrently. Everything is float64.
"""

from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import EsgdError, as_params
from .optimizers import GradientSample

__all__ = [
    "CsvError",
    "Dataset",
    "Problem",
    "QuadraticProblem",
    "MlpProblem",
    "quadratic_problem",
    "mlp_problem",
    "synthetic_classification",
    "csv_dataset",
    "save_csv",
    "perturb_params",
]


class CsvError(EsgdError):
    """CSV ingestion failure, pointing at the offending row/column."""


@dataclass
class Dataset:
    """Row-major data matrix with a disjoint train/holdout index split.

    targets is either a 1-D int64 label vector (classification) or a 2-D
    float64 matrix (regression).
    """

    inputs: np.ndarray
    targets: np.ndarray
    train_indices: np.ndarray
    holdout_indices: np.ndarray

    def __post_init__(self) -> None:
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be a non-empty 2-D matrix")
        n = self.inputs.shape[0]
        self.targets = np.asarray(self.targets)
        if self.targets.shape[0] != n:
            raise ValueError("inputs and targets disagree on sample count")
        if self.targets.ndim == 1 and np.issubdtype(self.targets.dtype, np.integer):
            self.targets = np.ascontiguousarray(self.targets, dtype=np.int64)
        else:
            self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets.reshape(n, 1)
            if self.targets.ndim != 2:
                raise ValueError("regression targets must be 1-D or 2-D")
        self.train_indices = np.asarray(self.train_indices, dtype=np.intp)
        self.holdout_indices = np.asarray(self.holdout_indices, dtype=np.intp)
        if len(self.train_indices) < 1:
            raise ValueError("train split must not be empty")
        combined = np.concatenate([self.train_indices, self.holdout_indices])
        if len(np.unique(combined)) != len(combined):
            raise ValueError("train and holdout splits must be disjoint")
        if combined.min() < 0 or combined.max() >= n:
            raise ValueError("split indices out of range")

    @property
    def classification(self) -> bool:
        return self.targets.ndim == 1 and np.issubdtype(self.targets.dtype, np.integer)

    @property
    def n_classes(self) -> int:
        if not self.classification:
            raise ValueError("not a classification dataset")
        return int(self.targets.max()) + 1

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which == "train":
            idx = self.train_indices
        elif which == "holdout":
            if len(self.holdout_indices) == 0:
                raise ValueError("dataset has no holdout split")
            idx = self.holdout_indices
        else:
            raise ValueError(f"dataset choice must be train or holdout, got {which!r}")
        return self.inputs[idx], self.targets[idx]


class Problem(ABC):
    """Fitness/gradient contract every optimization target implements."""

    @abstractmethod
    def dim(self) -> int:
        """Parameter dimension d."""

    @abstractmethod
    def init_params(self, rng: np.random.Generator, scheme: str = "default") -> np.ndarray:
        """Draw a fresh parameter vector."""

    @abstractmethod
    def minibatch_gradient(self, params: np.ndarray, batch_indices: np.ndarray) -> GradientSample:
        """Mean gradient of the per-sample losses at the given train rows."""

    @abstractmethod
    def fitness(self, params: np.ndarray, dataset: str = "train") -> float:
        """Mean per-sample loss over the designated split."""

    @abstractmethod
    def train_size(self) -> int:
        """Number of samples an SGD epoch iterates over."""

    @property
    def has_holdout(self) -> bool:
        return False


class QuadraticProblem(Problem):
    """f(theta) = 0.5 * theta' D theta with log-spaced diagonal D.

    Sample i is the coordinate block l_i(theta) = (d/2) * D_i * theta_i**2,
    so the mean over all samples recovers f and uniform minibatches give
    unbiased gradients. There is no data split; both dataset choices
    evaluate the same risk.
    """

    def __init__(self, dim: int, condition_number: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if condition_number < 1:
            raise ValueError("condition number must be >= 1")
        self._dim = dim
        self.diag = np.logspace(0.0, math.log10(condition_number), dim)

    def dim(self) -> int:
        return self._dim

    def train_size(self) -> int:
        return self._dim

    def init_params(self, rng: np.random.Generator, scheme: str = "default") -> np.ndarray:
        if scheme != "default":
            raise ValueError(f"unknown init scheme {scheme!r}")
        return rng.standard_normal(self._dim)

    def _per_sample_losses(self, params: np.ndarray) -> np.ndarray:
        return 0.5 * self._dim * self.diag * params * params

    def fitness(self, params: np.ndarray, dataset: str = "train") -> float:
        if dataset not in ("train", "holdout"):
            raise ValueError(f"dataset choice must be train or holdout, got {dataset!r}")
        return float(np.mean(self._per_sample_losses(params)))

    def minibatch_gradient(self, params: np.ndarray, batch_indices: np.ndarray) -> GradientSample:
        idx = np.asarray(batch_indices, dtype=np.intp)
        grad = np.zeros(self._dim)
        np.add.at(grad, idx, self._dim * self.diag[idx] * params[idx] / len(idx))
        batch_loss = float(np.mean(self._per_sample_losses(params)[idx]))
        return GradientSample(grad=grad, batch_loss=batch_loss)


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0.0).astype(np.float64)),
    "sigmoid": (
        lambda z: 1.0 / (1.0 + np.exp(-z)),
        lambda z, a: a * (1.0 - a),
    ),
}


class MlpProblem(Problem):
    """Fully-connected network trained by manual backpropagation.

    layer_sizes lists every layer width including input and output, e.g.
    (2, 16, 2). Classification datasets (integer labels) use softmax
    cross-entropy; regression uses half squared error. Parameters live in
    one flat vector packed as W1, b1, W2, b2, ...
    """

    def __init__(self, dataset: Dataset, layer_sizes, activation: str = "tanh"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        if sizes[0] != dataset.inputs.shape[1]:
            raise ValueError(
                f"input width {sizes[0]} != dataset feature count {dataset.inputs.shape[1]}"
            )
        out_dim = dataset.n_classes if dataset.classification else dataset.targets.shape[1]
        if sizes[-1] != out_dim:
            raise ValueError(f"output width {sizes[-1]} != target width {out_dim}")
        self.dataset = dataset
        self.sizes = sizes
        self.activation = activation
        self._act, self._act_grad = _ACTIVATIONS[activation]
        self._shapes: list[tuple[int, int]] = []
        self._offsets: list[int] = [0]
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self._shapes.append((fan_in, fan_out))
            self._offsets.append(self._offsets[-1] + fan_in * fan_out + fan_out)
        self._dim = self._offsets[-1]

    def dim(self) -> int:
        return self._dim

    def train_size(self) -> int:
        return len(self.dataset.train_indices)

    @property
    def has_holdout(self) -> bool:
        return len(self.dataset.holdout_indices) > 0

    def init_params(self, rng: np.random.Generator, scheme: str = "default") -> np.ndarray:
        if scheme not in ("default", "fan-in"):
            raise ValueError(f"unknown init scheme {scheme!r}")
        chunks = []
        for fan_in, fan_out in self._shapes:
            bound = 1.0 / math.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        return np.concatenate(chunks)

    def _unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers = []
        for (fan_in, fan_out), off in zip(self._shapes, self._offsets):
            w = params[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
            b = params[off + fan_in * fan_out : off + fan_in * fan_out + fan_out]
            layers.append((w, b))
        return layers

    def _forward(self, params: np.ndarray, x: np.ndarray):
        """Returns (output, per-layer caches) for backprop."""
        layers = self._unpack(params)
        caches = []
        a = x
        for li, (w, b) in enumerate(layers):
            z = a @ w + b
            if li < len(layers) - 1:
                a_next = self._act(z)
                caches.append((a, z, a_next))
                a = a_next
            else:
                caches.append((a, z, z))
                a = z
        return a, caches

    def _per_sample_losses(self, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out, _ = self._forward(params, x)
        if self.dataset.classification:
            shift = out.max(axis=1, keepdims=True)
            lse = shift[:, 0] + np.log(np.exp(out - shift).sum(axis=1))
            return lse - out[np.arange(len(y)), y]
        return 0.5 * ((out - y) ** 2).sum(axis=1)

    def fitness(self, params: np.ndarray, dataset: str = "train") -> float:
        x, y = self.dataset.split(dataset)
        return float(np.mean(self._per_sample_losses(params, x, y)))

    def accuracy(self, params: np.ndarray, dataset: str = "train") -> float:
        if not self.dataset.classification:
            raise ValueError("accuracy is only defined for classification")
        x, y = self.dataset.split(dataset)
        out, _ = self._forward(params, x)
        return float(np.mean(out.argmax(axis=1) == y))

    def minibatch_gradient(self, params: np.ndarray, batch_indices: np.ndarray) -> GradientSample:
        rows = self.dataset.train_indices[np.asarray(batch_indices, dtype=np.intp)]
        x = self.dataset.inputs[rows]
        y = self.dataset.targets[rows]
        out, caches = self._forward(params, x)
        batch = len(rows)

        if self.dataset.classification:
            shift = out.max(axis=1, keepdims=True)
            expo = np.exp(out - shift)
            probs = expo / expo.sum(axis=1, keepdims=True)
            lse = shift[:, 0] + np.log(expo.sum(axis=1))
            losses = lse - out[np.arange(batch), y]
            delta = probs
            delta[np.arange(batch), y] -= 1.0
            delta /= batch
        else:
            losses = 0.5 * ((out - y) ** 2).sum(axis=1)
            delta = (out - y) / batch

        layers = self._unpack(params)
        grad = np.empty(self._dim)
        grad_layers = self._unpack(grad)  # views into grad
        for li in range(len(layers) - 1, -1, -1):
            a_prev, z, _ = caches[li]
            gw, gb = grad_layers[li]
            gw[...] = a_prev.T @ delta
            gb[...] = delta.sum(axis=0)
            if li > 0:
                w, _ = layers[li]
                _, z_prev, a_prev_act = caches[li - 1]
                delta = (delta @ w.T) * self._act_grad(z_prev, a_prev_act)
        return GradientSample(grad=grad, batch_loss=float(np.mean(losses)))


def quadratic_problem(dim: int, condition_number: float = 1.0) -> QuadraticProblem:
    return QuadraticProblem(dim, condition_number)


def mlp_problem(dataset: Dataset, layer_sizes, activation: str = "tanh") -> MlpProblem:
    return MlpProblem(dataset, layer_sizes, activation)


def _split_indices(n: int, train_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    if n < 2:
        return perm, perm[:0]
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    return perm[:n_train], perm[n_train:]


def synthetic_classification(n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved arcs, balanced labels, 80/20 train/holdout split.

    Deterministic for a fixed seed. With noise=0 the classes are separable
    by a smooth curve.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    n0 = n - n // 2
    n1 = n // 2
    t0 = rng.uniform(0.0, math.pi, n0)
    t1 = rng.uniform(0.0, math.pi, n1)
    x0 = np.column_stack([np.cos(t0), np.sin(t0)])
    x1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    inputs = np.vstack([x0, x1])
    inputs = inputs + noise * rng.standard_normal(inputs.shape)
    targets = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    train_idx, holdout_idx = _split_indices(n, 0.8, rng)
    return Dataset(inputs, targets, train_idx, holdout_idx)


def _parse_cell(path, row_num: int, col_num: int, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CsvError(
            f"{path}: row {row_num}, column {col_num}: non-numeric cell {cell!r}"
        ) from None


def csv_dataset(path, target_columns, split_fraction: float = 0.8, seed: int = 0) -> Dataset:
    """Load a numeric CSV into a seeded, shuffled train/holdout split.

    target_columns are 0-based column indices; the remaining columns
    become the inputs. A header row is skipped automatically when its
    first row contains any non-numeric cell. A single target column whose
    values are all non-negative integers is treated as class labels.
    """
    if not 0 < split_fraction <= 1:
        raise ValueError("split_fraction must be in (0, 1]")
    targets_cols = sorted(set(int(c) for c in target_columns))
    if not targets_cols:
        raise ValueError("target_columns must not be empty")

    with open(path, newline="", encoding="utf-8") as fh:
        raw_rows = [row for row in csv.reader(fh) if row]
    if not raw_rows:
        raise CsvError(f"{path}: empty file")

    start = 0
    header_numeric = True
    for cell in raw_rows[0]:
        try:
            float(cell)
        except ValueError:
            header_numeric = False
            break
    if not header_numeric:
        start = 1
    if start >= len(raw_rows):
        raise CsvError(f"{path}: no data rows")

    width = len(raw_rows[start])
    data = np.empty((len(raw_rows) - start, width))
    for r, row in enumerate(raw_rows[start:], start=start):
        if len(row) != width:
            raise CsvError(
                f"{path}: row {r + 1}: expected {width} columns, got {len(row)}"
            )
        for c, cell in enumerate(row):
            data[r - start, c] = _parse_cell(path, r + 1, c + 1, cell)

    if max(targets_cols) >= width:
        raise ValueError(f"target column {max(targets_cols)} out of range (width {width})")
    input_cols = [c for c in range(width) if c not in targets_cols]
    if not input_cols:
        raise ValueError("no input columns left after removing targets")
    inputs = data[:, input_cols]
    targets = data[:, targets_cols]

    if len(targets_cols) == 1:
        col = targets[:, 0]
        if np.all(col == np.floor(col)) and col.min() >= 0:
            targets = col.astype(np.int64)

    rng = np.random.default_rng(seed)
    train_idx, holdout_idx = _split_indices(len(data), split_fraction, rng)
    return Dataset(inputs, targets, train_idx, holdout_idx)


def save_csv(path, inputs: np.ndarray, targets: np.ndarray, header: list[str] | None = None) -> None:
    """Write inputs then target columns; floats keep full round-trip precision."""
    targets_2d = targets.reshape(len(targets), -1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for xrow, trow in zip(inputs, targets_2d):
            writer.writerow([repr(float(v)) for v in xrow] + [repr(float(v)) for v in trow])


def perturb_params(base: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian perturbation of an existing parameter vector."""
    base = as_params(base)
    return base + std * rng.standard_normal(base.size)
