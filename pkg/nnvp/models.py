from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from nnvp.core.exceptions import DataFormatError


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Example:
    attributes: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labelled examples held column-wise: X is (n, d), y is (n,) with class
    indices in [0, c). Arrays are read-only, so instances can be shared freely
    between threads and worker processes.
    """
    X: np.ndarray
    y: np.ndarray
    class_names: Tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "X", _frozen(X, np.float64))
        object.__setattr__(self, "y", _frozen(y, np.int64))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

        if X.ndim != 2 or X.shape[1] < 1:
            raise DataFormatError("attribute matrix must be 2-D with at least one column")
        if X.shape[0] != y.shape[0]:
            raise DataFormatError(f"{X.shape[0]} attribute rows but {y.shape[0]} labels")
        if len(self.class_names) < 2:
            raise DataFormatError("at least two classes are required")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise DataFormatError(f"labels must lie in [0, {len(self.class_names)})")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def num_attributes(self) -> int:
        return self.X.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def examples(self) -> List[Example]:
        return [Example(attributes=x, label=int(t)) for x, t in zip(self.X, self.y)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    def replace(self, X: np.ndarray | None = None, y: np.ndarray | None = None) -> "Dataset":
        return Dataset(
            X=self.X if X is None else X,
            y=self.y if y is None else y,
            class_names=self.class_names,
        )


@dataclass(frozen=True, eq=False)
class NormalizationStats:
    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means, np.float64))
        object.__setattr__(self, "std_devs", _frozen(self.std_devs, np.float64))
        if np.any(self.std_devs <= 0):
            raise ValueError("normalization std_devs must be positive")

    @property
    def num_attributes(self) -> int:
        return self.means.shape[0]


@dataclass(eq=False)
class MLPModel:
    """
    Single hidden layer network.

    w1: (hidden, d) input-to-hidden weights, b1: (hidden,)
    w2: (c, hidden) hidden-to-output weights, b2: (c,)
    """
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def num_inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def num_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.w2.shape[0]

    @property
    def num_weights(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_vector(self, theta: np.ndarray) -> "MLPModel":
        """Model of the same shape whose parameters are read from a flat vector."""
        h, d, c = self.num_hidden, self.num_inputs, self.num_outputs
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.num_weights,):
            raise ValueError(f"expected {self.num_weights} parameters, got {theta.shape}")
        i = 0
        w1 = theta[i:i + h * d].reshape(h, d); i += h * d
        b1 = theta[i:i + h]; i += h
        w2 = theta[i:i + c * h].reshape(c, h); i += c * h
        b2 = theta[i:i + c]
        return MLPModel(w1=w1.copy(), b1=b1.copy(), w2=w2.copy(), b2=b2.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_vector())))


@dataclass(frozen=True, eq=False)
class MultiProbability:
    """
    c x c matrix; row k is the label distribution of the new example's
    category when the new example is assumed to carry label k.
    """
    matrix: np.ndarray
    category_sizes: Tuple[int, ...] = field(default=())
    category_keys: Tuple[str, ...] = field(default=())  # new example's category per candidate label

    def __post_init__(self):
        P = _frozen(self.matrix, np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError(f"multiprobability must be a square matrix with c >= 2, got {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("multiprobability entries must lie in [0, 1]")
        if not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every multiprobability row must sum to 1")
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "category_sizes", tuple(int(s) for s in self.category_sizes))
        object.__setattr__(self, "category_keys", tuple(str(k) for k in self.category_keys))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[np.ndarray],
        category_sizes: Sequence[int] = (),
        category_keys: Sequence[str] = (),
    ) -> "MultiProbability":
        return cls(matrix=np.vstack(rows), category_sizes=tuple(category_sizes), category_keys=tuple(category_keys))
