"""Kernel families and Gram matrices.

Supported families::

    rbf         exp(-gamma * ||x - z||^2)
    laplace     exp(-gamma * ||x - z||)        (Euclidean distance)
    cosine      x'z / (||x|| ||z||)
    polynomial  (x'z + offset) ** degree
    tangent     tanh(gamma * x'z + offset)     (not PSD in general)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

__all__ = ["KernelSpec", "KERNEL_FAMILIES", "kernel_eval", "gram", "cross_gram", "default_gamma"]

KERNEL_FAMILIES = ("rbf", "laplace", "cosine", "polynomial", "tangent")

_ALIASES = {"poly": "polynomial", "lpc": "laplace", "cos": "cosine", "nn": "tangent",
            "tanh": "tangent", "gaussian": "rbf"}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "rbf"
    gamma: float = 1.0
    degree: int = 2
    offset: float = None

    def __post_init__(self):
        fam = _ALIASES.get(self.family.lower(), self.family.lower())
        if fam not in KERNEL_FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if fam in ("rbf", "laplace", "tangent") and not self.gamma > 0:
            raise InputError(f"gamma must be positive for {fam}, got {self.gamma}")
        if int(self.degree) != self.degree or self.degree < 1:
            raise InputError(f"degree must be a positive integer, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        if self.offset is None:
            object.__setattr__(self, "offset", 1.0 if fam == "polynomial" else 0.0)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "offset", float(self.offset))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**{k: d[k] for k in ("family", "gamma", "degree", "offset") if k in d})


def default_gamma(X) -> float:
    """``1 / (p * var(X))``, with the variance pooled over all entries."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def _check_pair(X, Z):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise InputError(f"feature dimensions differ: {X.shape[1]} vs {Z.shape[1]}")
    return X, Z


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise InputError("cosine kernel is undefined for zero feature vectors")
    return X / norms[:, None]


def cross_gram(spec: KernelSpec, X_new, X_train) -> np.ndarray:
    """Matrix of ``k(x_new_i, x_train_j)``, shape (m, n)."""
    X, Z = _check_pair(X_new, X_train)
    f = spec.family
    if f == "rbf":
        return np.exp(-spec.gamma * cdist(X, Z, "sqeuclidean"))
    if f == "laplace":
        return np.exp(-spec.gamma * cdist(X, Z, "euclidean"))
    if f == "cosine":
        return np.clip(_unit_rows(X) @ _unit_rows(Z).T, -1.0, 1.0)
    if f == "polynomial":
        return (X @ Z.T + spec.offset) ** spec.degree
    return np.tanh(spec.gamma * (X @ Z.T) + spec.offset)


def gram(spec: KernelSpec, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = cross_gram(spec, X, X)
    # exact symmetry; distance/product rounding can differ in the last bit
    K = 0.5 * (K + K.T)
    if spec.family in ("rbf", "laplace", "cosine"):
        np.fill_diagonal(K, 1.0)
    return K


def kernel_eval(spec: KernelSpec, x, z) -> float:
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise InputError(f"feature dimensions differ: {x.size} vs {z.size}")
    return float(cross_gram(spec, x[None, :], z[None, :])[0, 0])
