"""Reference machines: OLS, linear regression with network cohesion, kernel ridge."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DegenerateCriterionError, InputError, SingularSystemError
from .graph import LaplacianPartition, harmonic_extension
from .kernels import KernelSpec, cross_gram
from .solver import _as_matrix, _solve

__all__ = [
    "LinearCohesionFit",
    "KernelRidgeFit",
    "fit_ols",
    "predict_ols",
    "fit_linear_cohesion",
    "linear_cohesion_hat",
    "predict_linear_cohesion",
    "fit_kernel_ridge",
    "kernel_ridge_hat",
    "predict_kernel_ridge",
    "gcv_from_hat",
]


def _design(X, Y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y is not None:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (X.shape[0],):
            raise InputError(f"response has shape {Y.shape}, expected ({X.shape[0]},)")
    return X, Y


def fit_ols(Y, X) -> np.ndarray:
    """Least-squares coefficients ``(intercept, slopes...)``."""
    X, Y = _design(X, Y)
    n, p = X.shape
    if n <= p + 1:
        raise InputError(f"need n > p + 1 observations, got n={n}, p={p}")
    D = np.hstack([np.ones((n, 1)), X])
    coef, _, rank, _ = la.lstsq(D, Y)
    if rank < p + 1:
        raise SingularSystemError(
            f"design matrix (with intercept) has rank {rank} < {p + 1}", condition=math.inf
        )
    return coef


def predict_ols(coef, X) -> np.ndarray:
    X, _ = _design(X)
    return coef[0] + X @ coef[1:]


@dataclass(frozen=True)
class LinearCohesionFit:
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    lam: float
    condition: float = None
    min_norm: bool = False

    def to_dict(self) -> dict:
        return {"machine": "linear-cohesion", "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(), "lambda": self.lam, "min_norm": self.min_norm}


def _linear_system(X, Lm, lam):
    n = X.shape[0]
    Xt = np.hstack([np.eye(n), X])
    S = Xt.T @ Xt
    S[:n, :n] += lam * Lm
    return Xt, 0.5 * (S + S.T)


def fit_linear_cohesion(Y, X, L, lam: float, allow_interpolation: bool = False) -> LinearCohesionFit:
    """Per-node intercepts under the cohesion penalty plus a linear term in ``X``.

    Solves ``([I, X]'[I, X] + lam blockdiag(L, 0)) (alpha, beta) = [I, X]' Y``.
    A singular system (always the case at ``lam = 0``) is refused unless
    ``allow_interpolation`` is set, in which case the minimum-norm solution
    is returned.
    """
    X, Y = _design(X, Y)
    Lm = _as_matrix(L)
    n = X.shape[0]
    if Lm.shape != (n, n):
        raise InputError(f"Laplacian shape {Lm.shape} does not match n={n}")
    if lam < 0:
        raise InputError("lam must be nonnegative")
    Xt, S = _linear_system(X, Lm, lam)
    z, cond, mn = _solve(S, Xt.T @ Y, min_norm=lam == 0 and allow_interpolation,
                         allow_singular=allow_interpolation)
    return LinearCohesionFit(z[:n].copy(), z[n:].copy(), float(lam), cond, mn)


def linear_cohesion_hat(X, L, lam: float) -> np.ndarray:
    X, _ = _design(X)
    Xt, S = _linear_system(X, _as_matrix(L), lam)
    Z, _, _ = _solve(S, Xt.T.copy())
    H = Xt @ Z
    return 0.5 * (H + H.T)


def predict_linear_cohesion(f: LinearCohesionFit, X_new, partition: LaplacianPartition) -> np.ndarray:
    X_new, _ = _design(X_new)
    return harmonic_extension(partition, f.alpha) + X_new @ f.beta


@dataclass(frozen=True)
class KernelRidgeFit:
    """Plain kernel ridge fit; ``intercept`` is the training mean when centered."""

    w: np.ndarray = field(repr=False)
    lam: float
    kernel: KernelSpec = None
    X_train: np.ndarray = field(default=None, repr=False)
    intercept: float = 0.0

    def to_dict(self) -> dict:
        return {"machine": "kernel-ridge", "w": self.w.tolist(), "lambda": self.lam,
                "intercept": self.intercept,
                "kernel": None if self.kernel is None else self.kernel.to_dict()}


def fit_kernel_ridge(Y, K, lam: float, *, kernel: KernelSpec = None, X_train=None,
                     center: bool = True) -> KernelRidgeFit:
    """Solve ``(K + n lam I) w = Y - c`` where ``c`` is mean(Y) if centered, else 0."""
    K = np.asarray(K, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    if K.shape != (n, n):
        raise InputError(f"Gram shape {K.shape} does not match n={n}")
    if not lam > 0:
        raise InputError(f"kernel ridge needs lam > 0, got {lam}")
    c = float(Y.mean()) if center else 0.0
    A = K + n * lam * np.eye(n)
    w = la.solve(0.5 * (A + A.T), Y - c, assume_a="sym")
    if X_train is not None:
        X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    return KernelRidgeFit(w, float(lam), kernel, X_train, c)


def kernel_ridge_hat(K, lam: float, center: bool = True) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    A = K + n * lam * np.eye(n)
    H = K @ la.solve(0.5 * (A + A.T), np.eye(n), assume_a="sym")
    if center:
        J = np.full((n, n), 1.0 / n)
        H = J + H @ (np.eye(n) - J)
    return H


def predict_kernel_ridge(f: KernelRidgeFit, X_new) -> np.ndarray:
    if f.kernel is None or f.X_train is None:
        raise InputError("kernel ridge fit has no retained kernel/inputs")
    return f.intercept + cross_gram(f.kernel, X_new, f.X_train) @ f.w


def gcv_from_hat(Y, H) -> float:
    """GCV criterion for any linear smoother ``H``."""
    Y = np.asarray(Y, dtype=float)
    n = Y.size
    dof = n - np.trace(H)
    if dof <= 1e-8 * n:
        raise DegenerateCriterionError(f"GCV undefined: trace(H) = {np.trace(H):.12g}")
    r = Y - H @ Y
    return float(n * (r @ r) / dof**2)
