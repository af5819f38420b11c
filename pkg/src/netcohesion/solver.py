r"""Closed-form estimation of node effects and kernel weights.

The fitted function at training node ``i`` is ``alpha_i + sum_j w_j K(x_i, x_j)``
and the estimates minimize

.. math::

    \|Y - \alpha - K w\|^2 + \lambda\,\alpha^\top L \alpha + \psi\,R(w),

where ``R(w) = w'w`` (``euclidean``, the default) or ``w'Kw`` (``rkhs``).
Setting the gradient to zero gives the 2n x 2n symmetric system

.. math::

    (\tilde K^\top \tilde K + \psi N + \lambda M)
    \begin{bmatrix}\alpha \\ w\end{bmatrix} = \tilde K^\top Y,
    \qquad \tilde K = [I_n, K],

with ``M = blockdiag(L, 0)`` and ``N = blockdiag(0, I or K)``. The system is
factored with a Bunch-Kaufman LDL' decomposition, which is stable even when
``K`` is indefinite (tangent kernel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

from .errors import (
    DegenerateCriterionError,
    InputError,
    RetryExhaustedError,
    SingularSystemError,
    UnreachableNodesError,
)
from .graph import Graph, Laplacian, harmonic_extension, partition_laplacian, unreachable_test_nodes
from .kernels import KernelSpec

__all__ = [
    "FitConfig",
    "DesignSystem",
    "CohesionFit",
    "PENALTY_FORMS",
    "MAX_CONDITION",
    "assemble_system",
    "objective",
    "objective_gradient",
    "fit",
    "fit_cohesion_only",
    "hat_matrix",
    "gcv_score",
    "default_grid",
    "select_hyperparameters",
    "fit_to_dict",
    "fit_from_dict",
]

PENALTY_FORMS = ("euclidean", "rkhs")

#: Systems whose estimated 1-norm condition number exceeds this are rejected.
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FitConfig:
    """Penalty strengths.

    ``lam`` scales the cohesion penalty on node effects, ``psi`` the penalty
    on kernel weights. ``lam = psi = 0`` is refused unless
    ``allow_interpolation`` is set.
    """

    lam: float = 1.0
    psi: float = 1.0
    weight_penalty_form: str = "euclidean"
    allow_interpolation: bool = False

    def __post_init__(self):
        if not (self.lam >= 0 and self.psi >= 0):
            raise InputError(f"lam and psi must be nonnegative, got {self.lam}, {self.psi}")
        if not (math.isfinite(self.lam) and math.isfinite(self.psi)):
            raise InputError("lam and psi must be finite")
        if self.weight_penalty_form not in PENALTY_FORMS:
            raise InputError(
                f"weight_penalty_form must be one of {PENALTY_FORMS}, "
                f"got {self.weight_penalty_form!r}"
            )
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "psi", float(self.psi))

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "psi": self.psi,
            "weight_penalty_form": self.weight_penalty_form,
            "allow_interpolation": self.allow_interpolation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        return cls(
            lam=d.get("lambda", d.get("lam", 1.0)),
            psi=d.get("psi", 1.0),
            weight_penalty_form=d.get("weight_penalty_form", "euclidean"),
            allow_interpolation=bool(d.get("allow_interpolation", False)),
        )


@dataclass(frozen=True)
class DesignSystem:
    K_tilde: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    N: np.ndarray = field(repr=False)
    config: FitConfig

    @property
    def n(self) -> int:
        return self.K_tilde.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """``K~'K~ + psi N + lam M``."""
        Kt = self.K_tilde
        S = Kt.T @ Kt + self.config.psi * self.N + self.config.lam * self.M
        return 0.5 * (S + S.T)

    def rhs(self, Y) -> np.ndarray:
        return self.K_tilde.T @ Y


@dataclass(frozen=True)
class CohesionFit:
    alpha: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    config: FitConfig
    objective_value: float
    kernel: KernelSpec = None
    X_train: np.ndarray = field(default=None, repr=False)
    graph: Graph = field(default=None, repr=False)
    condition: float = None
    min_norm: bool = False

    @property
    def n(self) -> int:
        return self.alpha.size


def _as_matrix(L) -> np.ndarray:
    return np.asarray(L.matrix if isinstance(L, Laplacian) else L, dtype=float)


def _check_inputs(K, L, Y=None):
    K = np.asarray(K, dtype=float)
    Lm = _as_matrix(L)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"Gram matrix must be square, got shape {K.shape}")
    if Lm.shape != K.shape:
        raise InputError(f"Laplacian shape {Lm.shape} does not match Gram shape {K.shape}")
    if Y is None:
        return K, Lm
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (K.shape[0],):
        raise InputError(f"response has shape {Y.shape}, expected ({K.shape[0]},)")
    return K, Lm, Y


def assemble_system(K, L, cfg: FitConfig) -> DesignSystem:
    K, Lm = _check_inputs(K, L)
    n = K.shape[0]
    Z = np.zeros((n, n))
    K_tilde = np.hstack([np.eye(n), K])
    M = np.block([[Lm, Z], [Z, Z]])
    lower = K if cfg.weight_penalty_form == "rkhs" else np.eye(n)
    N = np.block([[Z, Z], [Z, lower]])
    return DesignSystem(K_tilde, M, N, cfg)


def _weight_penalty(K, w, form):
    return float(w @ K @ w) if form == "rkhs" else float(w @ w)


def objective(Y, K, L, cfg: FitConfig, alpha, w) -> float:
    """Penalized residual sum of squares at ``(alpha, w)``."""
    K, Lm, Y = _check_inputs(K, L, Y)
    r = Y - alpha - K @ w
    return float(r @ r + cfg.lam * (alpha @ Lm @ alpha)
                 + cfg.psi * _weight_penalty(K, w, cfg.weight_penalty_form))


def objective_gradient(Y, K, L, cfg: FitConfig, alpha, w):
    """Gradient of :func:`objective` with respect to ``alpha`` and ``w``."""
    K, Lm, Y = _check_inputs(K, L, Y)
    r = Y - alpha - K @ w
    g_alpha = -2.0 * r + 2.0 * cfg.lam * (Lm @ alpha)
    pen = K @ w if cfg.weight_penalty_form == "rkhs" else w
    g_w = -2.0 * (K.T @ r) + 2.0 * cfg.psi * pen
    return g_alpha, g_w


def _min_norm_solve(S, B):
    # eigenvalues below 1/MAX_CONDITION of the largest are treated as null
    return la.pinvh(S, rtol=1.0 / MAX_CONDITION) @ B


def _solve(S, B, *, min_norm=False, allow_singular=False):
    """Solve ``S X = B`` for symmetric ``S``.

    Returns ``(X, condition, used_min_norm)``. The 1-norm condition number is
    estimated from the LDL' factors.
    """
    if min_norm:
        return _min_norm_solve(S, B), math.inf, True
    ldu, ipiv, info = lapack.dsytrf(S, lower=1)
    if info < 0:
        raise RuntimeError(f"dsytrf: illegal argument {-info}")
    if info > 0:
        rcond = 0.0
    else:
        anorm = np.abs(S).sum(axis=0).max()
        rcond, info = lapack.dsycon(ldu, ipiv, anorm, lower=1)
    condition = math.inf if rcond == 0 else 1.0 / rcond
    if condition > MAX_CONDITION:
        if allow_singular:
            return _min_norm_solve(S, B), condition, True
        raise SingularSystemError(
            f"estimating equations are singular or ill-conditioned "
            f"(condition estimate {condition:.3g} > {MAX_CONDITION:.0e}); "
            "use lam > 0 and psi > 0, or a better-conditioned kernel",
            condition=condition,
        )
    X, info = lapack.dsytrs(ldu, ipiv, B.reshape(S.shape[0], -1), lower=1)
    return X.reshape(B.shape), condition, False


def _guard(cfg: FitConfig):
    if cfg.lam == 0 and cfg.psi == 0 and not cfg.allow_interpolation:
        raise SingularSystemError(
            "lam = psi = 0 gives a singular system; pass allow_interpolation=True "
            "for the minimum-norm interpolant, or use lam, psi > 0",
            condition=math.inf,
        )


def _solve_system(system: DesignSystem, B):
    cfg = system.config
    _guard(cfg)
    # with psi = 0 a constant shift in alpha trades off against K w, so the
    # system is rank-deficient by construction; take the minimum-norm solution
    return _solve(system.matrix, B, min_norm=cfg.psi == 0,
                  allow_singular=cfg.allow_interpolation)


def fit(Y, K, L, cfg: FitConfig = FitConfig(), *, kernel: KernelSpec = None,
        X_train=None, graph: Graph = None) -> CohesionFit:
    """Estimate node effects ``alpha`` and kernel weights ``w``.

    Parameters
    ----------
    Y : (n,) array
        Responses.
    K : (n, n) array
        Gram matrix of the training inputs.
    L : Laplacian or (n, n) array
        Laplacian of the graph linking the training nodes.
    cfg : FitConfig
    kernel, X_train, graph : optional
        Retained on the returned fit so it can predict on new inputs.

    Raises
    ------
    SingularSystemError
        If the system condition estimate exceeds :data:`MAX_CONDITION`.
    """
    K, Lm, Y = _check_inputs(K, L, Y)
    n = Y.size
    system = assemble_system(K, Lm, cfg)
    z, condition, used_min_norm = _solve_system(system, system.rhs(Y))
    alpha, w = z[:n].copy(), z[n:].copy()
    if graph is None and isinstance(L, Laplacian):
        graph = L.graph
    if X_train is not None:
        X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    return CohesionFit(
        alpha=alpha,
        w=w,
        config=cfg,
        objective_value=objective(Y, K, Lm, cfg, alpha, w),
        kernel=kernel,
        X_train=X_train,
        graph=graph,
        condition=condition,
        min_norm=used_min_norm,
    )


def fit_cohesion_only(Y, K, L, lam: float, **kwargs) -> CohesionFit:
    """Fit with the cohesion penalty alone (no penalty on ``w``).

    This system is always rank-deficient, so the minimum-norm minimizer is
    returned and the fit is flagged ``min_norm``.
    """
    return fit(Y, K, L, FitConfig(lam=lam, psi=0.0), **kwargs)


def hat_matrix(K, L, cfg: FitConfig) -> np.ndarray:
    """Smoother matrix ``H`` with fitted values ``H @ Y``."""
    K, Lm = _check_inputs(K, L)
    n = K.shape[0]
    system = assemble_system(K, Lm, cfg)
    Z, _, _ = _solve_system(system, system.K_tilde.T.copy())
    H = Z[:n] + K @ Z[n:]
    return 0.5 * (H + H.T)


def gcv_score(Y, K, L, cfg: FitConfig) -> float:
    """Generalized cross-validation ``n ||(I - H) Y||^2 / (n - tr H)^2``."""
    K, Lm, Y = _check_inputs(K, L, Y)
    n = Y.size
    H = hat_matrix(K, Lm, cfg)
    dof = n - np.trace(H)
    if dof <= 1e-8 * n:
        raise DegenerateCriterionError(
            f"GCV undefined: trace(H) = {np.trace(H):.12g} is not below n = {n}"
        )
    r = Y - H @ Y
    return float(n * (r @ r) / dof**2)


def default_grid(lams=None, psis=None, form: str = "euclidean") -> list:
    """Cartesian grid of configs; default 7 log-spaced values from 1e-3 to 1e2."""
    base = np.logspace(-3, 2, 7)
    lams = base if lams is None else lams
    psis = base if psis is None else psis
    return [FitConfig(lam=l, psi=p, weight_penalty_form=form) for l in lams for p in psis]


def _induced_laplacian(Lm, idx):
    A = -Lm[np.ix_(idx, idx)]
    np.fill_diagonal(A, 0.0)
    return np.diag(A.sum(axis=1)) - A


def kfold_assignment(L, k: int, rng, retries: int = 100):
    """Node folds such that every held-out node can reach its fold's train nodes."""
    Lm = _as_matrix(L)
    n = Lm.shape[0]
    if not 2 <= k <= n:
        raise InputError(f"kfold needs 2 <= k <= n, got k={k}, n={n}")
    for _ in range(retries):
        folds = np.array_split(rng.permutation(n), k)
        ok = True
        for test in folds:
            train = np.setdiff1d(np.arange(n), test)
            if unreachable_test_nodes(partition_laplacian(Lm, train, np.sort(test))):
                ok = False
                break
        if ok:
            return [np.sort(f) for f in folds]
    raise RetryExhaustedError(f"no valid {k}-fold split found in {retries} attempts")


def _kfold_score(Y, K, Lm, cfg, folds):
    n = Y.size
    sse = 0.0
    for test in folds:
        train = np.setdiff1d(np.arange(n), test)
        f = fit(Y[train], K[np.ix_(train, train)], _induced_laplacian(Lm, train), cfg)
        part = partition_laplacian(Lm, train, test)
        pred = harmonic_extension(part, f.alpha) + K[np.ix_(test, train)] @ f.w
        sse += float(np.sum((Y[test] - pred) ** 2))
    return sse / n


def _parse_method(method, k):
    if isinstance(method, str) and method.startswith("kfold"):
        _, _, tail = method.partition(":")
        return "kfold", int(tail) if tail else k
    if method != "gcv":
        raise InputError(f"unknown selection method {method!r}")
    return "gcv", k


def select_hyperparameters(Y, K, L, grid: Sequence[FitConfig], method: str = "gcv",
                           k: int = 5, seed=0, retries: int = 100):
    """Return the grid config minimizing GCV or k-fold prediction error.

    ``method`` is ``"gcv"``, ``"kfold"`` (with ``k``) or ``"kfold:K"``.
    Ties go to the larger ``lam``, then the larger ``psi``. Grid points whose
    system is singular are skipped.
    """
    grid = list(grid)
    if not grid:
        raise InputError("empty hyperparameter grid")
    K, Lm, Y = _check_inputs(K, L, Y)
    method, k = _parse_method(method, k)
    if method == "kfold":
        folds = kfold_assignment(Lm, k, np.random.default_rng(seed), retries)
    scores = []
    for cfg in grid:
        try:
            if method == "gcv":
                s = gcv_score(Y, K, Lm, cfg)
            else:
                s = _kfold_score(Y, K, Lm, cfg, folds)
        except (SingularSystemError, DegenerateCriterionError, UnreachableNodesError):
            s = math.inf
        scores.append(s)
    best = min(scores)
    if not math.isfinite(best):
        raise SingularSystemError("every grid point gave a singular system", condition=math.inf)
    tied = [c for c, s in zip(grid, scores) if s <= best + 1e-12 * abs(best)]
    return max(tied, key=lambda c: (c.lam, c.psi))


# Serialization -----------------------------------------------------------------

def fit_to_dict(f: CohesionFit, embed: bool = True) -> dict:
    """JSON-ready record of a fit; training features and edges embedded on request."""
    p = None if f.X_train is None else int(f.X_train.shape[1])
    d = {
        "machine": "cohesion",
        "n": int(f.n),
        "p": p,
        "alpha": f.alpha.tolist(),
        "w": f.w.tolist(),
        "kernel": None if f.kernel is None else f.kernel.to_dict(),
        "config": f.config.to_dict(),
        "objective_value": f.objective_value,
        "graph_edge_count": None if f.graph is None else f.graph.n_edges,
        "condition": None if f.condition is None or not math.isfinite(f.condition)
        else f.condition,
        "min_norm": f.min_norm,
    }
    if embed:
        d["X_train"] = None if f.X_train is None else f.X_train.tolist()
        d["edges"] = None if f.graph is None else [list(e) for e in f.graph.edges]
    return d


def fit_from_dict(d: dict, X_train=None, graph: Graph = None) -> CohesionFit:
    if d.get("machine", "cohesion") != "cohesion":
        raise InputError(f"not a cohesion fit record (machine={d.get('machine')!r})")
    n = int(d["n"])
    if X_train is None and d.get("X_train") is not None:
        X_train = np.asarray(d["X_train"], dtype=float)
    if graph is None and d.get("edges") is not None:
        graph = Graph(n, tuple(tuple(e) for e in d["edges"]))
    cond = d.get("condition")
    return CohesionFit(
        alpha=np.asarray(d["alpha"], dtype=float),
        w=np.asarray(d["w"], dtype=float),
        config=FitConfig.from_dict(d["config"]),
        objective_value=float(d["objective_value"]),
        kernel=None if d.get("kernel") is None else KernelSpec.from_dict(d["kernel"]),
        X_train=X_train,
        graph=graph,
        condition=math.inf if cond is None else float(cond),
        min_norm=bool(d.get("min_norm", False)),
    )
