"""In-sample fitted values and out-of-sample prediction for cohesion fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphDriftError, InputError
from .graph import Graph, build_laplacian, harmonic_extension, partition_laplacian
from .kernels import cross_gram, gram
from .solver import CohesionFit

__all__ = ["PredictionInput", "fitted_values", "predict", "mse"]


@dataclass(frozen=True)
class PredictionInput:
    """New rows plus the graph over training and new nodes.

    ``train_index[k]`` is the full-graph node of training row ``k`` and
    ``test_index[k]`` the node of ``X_new[k]``. When ``test_index`` is
    omitted it defaults to the remaining nodes in ascending order.
    """

    X_new: np.ndarray = field(repr=False)
    full_graph: Graph
    train_index: tuple
    test_index: tuple = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X_new, dtype=float))
        object.__setattr__(self, "X_new", X)
        train = tuple(int(i) for i in self.train_index)
        test = self.test_index
        if test is None:
            taken = set(train)
            test = tuple(i for i in range(self.full_graph.n) if i not in taken)
        test = tuple(int(i) for i in test)
        object.__setattr__(self, "train_index", train)
        object.__setattr__(self, "test_index", test)
        if len(train) + len(test) != self.full_graph.n:
            raise InputError(
                f"{len(train)} train + {len(test)} test nodes != graph size {self.full_graph.n}"
            )
        if X.shape[0] != len(test):
            raise InputError(f"X_new has {X.shape[0]} rows for {len(test)} test nodes")


def fitted_values(f: CohesionFit, K=None) -> np.ndarray:
    """``alpha + K w`` on the training nodes.

    ``K`` defaults to the Gram matrix rebuilt from the retained kernel and
    training inputs.
    """
    if K is None:
        if f.kernel is None or f.X_train is None:
            raise InputError("fit has no retained kernel/inputs; pass the Gram matrix")
        K = gram(f.kernel, f.X_train)
    return f.alpha + np.asarray(K, dtype=float) @ f.w


def _check_drift(f: CohesionFit, inp: PredictionInput):
    if f.graph is None:
        raise GraphDriftError("fit carries no training graph to compare against")
    seen = inp.full_graph.subgraph(inp.train_index)
    if seen.edges != f.graph.edges:
        added = sorted(set(seen.edges) - set(f.graph.edges))
        dropped = sorted(set(f.graph.edges) - set(seen.edges))
        raise GraphDriftError(
            "edges among training nodes differ from the fit-time graph "
            f"({len(added)} added, {len(dropped)} removed); "
            "set allow_graph_drift to proceed anyway"
        )


def predict(f: CohesionFit, inp: PredictionInput, allow_graph_drift: bool = False) -> np.ndarray:
    """Harmonic-extended node effects plus the kernel expansion at ``X_new``."""
    if f.kernel is None or f.X_train is None:
        raise InputError("fit has no retained kernel/inputs; cannot predict")
    if len(inp.train_index) != f.n:
        raise InputError(f"{len(inp.train_index)} training nodes given, fit has {f.n}")
    if inp.X_new.shape[1] != f.X_train.shape[1]:
        raise InputError(
            f"X_new has {inp.X_new.shape[1]} features, training data has {f.X_train.shape[1]}"
        )
    if not allow_graph_drift:
        _check_drift(f, inp)
    part = partition_laplacian(build_laplacian(inp.full_graph), inp.train_index, inp.test_index)
    alpha_t = harmonic_extension(part, f.alpha)
    return alpha_t + cross_gram(f.kernel, inp.X_new, f.X_train) @ f.w


def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise InputError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise InputError("mse of empty vectors")
    return float(np.mean((y_true - y_pred) ** 2))
