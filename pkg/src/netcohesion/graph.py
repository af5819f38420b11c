"""Graphs, Laplacians, and the harmonic extension of node effects.

Graphs are simple, unweighted and undirected. The Laplacian ``L = D - A`` is
the quadratic form behind the cohesion penalty; its train/test partition
drives the out-of-sample extension of node effects.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GraphError, InputError, UnreachableNodesError

__all__ = [
    "Graph",
    "Laplacian",
    "LaplacianPartition",
    "NetworkTopology",
    "NETWORK_KINDS",
    "build_laplacian",
    "cohesion_penalty",
    "partition_laplacian",
    "harmonic_extension",
    "unreachable_test_nodes",
    "components",
    "block_labels",
    "node_memberships",
    "generate_network",
    "read_edge_list",
    "write_edge_list",
]


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0 .. n-1``.

    Edges are canonicalized to ``(u, v)`` with ``u < v``, deduplicated and
    sorted, so two graphs with the same edge set compare equal.
    """

    n: int
    edges: tuple = ()

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise GraphError(f"node count must be positive, got {self.n}")
        canon = set()
        for e in self.edges:
            u, v = (int(x) for x in e)
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) has endpoint outside [0, {n})")
            canon.add((u, v) if u < v else (v, u))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @classmethod
    def from_adjacency(cls, A) -> "Graph":
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise GraphError("adjacency matrix must be square")
        if not np.array_equal(A, A.T):
            raise GraphError("adjacency matrix must be symmetric")
        if np.any(np.diag(A) != 0):
            raise GraphError("adjacency matrix has self-loops")
        u, v = np.nonzero(np.triu(A, 1))
        return cls(A.shape[0], tuple(zip(u.tolist(), v.tolist())))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        if self.edges:
            e = np.asarray(self.edges)
            A[e[:, 0], e[:, 1]] = 1.0
            A[e[:, 1], e[:, 0]] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph, relabelled so ``nodes[k]`` becomes node ``k``."""
        nodes = [int(v) for v in nodes]
        pos = {v: k for k, v in enumerate(nodes)}
        if len(pos) != len(nodes):
            raise GraphError("duplicate node in subgraph selection")
        kept = [(pos[u], pos[v]) for u, v in self.edges if u in pos and v in pos]
        return Graph(len(nodes), tuple(kept))

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph with node ``u`` renamed ``perm[u]``."""
        perm = np.asarray(perm, dtype=int)
        return Graph(self.n, tuple((perm[u], perm[v]) for u, v in self.edges))


@dataclass(frozen=True)
class Laplacian:
    """Combinatorial Laplacian ``D - A`` of :attr:`graph`."""

    matrix: np.ndarray = field(repr=False)
    graph: Graph

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LaplacianPartition:
    """Blocks of the Laplacian after ordering nodes as (train, test)."""

    L_ss: np.ndarray = field(repr=False)
    L_st: np.ndarray = field(repr=False)
    L_ts: np.ndarray = field(repr=False)
    L_tt: np.ndarray = field(repr=False)
    train_index: tuple
    test_index: tuple

    def assemble(self) -> np.ndarray:
        """Reassemble the permuted full matrix ``[[L_ss, L_st], [L_ts, L_tt]]``."""
        return np.block([[self.L_ss, self.L_st], [self.L_ts, self.L_tt]])


def _matrix(L) -> np.ndarray:
    return np.asarray(L.matrix if isinstance(L, Laplacian) else L, dtype=float)


def build_laplacian(g: Graph) -> Laplacian:
    A = g.adjacency()
    return Laplacian(np.diag(A.sum(axis=1)) - A, g)


def cohesion_penalty(L, a) -> float:
    """Quadratic form ``a' L a``, i.e. the sum of squared edge differences."""
    M = _matrix(L)
    a = np.asarray(a, dtype=float)
    if a.shape != (M.shape[0],):
        raise InputError(f"effect vector has shape {a.shape}, expected ({M.shape[0]},)")
    return float(a @ M @ a)


def partition_laplacian(L, train_index, test_index) -> LaplacianPartition:
    M = _matrix(L)
    n = M.shape[0]
    s = [int(i) for i in train_index]
    t = [int(i) for i in test_index]
    if len(set(s)) != len(s) or len(set(t)) != len(t):
        raise InputError("train/test index lists contain duplicates")
    if set(s) & set(t):
        raise InputError(f"train and test indices overlap: {sorted(set(s) & set(t))}")
    if sorted(s + t) != list(range(n)):
        missing = sorted(set(range(n)) - set(s) - set(t))
        raise InputError(f"train/test indices must cover 0..{n - 1}; missing {missing}")
    si, ti = np.asarray(s, dtype=int), np.asarray(t, dtype=int)
    return LaplacianPartition(
        L_ss=M[np.ix_(si, si)],
        L_st=M[np.ix_(si, ti)],
        L_ts=M[np.ix_(ti, si)],
        L_tt=M[np.ix_(ti, ti)],
        train_index=tuple(s),
        test_index=tuple(t),
    )


def unreachable_test_nodes(p: LaplacianPartition) -> list:
    """Test nodes lying in a component that contains no training node."""
    m = len(p.test_index)
    if m == 0:
        return []
    adj = (p.L_tt != 0) & ~np.eye(m, dtype=bool)
    _, labels = connected_components(csr_matrix(adj), directed=False)
    touches = np.zeros(labels.max() + 1, dtype=bool)
    if p.L_ts.size:
        np.logical_or.at(touches, labels, np.any(p.L_ts != 0, axis=1))
    return [p.test_index[k] for k in range(m) if not touches[labels[k]]]


def harmonic_extension(p: LaplacianPartition, alpha_s) -> np.ndarray:
    """Extend training effects to test nodes by minimizing the cohesion penalty.

    Solves ``L_tt x = -L_ts alpha_s``. ``L_tt`` is positive definite exactly
    when every test node can reach a training node, so a Cholesky
    factorization is used and unreachable nodes are reported by name.
    """
    alpha_s = np.asarray(alpha_s, dtype=float)
    if alpha_s.shape != (len(p.train_index),):
        raise InputError(
            f"alpha_s has shape {alpha_s.shape}, expected ({len(p.train_index)},)"
        )
    if not p.test_index:
        return np.zeros(0)
    bad = unreachable_test_nodes(p)
    if bad:
        raise UnreachableNodesError(bad)
    factor = la.cho_factor(p.L_tt, lower=True)
    return la.cho_solve(factor, -p.L_ts @ alpha_s)


def components(g: Graph) -> np.ndarray:
    """Connected-component label for every node."""
    _, labels = connected_components(csr_matrix(g.adjacency()), directed=False)
    return labels


# Network generation ----------------------------------------------------------

NETWORK_KINDS = ("uniform", "tight", "wide-open", "open")

_DEFAULT_CONCENTRATION = {
    "uniform": (7.0, 1.0),
    "tight": (10.0, 0.3),
    "open": (2.0, 0.5),
    "wide-open": (0.3, 0.3),
}


def _normalize_kind(kind: str) -> str:
    k = kind.strip().lower().replace("_", "-")
    if k == "wideopen":
        k = "wide-open"
    if k not in NETWORK_KINDS:
        raise InputError(f"unknown network kind {kind!r}; expected one of {NETWORK_KINDS}")
    return k


@dataclass(frozen=True)
class NetworkTopology:
    """Block-membership network family.

    Every node gets a membership vector over ``groups`` blocks and edges are
    sampled with probability proportional to membership dot products.
    ``concentration`` lists the own-block entry first. For ``uniform`` every
    node uses the same profile ``concentration / sum(concentration)``, a
    planted partition with homogeneous within- and between-block rates. The
    other kinds draw memberships from Dirichlet(concentration) and move the
    largest weight onto the node's own block.
    """

    kind: str = "uniform"
    groups: int = 4
    concentration: tuple = None
    edge_budget: float = 8.0

    def __post_init__(self):
        kind = _normalize_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.groups < 1:
            raise InputError("groups must be positive")
        if not self.edge_budget > 0:
            raise InputError("edge_budget must be positive")
        conc = self.concentration
        if conc is not None:
            conc = tuple(float(c) for c in conc)
            if len(conc) != self.groups or min(conc) <= 0:
                raise InputError(
                    f"concentration must hold {self.groups} positive values, got {conc}"
                )
            object.__setattr__(self, "concentration", conc)

    def resolved_concentration(self) -> tuple:
        """``concentration``, or the kind's default profile when unset."""
        if self.concentration is not None:
            return self.concentration
        head, rest = _DEFAULT_CONCENTRATION[self.kind]
        return (head,) + (rest,) * (self.groups - 1)


def block_labels(n: int, groups: int) -> np.ndarray:
    """Balanced contiguous block assignment: node i goes to block i*groups//n."""
    return (np.arange(n) * groups) // n


def node_memberships(t: NetworkTopology, labels, rng) -> np.ndarray:
    n = len(labels)
    conc = np.asarray(t.resolved_concentration())
    if t.kind == "uniform":
        return (conc / conc.sum())[(np.arange(t.groups)[None, :] - labels[:, None]) % t.groups]
    raw = rng.dirichlet(conc, size=n)
    # put the dominant weight on the node's own block
    top = np.argmax(raw, axis=1)
    rows = np.arange(n)
    own = raw[rows, labels].copy()
    raw[rows, labels] = raw[rows, top]
    raw[rows, top] = own
    return raw


def generate_network(t: NetworkTopology, n: int, seed=None, labels=None) -> Graph:
    """Sample a graph whose mean degree is ``t.edge_budget`` (up to rounding).

    Exactly ``round(n * edge_budget / 2)`` distinct node pairs are drawn
    without replacement, weighted by membership affinity.
    """
    if n < t.groups:
        raise InputError(f"n={n} is smaller than groups={t.groups}")
    if t.edge_budget > n - 1:
        raise InputError(f"edge_budget {t.edge_budget} exceeds n-1={n - 1}")
    rng = np.random.default_rng(seed)
    labels = block_labels(n, t.groups) if labels is None else np.asarray(labels)
    pi = node_memberships(t, labels, rng)
    iu, ju = np.triu_indices(n, 1)
    weight = np.einsum("ij,ij->i", pi[iu], pi[ju]) + 1e-12
    m = max(1, int(round(n * t.edge_budget / 2)))
    pick = rng.choice(weight.size, size=m, replace=False, p=weight / weight.sum())
    pick.sort()
    return Graph(n, tuple(zip(iu[pick].tolist(), ju[pick].tolist())))


# Edge-list CSV ---------------------------------------------------------------

def _parse_int(tok: str, lineno: int) -> int:
    try:
        return int(tok.strip())
    except ValueError:
        raise GraphError(f"line {lineno}: non-integer token {tok.strip()!r}") from None


def read_edge_list(source, n: int = None) -> Graph:
    """Parse ``u,v`` lines (optional ``u,v`` header) into a :class:`Graph`.

    ``source`` is a path or a text stream. Without ``n`` the node count is
    the largest index plus one.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_edge_list(fh, n)
    edges = []
    for lineno, row in enumerate(csv.reader(source), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and [c.strip().lower() for c in row] == ["u", "v"]:
            continue
        if len(row) != 2:
            raise GraphError(f"line {lineno}: expected 2 fields, got {len(row)}")
        u, v = _parse_int(row[0], lineno), _parse_int(row[1], lineno)
        if u < 0 or v < 0:
            raise GraphError(f"line {lineno}: negative node index")
        if u == v:
            raise GraphError(f"line {lineno}: self-loop on node {u}")
        if n is not None and max(u, v) >= n:
            raise GraphError(f"line {lineno}: node index {max(u, v)} >= declared n={n}")
        edges.append((u, v))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
        if n == 0:
            raise GraphError("empty edge list and no node count given")
    return Graph(n, tuple(edges))


def write_edge_list(g: Graph, sink=None, header: bool = True):
    """Write the canonical edge list. Returns the text when ``sink`` is None."""
    if sink is None:
        buf = io.StringIO()
        write_edge_list(g, buf, header)
        return buf.getvalue()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", newline="") as fh:
            return write_edge_list(g, fh, header)
    w = csv.writer(sink, lineterminator="\n")
    if header:
        w.writerow(["u", "v"])
    w.writerows(g.edges)
