"""Synthetic data with group-structured node effects and the machine comparison.

A run draws a fresh dataset and network, splits nodes into train/test so that
every test node can reach a training node, fits every machine on the
training nodes and records train and test MSE.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .baselines import (
    fit_kernel_ridge,
    fit_linear_cohesion,
    fit_ols,
    gcv_from_hat,
    kernel_ridge_hat,
    linear_cohesion_hat,
    predict_kernel_ridge,
    predict_linear_cohesion,
    predict_ols,
)
from .errors import InputError, RetryExhaustedError, SingularSystemError
from .graph import (
    NETWORK_KINDS,
    Graph,
    NetworkTopology,
    block_labels,
    build_laplacian,
    generate_network,
    harmonic_extension,
    partition_laplacian,
    unreachable_test_nodes,
)
from .kernels import KernelSpec, cross_gram, default_gamma, gram
from .predictor import mse
from .solver import FitConfig, default_grid, fit, select_hyperparameters

__all__ = [
    "SimConfig",
    "Dataset",
    "ReportRow",
    "SummaryRow",
    "BenchmarkReport",
    "MACHINE_ORDER",
    "COHESION_KERNELS",
    "DEFAULT_MACHINES",
    "NONLINEARITIES",
    "generate_dataset",
    "reachable_split",
    "evaluate_machine",
    "run_benchmark",
    "summarize",
    "format_table",
]

NONLINEARITIES = ("linear", "sine", "quadratic")

#: Cohesion kernel machines, tagged as in the comparison tables.
COHESION_KERNELS = {"cos": "cosine", "rbf": "rbf", "lpc": "laplace", "nn": "tangent",
                    "pol": "polynomial"}

#: Column order for summaries; svm/rvm/gp are reserved for merged external results.
MACHINE_ORDER = ("mlr", "lin", "cos", "rbf", "lpc", "nn", "pol",
                 "krr-cos", "krr-rbf", "krr-lpc", "krr-nn", "krr-pol",
                 "svm", "rvm", "gp")

DEFAULT_MACHINES = ("mlr", "lin", "cos", "rbf", "lpc", "nn", "pol", "krr-rbf", "krr-lpc")

_KIND_ABBREV = {"uniform": "Uf", "tight": "Ti", "wide-open": "Wo", "open": "Op"}

LAMBDA_GRID = tuple(np.logspace(-3, 2, 7))


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. Regression groups coincide with network blocks
    unless ``align_groups`` is False."""

    n: int = 200
    p: int = 2
    groups: int = 4
    topology: NetworkTopology = field(default_factory=NetworkTopology)
    noise_sd: float = 1.0
    effect_scale: float = 1.5
    nonlinearity: str = "sine"
    seed: int = 0
    align_groups: bool = True

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InputError("n and p must be positive")
        if self.groups < 1 or self.n % self.groups:
            raise InputError(f"n={self.n} must be divisible by groups={self.groups}")
        if self.topology.groups != self.groups:
            object.__setattr__(self, "topology", replace(self.topology, groups=self.groups))
        if not self.noise_sd > 0:
            raise InputError("noise_sd must be positive")
        if self.nonlinearity not in NONLINEARITIES:
            raise InputError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.nonlinearity != "linear" and self.p < 2:
            raise InputError(f"{self.nonlinearity} response needs p >= 2")

    def with_kind(self, kind: str) -> "SimConfig":
        return replace(self, topology=replace(self.topology, kind=kind, concentration=None))

    def to_dict(self) -> dict:
        t = self.topology
        return {
            "n": self.n, "p": self.p, "groups": self.groups, "network": t.kind,
            "concentration": list(t.resolved_concentration()),
            "edge_budget": t.edge_budget, "noise_sd": self.noise_sd,
            "effect_scale": self.effect_scale, "nonlinearity": self.nonlinearity,
            "seed": self.seed, "align_groups": self.align_groups,
        }


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    groups: np.ndarray = field(repr=False)


def group_offsets(groups: int) -> np.ndarray:
    """Evenly spaced offsets in [-1, 1]."""
    return np.linspace(-1.0, 1.0, groups) if groups > 1 else np.zeros(1)


def response_mean(X, nonlinearity: str) -> np.ndarray:
    x1 = X[:, 0]
    if nonlinearity == "linear":
        return x1 - 0.5 * X[:, 1] if X.shape[1] > 1 else x1
    if nonlinearity == "sine":
        return np.sin(x1) + 0.5 * X[:, 1] ** 2
    return x1**2 - 0.5 * X[:, 1] ** 2 + x1 * X[:, 1]


def generate_dataset(cfg: SimConfig):
    """Draw ``(Dataset, Graph, true_alpha)`` deterministically from ``cfg.seed``."""
    data_seq, net_seq, perm_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    rng = np.random.default_rng(data_seq)
    X = rng.standard_normal((cfg.n, cfg.p))
    noise = cfg.noise_sd * rng.standard_normal(cfg.n)
    blocks = block_labels(cfg.n, cfg.groups)
    if cfg.align_groups:
        groups = blocks
    else:
        groups = blocks[np.random.default_rng(perm_seq).permutation(cfg.n)]
    alpha = cfg.effect_scale * group_offsets(cfg.groups)[groups]
    Y = alpha + response_mean(X, cfg.nonlinearity) + noise
    g = generate_network(cfg.topology, cfg.n, np.random.default_rng(net_seq), labels=blocks)
    return Dataset(X, Y, groups), g, alpha


def reachable_split(g: Graph, split_fraction: float, rng, retries: int = 200):
    """Random node split with every test node connected to some train node."""
    if not 0 < split_fraction < 1:
        raise InputError(f"split_fraction must be in (0, 1), got {split_fraction}")
    n_train = int(round(split_fraction * g.n))
    if not 0 < n_train < g.n:
        raise InputError(f"split leaves an empty side (n={g.n}, fraction={split_fraction})")
    L = build_laplacian(g)
    for _ in range(retries):
        perm = rng.permutation(g.n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        part = partition_laplacian(L, train, test)
        if not unreachable_test_nodes(part):
            return train, test, part
    raise RetryExhaustedError(
        f"no split with all test nodes reachable after {retries} attempts"
    )


# Machines -------------------------------------------------------------------------

def _kernel_for(tag: str, X_train) -> KernelSpec:
    family = COHESION_KERNELS[tag]
    if family in ("rbf", "laplace", "tangent"):
        return KernelSpec(family, gamma=default_gamma(X_train))
    return KernelSpec(family)


def _cohesion_machine(tag, X_tr, Y_tr, X_te, L_tr, part, select, fixed):
    spec = _kernel_for(tag, X_tr)
    K = gram(spec, X_tr)
    if select == "none":
        cfg = FitConfig(lam=fixed.get("lam", 1.0), psi=fixed.get("psi", 1.0))
    else:
        lams = [fixed["lam"]] if "lam" in fixed else None
        psis = [fixed["psi"]] if "psi" in fixed else None
        cfg = select_hyperparameters(Y_tr, K, L_tr, default_grid(lams, psis), method=select)
    f = fit(Y_tr, K, L_tr, cfg)
    train_pred = f.alpha + K @ f.w
    test_pred = harmonic_extension(part, f.alpha) + cross_gram(spec, X_te, X_tr) @ f.w
    return train_pred, test_pred


def _select_1d(Y, hat_of, fixed_lam, select):
    if select == "none" or fixed_lam is not None:
        return 1.0 if fixed_lam is None else fixed_lam
    scores = {}
    for lam in LAMBDA_GRID:
        try:
            scores[lam] = gcv_from_hat(Y, hat_of(lam))
        except (SingularSystemError, ZeroDivisionError):
            pass
    if not scores:
        raise SingularSystemError("every grid point gave a singular system", condition=math.inf)
    best = min(scores.values())
    # ties go to the smoother (larger lam) model
    return max(lam for lam, s in scores.items() if s <= best + 1e-12 * abs(best))


def _krr_machine(tag, X_tr, Y_tr, X_te, select, fixed):
    spec = _kernel_for(tag.split("-", 1)[1], X_tr)
    K = gram(spec, X_tr)
    lam = _select_1d(Y_tr, lambda l: kernel_ridge_hat(K, l), fixed.get("lam"), _one_d(select))
    f = fit_kernel_ridge(Y_tr, K, lam, kernel=spec, X_train=X_tr)
    return f.intercept + K @ f.w, predict_kernel_ridge(f, X_te)


def _one_d(select):
    # k-fold selection is only wired for the cohesion machines; 1-D baselines use GCV
    return "none" if select == "none" else "gcv"


def evaluate_machine(tag: str, X_tr, Y_tr, X_te, L_tr, part, select: str = "gcv",
                     fixed: dict = None):
    """Fit machine ``tag`` on the training nodes; return (train_pred, test_pred)."""
    fixed = fixed or {}
    if tag == "mlr":
        coef = fit_ols(Y_tr, X_tr)
        return predict_ols(coef, X_tr), predict_ols(coef, X_te)
    if tag == "lin":
        lam = _select_1d(Y_tr, lambda l: linear_cohesion_hat(X_tr, L_tr, l),
                         fixed.get("lam"), _one_d(select))
        f = fit_linear_cohesion(Y_tr, X_tr, L_tr, lam)
        return f.alpha + X_tr @ f.beta, predict_linear_cohesion(f, X_te, part)
    if tag in COHESION_KERNELS:
        return _cohesion_machine(tag, X_tr, Y_tr, X_te, L_tr, part, select, fixed)
    if tag.startswith("krr-") and tag[4:] in COHESION_KERNELS:
        return _krr_machine(tag, X_tr, Y_tr, X_te, select, fixed)
    raise InputError(f"unknown machine {tag!r}")


# Reports ----------------------------------------------------------------------------

class ReportRow(NamedTuple):
    machine: str
    kind: str
    split: str
    run: int
    mse: float


class SummaryRow(NamedTuple):
    machine: str
    kind: str
    split: str
    mean: float
    sd: float
    count: int


class PredictionRecord(NamedTuple):
    machine: str
    kind: str
    split: str
    run: int
    node: int
    y_true: float
    y_pred: float


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def aggregates(self) -> dict:
        return {(s.machine, s.kind, s.split): (s.mean, s.sd) for s in summarize(self)}

    def to_csv(self, sink=None):
        return _write_csv(sink, ReportRow._fields, [
            (r.machine, r.kind, r.split, r.run, repr(float(r.mse))) for r in self.rows
        ])

    def predictions_to_csv(self, sink=None):
        return _write_csv(sink, PredictionRecord._fields, [
            (p.machine, p.kind, p.split, p.run, p.node, repr(p.y_true), repr(p.y_pred))
            for p in self.predictions
        ])

    @classmethod
    def from_csv(cls, source) -> "BenchmarkReport":
        if isinstance(source, (str, os.PathLike)):
            with open(source, newline="") as fh:
                return cls.from_csv(fh)
        reader = csv.DictReader(source)
        missing = set(ReportRow._fields) - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"report CSV lacks columns {sorted(missing)}")
        rows = []
        for rec in reader:
            try:
                rows.append(ReportRow(rec["machine"], rec["kind"], rec["split"],
                                      int(rec["run"]), float(rec["mse"])))
            except ValueError as exc:
                raise InputError(f"bad report row {rec}: {exc}") from None
        return cls(rows)

    def merge(self, other: "BenchmarkReport") -> "BenchmarkReport":
        return BenchmarkReport(self.rows + other.rows, self.predictions + other.predictions,
                               dict(self.config))


def _write_csv(sink, header, rows):
    if sink is None:
        buf = io.StringIO()
        _write_csv(buf, header, rows)
        return buf.getvalue()
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", newline="") as fh:
            return _write_csv(fh, header, rows)
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _run_one(cfg: SimConfig, run: int, machines, split_fraction, select, fixed,
             standardize, save_predictions):
    run_cfg = replace(cfg, seed=cfg.seed + run)
    data, g, _ = generate_dataset(run_cfg)
    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed + run, 1]))
    train, test, part = reachable_split(g, split_fraction, split_rng)
    X_tr, X_te = data.X[train], data.X[test]
    if standardize:
        mu, sd = X_tr.mean(axis=0), X_tr.std(axis=0)
        sd[sd == 0] = 1.0
        X_tr, X_te = (X_tr - mu) / sd, (X_te - mu) / sd
    Y_tr, Y_te = data.Y[train], data.Y[test]
    L_tr = build_laplacian(g.subgraph(train))
    kind = cfg.topology.kind
    rows, preds = [], []
    for tag in machines:
        tr_pred, te_pred = evaluate_machine(tag, X_tr, Y_tr, X_te, L_tr, part, select, fixed)
        rows.append(ReportRow(tag, kind, "train", run, mse(Y_tr, tr_pred)))
        rows.append(ReportRow(tag, kind, "test", run, mse(Y_te, te_pred)))
        if save_predictions:
            for split, nodes, yt, yp in (("train", train, Y_tr, tr_pred),
                                         ("test", test, Y_te, te_pred)):
                preds.extend(PredictionRecord(tag, kind, split, run, int(v), float(a), float(b))
                             for v, a, b in zip(nodes, yt, yp))
    return rows, preds


def run_benchmark(cfg: SimConfig, machines: Sequence[str] = DEFAULT_MACHINES, runs: int = 45,
                  split_fraction: float = 0.7, *, kinds: Sequence[str] = None,
                  select: str = "gcv", fixed: dict = None, standardize: bool = False,
                  save_predictions: bool = False, n_jobs: int = 1) -> BenchmarkReport:
    """Run the comparison for each network kind (default: the kind in ``cfg``).

    Run ``r`` uses seed ``cfg.seed + r`` for data, network and split. Rows are
    ordered by kind, run, then machine regardless of ``n_jobs``.
    """
    if runs < 1:
        raise InputError("runs must be at least 1")
    if not 0 < split_fraction < 1:
        raise InputError(f"split_fraction must be in (0, 1), got {split_fraction}")
    machines = list(machines)
    for tag in machines:
        if tag not in COHESION_KERNELS and tag not in ("mlr", "lin") and not (
                tag.startswith("krr-") and tag[4:] in COHESION_KERNELS):
            raise InputError(f"unknown machine {tag!r}")
    kinds = [cfg.topology.kind] if kinds is None else list(kinds)
    tasks = [(cfg.with_kind(k), r) for k in kinds for r in range(runs)]
    args = (machines, split_fraction, select, fixed or {}, standardize, save_predictions)
    if n_jobs == 1:
        results = [_run_one(c, r, *args) for c, r in tasks]
    else:
        with ProcessPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as ex:
            futures = [ex.submit(_run_one, c, r, *args) for c, r in tasks]
            results = [f.result() for f in futures]
    report = BenchmarkReport(config={**cfg.to_dict(), "kinds": kinds, "runs": runs,
                                     "split_fraction": split_fraction, "machines": machines,
                                     "select": select, "standardize": standardize})
    for rows, preds in results:
        report.rows.extend(rows)
        report.predictions.extend(preds)
    return report


# Summaries ------------------------------------------------------------------------------

def _machine_key(tag):
    return (0, MACHINE_ORDER.index(tag), "") if tag in MACHINE_ORDER else (1, 0, tag)


def _kind_key(kind):
    return (0, NETWORK_KINDS.index(kind), "") if kind in NETWORK_KINDS else (1, 0, kind)


def summarize(report: BenchmarkReport) -> list:
    """Mean and sample sd of MSE per (machine, kind, split), in table order."""
    if not report.rows:
        raise InputError("empty report")
    groups = {}
    for r in report.rows:
        groups.setdefault((r.machine, r.kind, r.split), []).append(r.mse)
    out = []
    for (m, k, s), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(SummaryRow(m, k, s, float(v.mean()), sd, int(v.size)))
    split_rank = {"train": 0, "test": 1}
    out.sort(key=lambda s: (split_rank.get(s.split, 2), s.split, _kind_key(s.kind),
                            _machine_key(s.machine)))
    return out


def summary_to_csv(summary, sink=None):
    return _write_csv(sink, SummaryRow._fields, [
        (s.machine, s.kind, s.split, repr(s.mean), repr(s.sd), s.count) for s in summary
    ])


def format_table(summary, split: str = "test", digits: int = 3) -> str:
    """Aligned text table: one row per network kind, one column per machine."""
    rows = [s for s in summary if s.split == split]
    if not rows:
        return ""
    machines = sorted({s.machine for s in rows}, key=_machine_key)
    kinds = sorted({s.kind for s in rows}, key=_kind_key)
    cell = {(s.machine, s.kind): s for s in rows}
    header = ["SN"] + [m.upper() for m in machines]
    body = []
    for k in kinds:
        line = [_KIND_ABBREV.get(k, k)]
        for m in machines:
            s = cell.get((m, k))
            line.append("-" if s is None else f"{s.mean:.{digits}f}")
        body.append(line)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                              for i, (c, w) in enumerate(zip(r, widths)))
    lines = [f"{split} MSE (mean over runs)", fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
