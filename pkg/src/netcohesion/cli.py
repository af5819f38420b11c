"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``simulate``, ``benchmark``, ``summarize``.

Settings resolve as command-line flags, then ``--config`` file (JSON or
``key=value`` lines), then built-in defaults. Every command writes a
``manifest.json`` next to its outputs recording the resolved settings,
SHA-256 digests of inputs and outputs, the tool version and a timestamp.

Exit codes::

    0  success
    1  unexpected internal error
    2  unreadable or malformed input, invalid configuration
    3  singular or ill-conditioned system (including lambda = psi = 0)
    4  test node not reachable from any training node
    5  prediction graph differs from the fit-time graph
    6  train/test resampling gave up
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import CohesionError, InputError
from .graph import NETWORK_KINDS, Graph, NetworkTopology, block_labels, build_laplacian, read_edge_list, write_edge_list
from .kernels import KernelSpec, default_gamma, gram
from .predictor import PredictionInput, predict
from .solver import FitConfig, default_grid, fit, fit_from_dict, fit_to_dict, select_hyperparameters
from .simulation import (
    DEFAULT_MACHINES,
    BenchmarkReport,
    SimConfig,
    format_table,
    generate_dataset,
    run_benchmark,
    summarize,
    summary_to_csv,
)

DEFAULTS = {
    "fit": {"kernel": "rbf", "gamma": None, "degree": 2, "offset": None, "lam": 1.0,
            "psi": 1.0, "penalty": "euclidean", "select": "none", "allow_interpolation": False,
            "store": "embed", "seed": 0, "folds": 5},
    "predict": {"allow_graph_drift": False},
    "simulate": {"network": "uniform", "n": 200, "p": 2, "groups": 4, "noise_sd": 1.0,
                 "effect_scale": 1.5, "nonlinearity": "sine", "edge_budget": 8.0, "seed": 0,
                 "figures": True},
    "benchmark": {"network": "all", "n": 200, "p": 2, "groups": 4, "noise_sd": 1.0,
                  "effect_scale": 1.5, "nonlinearity": "sine", "edge_budget": 8.0, "seed": 0,
                  "runs": 45, "split": 0.7, "machines": ",".join(DEFAULT_MACHINES),
                  "select": "gcv", "standardize": False, "save_predictions": False,
                  "n_jobs": 1, "figures": True},
    "summarize": {"figures": True},
}

REQUIRED = {
    "fit": ("features", "response", "edges", "out"),
    "predict": ("model", "features_new", "edges_full", "train_index", "out"),
    "simulate": ("out",),
    "benchmark": ("out",),
    "summarize": ("report", "out"),
}

_FLAG_FOR = {"lam": "--lambda", "features_new": "--features-new", "edges_full": "--edges-full",
             "train_index": "--train-index"}

_PATH_KEYS = ("features", "response", "edges", "model", "features_new", "edges_full",
              "train_index", "config")


def _flag(key):
    return _FLAG_FOR.get(key, "--" + key.replace("_", "-"))


# Argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="netcohesion", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--config", metavar="PATH", help="JSON or key=value settings file")
    common.add_argument("--json-errors", action="store_true", default=False,
                        help="print errors to stderr as JSON objects")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], argument_default=S,
                       help="fit a cohesion model from CSV inputs")
    p.add_argument("--features", metavar="PATH")
    p.add_argument("--response", metavar="PATH")
    p.add_argument("--edges", metavar="PATH")
    p.add_argument("--kernel", choices=["rbf", "laplace", "cosine", "poly", "polynomial",
                                        "tangent"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--offset", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--psi", type=float)
    p.add_argument("--penalty", choices=["euclidean", "rkhs"])
    p.add_argument("--select", metavar="{none|gcv|kfold:K}")
    p.add_argument("--allow-interpolation", action="store_true")
    p.add_argument("--store", choices=["embed", "csv"],
                   help="embed training data in the model JSON or write CSVs beside it")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("predict", parents=[common], argument_default=S,
                       help="predict responses at new nodes")
    p.add_argument("--model", metavar="PATH")
    p.add_argument("--features-new", metavar="PATH")
    p.add_argument("--edges-full", metavar="PATH")
    p.add_argument("--train-index", metavar="PATH",
                   help="full-graph node of each training row, one per line")
    p.add_argument("--allow-graph-drift", action="store_true")

    for name, help_ in (("simulate", "generate a synthetic dataset and network"),
                        ("benchmark", "run the machine comparison")):
        p = sub.add_parser(name, parents=[common], argument_default=S, help=help_)
        kinds = list(NETWORK_KINDS) + ["wideopen"] + (["all"] if name == "benchmark" else [])
        p.add_argument("--network", metavar="{" + "|".join(kinds) + "}",
                       help="network kind" + (" (comma list or 'all')" if name == "benchmark"
                                              else ""))
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("--groups", type=int)
        p.add_argument("--noise-sd", type=float)
        p.add_argument("--effect-scale", type=float)
        p.add_argument("--nonlinearity", choices=["linear", "sine", "quadratic"])
        p.add_argument("--edge-budget", type=float, help="target mean degree")
        p.add_argument("--seed", type=int)
        p.add_argument("--no-figures", dest="figures", action="store_false")
        if name == "benchmark":
            p.add_argument("--runs", type=int)
            p.add_argument("--split", type=float, help="training fraction")
            p.add_argument("--machines", help="comma-separated machine tags")
            p.add_argument("--select", metavar="{none|gcv|kfold:K}")
            p.add_argument("--lambda", dest="lam", type=float)
            p.add_argument("--psi", type=float)
            p.add_argument("--standardize", action="store_true")
            p.add_argument("--save-predictions", action="store_true")
            p.add_argument("--n-jobs", type=int)

    p = sub.add_parser("summarize", parents=[common], argument_default=S,
                       help="aggregate one or more report CSVs")
    p.add_argument("--report", metavar="PATH", action="append")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    return parser


def _normalize_key(key: str) -> str:
    key = key.strip().lstrip("-").replace("-", "_")
    return {"lambda": "lam", "allow_drift": "allow_graph_drift"}.get(key, key)


def read_config_file(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path}: invalid JSON ({exc})") from None
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"config {path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            raw[k] = _coerce(v.strip())
    return {_normalize_key(k): v for k, v in raw.items()}


def _coerce(v: str):
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    for typ in (int, float):
        try:
            return typ(v)
        except ValueError:
            pass
    return v


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config file over defaults."""
    given = {k: v for k, v in vars(args).items() if k not in ("command", "json_errors")}
    from_file = read_config_file(given["config"]) if "config" in given else {}
    settings = {**DEFAULTS[args.command], **from_file, **given}
    for key in REQUIRED[args.command]:
        if settings.get(key) in (None, []):
            raise InputError(f"missing required option {_flag(key)}")
    return settings


# File helpers ------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _open_input(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def read_features(path) -> tuple:
    """Feature CSV with a header row; returns (names, matrix)."""
    with _open_input(path) as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one observation")
    header, body = [c.strip() for c in rows[0]], rows[1:]
    try:
        X = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric feature value ({exc})") from None
    if X.ndim != 2 or X.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows or header/column mismatch")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite feature value")
    return header, X


def read_column(path, kind=float) -> np.ndarray:
    """Single-column CSV with an optional header line."""
    with _open_input(path) as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    values = []
    for i, r in enumerate(rows):
        if len(r) != 1:
            raise InputError(f"{path}: line {i + 1} has {len(r)} columns, expected 1")
        try:
            values.append(kind(r[0].strip()))
        except ValueError:
            if i == 0:
                continue
            raise InputError(f"{path}: line {i + 1}: cannot parse {r[0]!r}") from None
    if not values:
        raise InputError(f"{path}: no values")
    return np.array(values, dtype=kind)


def write_matrix(path, X, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([repr(float(v)) for v in row] for row in X)


def write_column(path, values, name, kind=float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        w.writerows([[repr(kind(v))] for v in values])


def _read_graph(path, n=None) -> Graph:
    with _open_input(path) as fh:
        return read_edge_list(fh, n)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir, command, settings, outputs):
    inputs = {}
    for key in _PATH_KEYS:
        val = settings.get(key)
        for path in val if isinstance(val, list) else [val]:
            if path and os.path.isfile(path):
                inputs[path] = sha256_file(path)
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(settings.items())},
        "seed": settings.get("seed"),
        "inputs": inputs,
        "outputs": {os.path.relpath(p, out_dir): sha256_file(p) for p in sorted(outputs)},
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)


# Commands ------------------------------------------------------------------------------

def _kernel_spec(s, X) -> KernelSpec:
    family = {"poly": "polynomial"}.get(s["kernel"], s["kernel"])
    gamma = s["gamma"]
    if gamma is None:
        gamma = default_gamma(X) if family in ("rbf", "laplace", "tangent") else 1.0
    kw = {"family": family, "gamma": gamma, "degree": s["degree"]}
    if s["offset"] is not None:
        kw["offset"] = s["offset"]
    return KernelSpec(**kw)


def cmd_fit(s: dict) -> list:
    header, X = read_features(s["features"])
    Y = read_column(s["response"])
    if Y.size != X.shape[0]:
        raise InputError(f"{X.shape[0]} feature rows but {Y.size} responses")
    g = _read_graph(s["edges"], X.shape[0])
    spec = _kernel_spec(s, X)
    K = gram(spec, X)
    L = build_laplacian(g)
    cfg = FitConfig(lam=s["lam"], psi=s["psi"], weight_penalty_form=s["penalty"],
                    allow_interpolation=bool(s["allow_interpolation"]))
    select = str(s["select"])
    if select != "none":
        grid = [FitConfig(c.lam, c.psi, cfg.weight_penalty_form, cfg.allow_interpolation)
                for c in default_grid(form=cfg.weight_penalty_form)]
        cfg = select_hyperparameters(Y, K, L, grid, method=select, k=int(s["folds"]),
                                     seed=s["seed"])
    f = fit(Y, K, L, cfg, kernel=spec, X_train=X, graph=g)
    out = s["out"]
    os.makedirs(out, exist_ok=True)
    record = fit_to_dict(f, embed=s["store"] == "embed")
    record["feature_names"] = header
    written = []
    if s["store"] == "csv":
        write_matrix(os.path.join(out, "train_features.csv"), X, header)
        write_edge_list(g, os.path.join(out, "train_edges.csv"))
        record["X_train_path"] = "train_features.csv"
        record["edges_path"] = "train_edges.csv"
        written += [os.path.join(out, "train_features.csv"), os.path.join(out, "train_edges.csv")]
    model_path = os.path.join(out, "model.json")
    write_json(model_path, record)
    return written + [model_path]


def load_model(path):
    try:
        with open(path) as fh:
            record = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    base = os.path.dirname(os.path.abspath(path))
    X = graph = None
    if record.get("X_train") is None and record.get("X_train_path"):
        _, X = read_features(os.path.join(base, record["X_train_path"]))
    if record.get("edges") is None and record.get("edges_path"):
        graph = _read_graph(os.path.join(base, record["edges_path"]), int(record["n"]))
    try:
        return fit_from_dict(record, X_train=X, graph=graph)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed model record ({exc})") from None


def cmd_predict(s: dict) -> list:
    f = load_model(s["model"])
    _, X_new = read_features(s["features_new"])
    train_index = read_column(s["train_index"], int)
    g = _read_graph(s["edges_full"], len(train_index) + X_new.shape[0])
    inp = PredictionInput(X_new, g, tuple(train_index.tolist()))
    yhat = predict(f, inp, allow_graph_drift=bool(s["allow_graph_drift"]))
    out = s["out"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "predictions.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "prediction"])
        w.writerows((i, repr(float(v))) for i, v in zip(inp.test_index, yhat))
    return [path]


def _sim_config(s: dict, kind: str) -> SimConfig:
    topo = NetworkTopology(kind=kind, groups=int(s["groups"]), edge_budget=float(s["edge_budget"]))
    return SimConfig(n=int(s["n"]), p=int(s["p"]), groups=int(s["groups"]), topology=topo,
                     noise_sd=float(s["noise_sd"]), effect_scale=float(s["effect_scale"]),
                     nonlinearity=s["nonlinearity"], seed=int(s["seed"]))


def cmd_simulate(s: dict) -> list:
    cfg = _sim_config(s, s["network"])
    data, g, alpha = generate_dataset(cfg)
    out = s["out"]
    os.makedirs(out, exist_ok=True)
    paths = {name: os.path.join(out, name) for name in
             ("features.csv", "response.csv", "edges.csv", "groups.csv", "alpha.csv")}
    write_matrix(paths["features.csv"], data.X, [f"x{j + 1}" for j in range(cfg.p)])
    write_column(paths["response.csv"], data.Y, "y")
    write_edge_list(g, paths["edges.csv"])
    write_column(paths["groups.csv"], data.groups, "group", int)
    write_column(paths["alpha.csv"], alpha, "alpha")
    written = list(paths.values())
    if s["figures"]:
        from .plotting import plot_adjacency, save_figure
        fig, _ = plot_adjacency(g, block_labels(cfg.n, cfg.groups))
        fig_path = os.path.join(out, "network.svg")
        save_figure(fig, fig_path)
        written.append(fig_path)
    return written


def _write_summary(report: BenchmarkReport, out: str, figures: bool) -> list:
    summary = summarize(report)
    csv_path = os.path.join(out, "summary.csv")
    txt_path = os.path.join(out, "summary.txt")
    summary_to_csv(summary, csv_path)
    splits = list(dict.fromkeys(r.split for r in summary))
    with open(txt_path, "w") as fh:
        fh.write("\n".join(format_table(summary, sp) for sp in splits))
    written = [csv_path, txt_path]
    if figures:
        from .plotting import save_summary_figures
        written += save_summary_figures(summary, os.path.join(out, "figures"))
    return written


def cmd_benchmark(s: dict) -> list:
    net = str(s["network"])
    kinds = list(NETWORK_KINDS) if net == "all" else [k.strip() for k in net.split(",")]
    cfg = _sim_config(s, kinds[0])
    kinds = [cfg.with_kind(k).topology.kind for k in kinds]
    machines = [m.strip() for m in str(s["machines"]).split(",") if m.strip()]
    fixed = {k: float(s[k]) for k in ("lam", "psi") if s.get(k) is not None}
    report = run_benchmark(cfg, machines, runs=int(s["runs"]), split_fraction=float(s["split"]),
                           kinds=kinds, select=str(s["select"]), fixed=fixed,
                           standardize=bool(s["standardize"]),
                           save_predictions=bool(s["save_predictions"]),
                           n_jobs=int(s["n_jobs"]))
    out = s["out"]
    os.makedirs(out, exist_ok=True)
    report_path = os.path.join(out, "report.csv")
    report.to_csv(report_path)
    written = [report_path]
    if s["save_predictions"]:
        pred_path = os.path.join(out, "predictions.csv")
        report.predictions_to_csv(pred_path)
        written.append(pred_path)
    return written + _write_summary(report, out, bool(s["figures"]))


def cmd_summarize(s: dict) -> list:
    paths = s["report"] if isinstance(s["report"], list) else [s["report"]]
    report = BenchmarkReport()
    for path in paths:
        with _open_input(path) as fh:
            report = report.merge(BenchmarkReport.from_csv(fh))
    out = s["out"]
    os.makedirs(out, exist_ok=True)
    return _write_summary(report, out, bool(s["figures"]))


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "simulate": cmd_simulate,
            "benchmark": cmd_benchmark, "summarize": cmd_summarize}


def _report_error(exc, json_errors: bool):
    if json_errors:
        obj = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": getattr(exc, "exit_code", 1)}
        if getattr(exc, "nodes", None) is not None:
            obj["nodes"] = exc.nodes
        cond = getattr(exc, "condition", None)
        if cond is not None:
            obj["condition"] = cond if math.isfinite(cond) else None
        print(json.dumps(obj, sort_keys=True), file=sys.stderr)
    else:
        print(f"netcohesion: error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    json_errors = getattr(args, "json_errors", False)
    try:
        settings = resolve(args)
        outputs = COMMANDS[args.command](settings)
        write_manifest(settings["out"], args.command, settings, outputs)
    except CohesionError as exc:
        _report_error(exc, json_errors)
        return exc.exit_code
    except OSError as exc:
        _report_error(InputError(str(exc)), json_errors)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
