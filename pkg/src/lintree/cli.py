"""Command-line entry point: ``lintree <command> [options]``.

Commands: train, estimate, analyze, predict, eval, prune, alpha-stats.
Options may also come from a TOML file (``--config``); explicit flags win.
Every command writes its resolved configuration to ``<out>/config.json``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import analysis
from .data import (ParseError, compact_features, parse_libsvm_multilabel, read_metadata)
from .predict import format_metrics, precision_at_k, predict_dataset
from .serialize import ModelFormatError, load_model, save_model
from .solver import LossSpec, model_bytes, prune_weights, train_ovr, train_tree
from .tree import build_label_tree

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("lintree")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _range(text):
    lo, sep, hi = str(text).partition("-")
    return list(range(int(lo), int(hi) + 1)) if sep else _int_list(text)


def _add_common(p, data=True):
    p.add_argument("--config", type=Path, help="TOML file with option defaults")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: .)")
    p.add_argument("--emit", choices=["csv", "json"], default=None,
                   help="also mirror every CSV as JSON when set to json")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    if data:
        p.add_argument("--data", type=Path, help="LIBSVM multi-label file")
        p.add_argument("--meta", type=Path, help="sidecar file with 'n=<int> L=<int>'")
        p.add_argument("--n-features", type=int, default=None)
        p.add_argument("--n-labels", type=int, default=None)
        p.add_argument("--zero-based", action="store_true", default=None,
                       help="feature indices on disk start at 0")
        p.add_argument("--zero-based-labels", action="store_true", default=None,
                       help="labels on disk start at 0")


def _add_tree(p):
    p.add_argument("--k", dest="K", type=int, default=None, help="clusters per split (default 100)")
    p.add_argument("--dmax", dest="d_max", type=int, default=None, help="maximum depth (default 10)")
    p.add_argument("--preset", choices=["fixed-k", "varied-k"], default=None,
                   help="fixed-k: K=100; varied-k: K=ceil(L^(1/dmax))")


def _add_solver(p):
    p.add_argument("--loss", choices=["squared_hinge", "logistic"], default=None)
    p.add_argument("--lam", type=float, default=None, help="L2 weight (default 1)")
    p.add_argument("--eps", type=float, default=None, help="stopping tolerance (default 0.1)")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lintree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="build a tree (or OVR) model and write a size report")
    _add_common(p)
    _add_tree(p)
    _add_solver(p)
    p.add_argument("--ovr", action="store_true", default=None, help="train the one-vs-rest baseline")

    p = sub.add_parser("estimate", help="size report from the label tree alone, no training")
    _add_common(p)
    _add_tree(p)
    p.add_argument("--compact", action="store_true", default=None, help="drop unused features first")
    p.add_argument("--raw-nnz-ratio", action="store_true", default=None,
                   help="also report nnz_bound/(nL) without the 1.5 index overhead")

    p = sub.add_parser("analyze", help="balanced-tree ratio curves, alpha thresholds, cost terms")
    _add_common(p, data=False)
    p.add_argument("--L", dest="L", type=int, default=None)
    p.add_argument("--K", dest="K", type=int, default=None)
    p.add_argument("--depths", type=_range, default=None, help="e.g. 2-5 (default 2..D)")
    p.add_argument("--alphas", type=_float_list, default=None, help="comma list (default 0.3,0.4,0.5,0.6)")
    p.add_argument("--ell", type=float, default=None, help="instances, for cost estimates")
    p.add_argument("--nbar", type=float, default=None, help="mean non-zeros per instance")
    p.add_argument("--c", type=float, default=None, help="labels-per-instance constant")
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=float, default=None)

    for name, text in (("predict", "write top-k predictions"), ("eval", "precision@k on a labelled set")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--model", type=Path, required=False)
        p.add_argument("--beam-width", dest="beam_width", type=int, default=None)
        if name == "predict":
            p.add_argument("--top", dest="top", type=int, default=None, help="labels per instance")
        else:
            p.add_argument("--k-list", dest="k_list", type=_int_list, default=None)

    p = sub.add_parser("prune", help="zero weights in [-tau, tau]")
    _add_common(p, data=False)
    p.add_argument("--model", type=Path)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--output", type=Path, default=None, help="pruned model path")

    p = sub.add_parser("alpha-stats", help="per-node feature reduction ratios")
    _add_common(p)
    _add_tree(p)
    p.add_argument("--compact", action="store_true", default=None)
    return parser


DEFAULTS = {
    "out": ".", "emit": "csv", "threads": None, "seed": 1, "zero_based": False,
    "zero_based_labels": False, "K": 100, "d_max": 10, "preset": None, "loss": "squared_hinge",
    "lam": 1.0, "eps": 0.1, "max_iter": 1000, "ovr": False, "compact": False, "raw_nnz_ratio": False,
    "L": int(2e8), "depths": None, "alphas": [0.3, 0.4, 0.5, 0.6], "ell": 1e5, "nbar": 100.0,
    "c": 1.0, "kmeans_iters": 10.0, "beam_width": 10, "top": 5, "k_list": [1, 3, 5], "tau": 0.1,
    "output": None,
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults < TOML file < explicit flags."""
    cfg = dict(DEFAULTS)
    if args.command == "analyze":
        cfg["K"] = 100
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            file_cfg = tomllib.load(fh)
        section = file_cfg.get(args.command, {})
        merged = {k: v for k, v in file_cfg.items() if not isinstance(v, dict)}
        merged.update(section)
        for key, value in merged.items():
            key = key.replace("-", "_")
            if key in ("depths",) and isinstance(value, str):
                value = _range(value)
            cfg[key] = value
    for key, value in vars(args).items():
        if value is not None and key != "config":
            cfg[key] = value
    cfg["command"] = args.command
    if cfg.get("threads") is None:
        cfg["threads"] = os.cpu_count() or 1
    for key in ("data", "meta", "model", "out", "output"):
        if cfg.get(key) is not None:
            cfg[key] = Path(cfg[key])
    if cfg["command"] in ("train", "estimate", "alpha-stats", "predict", "eval") and not cfg.get("data"):
        raise UsageError("--data is required")
    if cfg["command"] in ("predict", "eval", "prune") and not cfg.get("model"):
        raise UsageError("--model is required")
    if cfg["K"] is not None and cfg["K"] < 2:
        raise UsageError("K must be at least 2")
    if cfg["d_max"] < 1:
        raise UsageError("dmax must be at least 1")
    if cfg["tau"] < 0:
        raise UsageError("tau must be non-negative")
    return cfg


def _jsonable(cfg: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())}


def _write_table(cfg, name: str, header: list[str], rows: list) -> Path:
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if cfg["emit"] == "json":
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump([dict(zip(header, r)) for r in rows], fh, indent=1)
            fh.write("\n")
    return path


def _load_data(cfg, path=None, n_features=None, n_labels=None):
    path = path or cfg["data"]
    n = cfg.get("n_features") if n_features is None else n_features
    L = cfg.get("n_labels") if n_labels is None else n_labels
    if cfg.get("meta"):
        meta = read_metadata(cfg["meta"])
        n = meta.get("n", n) if n is None else n
        L = meta.get("L", L) if L is None else L
    ds = parse_libsvm_multilabel(Path(path), n_features=n, n_labels=L, zero_based=cfg["zero_based"],
                                 zero_based_labels=cfg["zero_based_labels"])
    if ds.n_instances == 0:
        raise ParseError(f"{path}: no instances")
    return ds


def varied_k(L: int, d_max: int) -> int:
    """Smallest integer K with K**d_max >= L, i.e. ceil of the d_max-th root."""
    K = max(2, math.ceil(L ** (1.0 / d_max)))
    while K > 2 and (K - 1) ** d_max >= L:
        K -= 1
    while K**d_max < L:
        K += 1
    return K


def _tree_K(cfg, ds) -> int:
    if cfg.get("preset") == "varied-k":
        return varied_k(ds.n_labels, cfg["d_max"])
    if cfg.get("preset") == "fixed-k":
        return 100
    return cfg["K"]


def _size_rows(est):
    return [(ns.node, ns.depth, ns.children, ns.used_features) for ns in est.per_node]


def _report_size(cfg, est, raw=False):
    _write_table(cfg, "size_report.csv", ["node", "depth", "children", "used_features"], _size_rows(est))
    print(f"tree nnz bound  {est.tree_nnz_bound}")
    print(f"tree bytes      {est.tree_bytes}")
    print(f"ovr bytes       {est.ovr_bytes}")
    print(f"size ratio      {est.ratio:.6f}  (12-byte sparse tree / 8-byte dense OVR)")
    if raw:
        print(f"raw nnz ratio   {est.raw_ratio:.6f}")


def cmd_train(cfg):
    ds = _load_data(cfg)
    loss = LossSpec(cfg["loss"], cfg["lam"])
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg["ovr"]:
        model = train_ovr(ds, loss, eps=cfg["eps"], max_iter=cfg["max_iter"], seed=cfg["seed"],
                          n_jobs=cfg["threads"])
        save_model(model, out / "model.bin")
        print(f"ovr classifiers {model.n_classifiers}  nnz {model.nnz}  bytes {model_bytes(model)}")
    else:
        K = _tree_K(cfg, ds)
        cfg["K_resolved"] = K
        tree = build_label_tree(ds, K=K, d_max=cfg["d_max"], seed=cfg["seed"], n_jobs=cfg["threads"])
        est = analysis.estimate_tree_size(ds, tree)
        _report_size(cfg, est)
        model = train_tree(ds, tree, loss, eps=cfg["eps"], max_iter=cfg["max_iter"], seed=cfg["seed"],
                           n_jobs=cfg["threads"])
        save_model(model, out / "model.bin")
        with open(out / "tree.json", "w") as fh:
            json.dump(tree.to_dict(), fh, indent=1)
            fh.write("\n")
        print(f"K {K}  depth {tree.depth}  classifiers {model.n_classifiers}")
        print(f"estimated nnz   {est.tree_nnz_bound}")
        print(f"actual nnz      {model.nnz}")
        print(f"actual bytes    {model_bytes(model)}")
    if model.n_unconverged:
        print(f"warning: {model.n_unconverged} problems hit max_iter", file=sys.stderr)
    log.info("trained in %.2fs", time.perf_counter() - t0)
    return EXIT_OK


def _maybe_compact(cfg, ds):
    return compact_features(ds)[0] if cfg["compact"] else ds


def cmd_estimate(cfg):
    ds = _maybe_compact(cfg, _load_data(cfg))
    K = _tree_K(cfg, ds)
    cfg["K_resolved"] = K
    tree = build_label_tree(ds, K=K, d_max=cfg["d_max"], seed=cfg["seed"], n_jobs=cfg["threads"])
    est = analysis.estimate_tree_size(ds, tree)
    print(f"n {ds.n_features}  L {ds.n_labels}  K {K}  depth {tree.depth}  density {ds.density:.6f}")
    _report_size(cfg, est, raw=cfg["raw_nnz_ratio"])
    return EXIT_OK


def cmd_analyze(cfg):
    L, K = cfg["L"], cfg["K"]
    D = analysis.max_depth_D(L, K)
    depths = cfg["depths"] or list(range(2, D + 1))
    rows = analysis.ratio_curve(L, K, depths, cfg["alphas"])
    _write_table(cfg, "ratio_curve.csv", ["d", "alpha", "ratio"], [(d, a, repr(r)) for d, a, r in rows])

    thr_rows = []
    for d in range(2, D + 1):
        if d > 2 and K < 4:
            continue
        thr_rows.append(("ratio_below_one", d, repr(analysis.sub_dense_alpha_bound(K, d, D))))
    claim = analysis.depth_decrease_claim(K, L)
    if claim.d_range:
        lo, hi = claim.d_range
        thr_rows.append(("depth_decreasing", f"{lo}-{hi}", repr(claim.alpha_threshold)))
    thr_rows.append(("alpha_feasible", "", repr(1.0 / K)))
    _write_table(cfg, "thresholds.csv", ["claim", "d", "alpha_threshold"], thr_rows)

    cost = analysis.CostParams(cfg["ell"], cfg["nbar"], cfg["c"], cfg["kmeans_iters"])
    cost_rows = []
    for d in depths:
        cb = analysis.training_cost_estimate(L, K, d, cost)
        cost_rows.append((d, cb.ovr_cost, cb.tree_root, cb.tree_middle, cb.n_middle, cb.tree_last,
                          cb.kmeans_cost, cb.tree_train, cb.inner_term, cb.tree_total))
    _write_table(cfg, "cost.csv", ["d", "ovr_cost", "tree_root", "tree_middle", "n_middle", "tree_last",
                                   "kmeans_cost", "tree_train", "inner_term", "tree_total"], cost_rows)
    print(f"L {L}  K {K}  D {D}")
    for d, a, r in rows:
        print(f"d={d} alpha={a:g} ratio={r:.6f}")
    for name, d, thr in thr_rows:
        print(f"{name} d={d} alpha < {float(thr):.6f}")
    return EXIT_OK


def _model_and_data(cfg):
    model = load_model(cfg["model"])
    ds = _load_data(cfg, n_features=model.n_features, n_labels=model.n_labels)
    return model, ds


def cmd_predict(cfg):
    model, ds = _model_and_data(cfg)
    preds = predict_dataset(model, ds, k=cfg["top"], beam_width=cfg["beam_width"])
    out = cfg["out"]
    out.mkdir(parents=True, exist_ok=True)
    base = 0 if cfg["zero_based_labels"] else 1
    with open(out / "predictions.txt", "w") as fh:
        for p in preds:
            fh.write(p.format(label_base=base) + "\n")
    print(f"wrote {len(preds)} predictions to {out / 'predictions.txt'}")
    return EXIT_OK


def cmd_eval(cfg):
    model, ds = _model_and_data(cfg)
    ks = cfg["k_list"]
    preds = predict_dataset(model, ds, k=max(ks), beam_width=cfg["beam_width"])
    metrics = precision_at_k(preds, ds.labels, ks)
    _write_table(cfg, "metrics.csv", ["metric", "value"], [(f"P@{k}", f"{v:.2f}") for k, v in metrics.items()])
    print(format_metrics(metrics))
    return EXIT_OK


def cmd_prune(cfg):
    model = load_model(cfg["model"])
    pruned = prune_weights(model, cfg["tau"])
    dest = cfg["output"] or cfg["out"] / (Path(cfg["model"]).stem + ".pruned.bin")
    dest.parent.mkdir(parents=True, exist_ok=True)
    save_model(pruned, dest)
    print(f"nnz {model.nnz} -> {pruned.nnz}  (removed {model.nnz - pruned.nnz})")
    print(f"wrote {dest}")
    return EXIT_OK


def cmd_alpha_stats(cfg):
    ds = _maybe_compact(cfg, _load_data(cfg))
    K = _tree_K(cfg, ds)
    cfg["K_resolved"] = K
    tree = build_label_tree(ds, K=K, d_max=cfg["d_max"], seed=cfg["seed"], n_jobs=cfg["threads"])
    stats = analysis.alpha_stats(ds, tree)
    rows = []
    for depth, hist in stats.histograms.items():
        for lo, count in zip(stats.bin_edges[:-1], hist):
            rows.append((depth, f"{lo:.2f}", int(count), repr(stats.weighted_avg[depth])))
    _write_table(cfg, "alpha_hist.csv", ["depth", "bin_lo", "count", "weighted_avg"], rows)
    _write_table(cfg, "alpha_nodes.csv", ["node", "depth", "children", "alpha"],
                 [(nid, tree.nodes[nid].depth, len(tree.nodes[nid].children), repr(a))
                  for nid, a in sorted(stats.per_node.items())])
    for depth, avg in stats.weighted_avg.items():
        print(f"depth {depth}  weighted alpha {avg:.4f}  nodes {int(stats.histograms[depth].sum())}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "estimate": cmd_estimate, "analyze": cmd_analyze, "predict": cmd_predict,
    "eval": cmd_eval, "prune": cmd_prune, "alpha-stats": cmd_alpha_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        cfg["out"].mkdir(parents=True, exist_ok=True)
        code = COMMANDS[cfg["command"]](cfg)
        with open(cfg["out"] / "config.json", "w") as fh:
            json.dump(_jsonable(cfg), fh, indent=1)
            fh.write("\n")
        return code
    except UsageError as exc:
        print(f"lintree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ModelFormatError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"lintree: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"lintree: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lintree: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
