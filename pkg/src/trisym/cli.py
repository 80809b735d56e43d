"""Command-line surface.

Every command writes one machine-readable JSON report to stdout (or --out)
and keeps human-oriented messages on stderr. Exit codes: 0 success, 2 usage
error, 3 data error, 4 numerical failure, 5 verification beyond tolerance.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import ndarr as nd
from .errors import CheckFailure, DataError, NumericError, UsageError
from .graphdata import gen_sbm, load_dataset, save_dataset
from .rng import stream
from .symmetry import equivariant_basis_dim
from .trainer import TrainConfig, evaluate, train, zeroshot
from .tsgnn import (
    Mixers,
    NodeState,
    load_checkpoint,
    save_checkpoint,
    tsgnn_layer_forward,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CHECK = 5


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--aggregator", choices=("sum", "mean", "attention"), default="mean")
    p.add_argument("--pooling", choices=("sum", "mean"), default="mean")
    p.add_argument("--ridge", type=float, default=1e-4)
    p.add_argument("--nonlinearity", choices=("relu", "leaky_relu"), default="relu")
    p.add_argument("--no-mixers", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trisym", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset directory")
    p.add_argument("--kind", choices=("sbm",), default="sbm")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--nodes-per-class", type=int, required=True)
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--feat-dim", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="train_out", help="directory for checkpoints and report")

    for name in ("eval", "zeroshot"):
        p = sub.add_parser(name, help=f"{name} a checkpoint on a dataset")
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        if name == "eval":
            p.add_argument("--split", choices=("train", "val", "test"), default="test")
        p.add_argument("--out")

    p = sub.add_parser("symcheck", help="randomized equivariance suite")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="checkpoint to check instead of random models")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--aggregator", choices=("sum", "mean", "attention"),
                   help="restrict the sweep to one aggregator (default: all)")
    p.add_argument("--pooling", choices=("sum", "mean"),
                   help="restrict the sweep to one pooling (default: both)")
    p.add_argument("--mixers", choices=("on", "off"),
                   help="restrict the sweep to one mixer setting (default: both)")
    p.add_argument("--out")

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    _add_arch_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("basis", help="dimension of an equivariant linear map space")
    p.add_argument("--group", choices=("triple", "dss", "deepsets"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, default=0)
    p.add_argument("--c", type=int, default=0)
    p.add_argument("--k1", type=int, default=1)
    p.add_argument("--k2", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("perfscan", help="layer-forward timing versus edge count")
    p.add_argument("--sizes", required=True, help="comma-separated node counts")
    p.add_argument("--feat-dim", type=int, default=32)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--degree", type=float, default=16.0)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--aggregator", choices=("sum", "mean", "attention"), default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return ap


# ---------------------------------------------------------------------------
# command bodies


def _cmd_gen(args) -> dict:
    graph = gen_sbm(
        classes=args.classes,
        nodes_per_class=args.nodes_per_class,
        p_in=args.p_in,
        p_out=args.p_out,
        feature_dim=args.feat_dim,
        feature_noise=args.noise,
        seed=args.seed,
    )
    save_dataset(args.out, graph)
    _log(f"wrote {graph.num_nodes} nodes / {graph.num_edges} edges to {args.out}")
    return {
        "version": 1,
        "command": "gen",
        "kind": args.kind,
        "out": str(args.out),
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "num_classes": graph.num_classes,
        "feature_dim": graph.feature_dim,
        "seed": args.seed,
    }


def _cmd_train(args) -> dict:
    config = TrainConfig.from_json(args.config)
    result = train(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.json", result.model)
    save_checkpoint(out_dir / "checkpoint_best.json", result.best_model)
    (out_dir / "report.jsonl").write_text(
        result.report.to_jsonl(strict=config.strict), encoding="utf-8"
    )
    _log(
        f"trained {config.epochs} epochs; final val {result.report.final_val_acc:.4f}, "
        f"best val {result.report.best_val_acc:.4f} (epoch {result.report.best_epoch}); "
        f"wall time {sum(result.report.epoch_seconds):.1f}s"
    )
    return {
        "version": 1,
        "command": "train",
        "out": str(out_dir),
        "epochs": config.epochs,
        "final_loss": result.report.losses[-1],
        "final_val_acc": result.report.final_val_acc,
        "final_test_acc": result.report.final_test_acc,
        "best_epoch": result.report.best_epoch,
        "best_val_acc": result.report.best_val_acc,
        "best_test_acc": result.report.best_test_acc,
        "checkpoint": str(out_dir / "checkpoint.json"),
        "checkpoint_best": str(out_dir / "checkpoint_best.json"),
    }


def _cmd_eval(args, command: str) -> dict:
    model = load_checkpoint(args.model)
    graph = load_dataset(args.data)
    if command == "zeroshot":
        acc = zeroshot(model, graph)
        split = "test"
    else:
        split = args.split
        idx = {"train": graph.train_idx, "val": graph.val_idx, "test": graph.test_idx}[split]
        acc = evaluate(model, graph, idx)
    return {
        "version": 1,
        "command": command,
        "model": str(args.model),
        "data": str(args.data),
        "split": split,
        "accuracy": acc,
    }


def _cmd_symcheck(args) -> dict:
    from .verify import run_equivariance_suite

    model = load_checkpoint(args.model) if args.model else None
    kwargs = dict(num_layers=args.layers, hidden_width=args.hidden)
    if args.aggregator:
        kwargs["aggregators"] = (args.aggregator,)
    if args.pooling:
        kwargs["poolings"] = (args.pooling,)
    if args.mixers:
        kwargs["mixer_options"] = (args.mixers == "on",)
    result = run_equivariance_suite(args.trials, args.tol, seed=args.seed, model=model, **kwargs)
    report = {
        "version": 1,
        "command": "symcheck",
        "trials": result.trials,
        "tol": args.tol,
        "max_deviation": result.max_deviation,
        "worst": result.worst,
        "pass": result.passed,
    }
    if not result.passed:
        raise CheckFailure(json.dumps(report, sort_keys=True))
    return report


def _cmd_gradcheck(args) -> dict:
    from .verify import run_grad_suite

    report = run_grad_suite(
        aggregator=args.aggregator,
        tol=args.tol,
        seed=args.seed,
        num_layers=args.layers,
        hidden_width=args.hidden,
        pooling=args.pooling,
        mixers=not args.no_mixers,
    )
    blob = {
        "version": 1,
        "command": "gradcheck",
        "tol": args.tol,
        "max_rel_err": report.max_rel_err,
        "per_param": report.per_param,
        "pass": report.passed,
    }
    if not report.passed:
        raise CheckFailure(json.dumps(blob, sort_keys=True))
    return blob


def _cmd_basis(args) -> dict:
    result = equivariant_basis_dim(args.group, args.n, args.f, args.c, args.k1, args.k2)
    return {
        "version": 1,
        "command": "basis",
        "group": args.group,
        "k1": args.k1,
        "k2": args.k2,
        "dimension": result.dimension,
    }


def _perfscan_entry(n: int, feat_dim: int, hidden: int, degree: float, reps: int,
                    aggregator: str, seed: int) -> dict:
    classes = 4
    per_class = max(2, n // classes)
    n_eff = classes * per_class
    d_in = degree * 0.75
    d_out = degree * 0.25
    p_in = min(1.0, d_in / max(per_class - 1, 1))
    p_out = min(p_in, d_out / max(n_eff - per_class, 1))
    graph = gen_sbm(classes, per_class, p_in, p_out, feat_dim, 0.5, seed)

    rng = stream(seed, "perfscan", n)
    feat = rng.standard_normal((n_eff, feat_dim, hidden))
    lab = rng.standard_normal((n_eff, classes, hidden))
    # A mid-stack (hidden -> hidden) layer, where the per-layer cost lives.
    from .tsgnn import TsGnnLayerParams

    s = 1.0 / np.sqrt(hidden)
    params = TsGnnLayerParams(
        [rng.uniform(-s, s, size=(hidden, hidden)) for _ in range(16)],
        rng.uniform(-s, s, size=hidden) if aggregator == "attention" else None,
        rng.uniform(-s, s, size=hidden) if aggregator == "attention" else None,
    )
    mixers = Mixers(np.zeros((feat_dim + 1, classes)), np.zeros((classes + 1, feat_dim)), 1e-4, 1)
    edges = nd.build_edge_index(graph.indptr, graph.indices)
    state = NodeState(nd.wrap(feat), nd.wrap(lab))

    best = None
    for _ in range(reps):
        t0 = time.perf_counter()
        tsgnn_layer_forward(edges, state, params, mixers, aggregator, "mean")
        dt = time.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    return {"nodes": n_eff, "edges": graph.num_edges, "seconds": best}


def _cmd_perfscan(args) -> dict:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes must be comma-separated integers: {exc}") from exc
    if len(sizes) < 2:
        raise UsageError("--sizes needs at least two entries")
    entries = [
        _perfscan_entry(n, args.feat_dim, args.hidden, args.degree, args.reps,
                        args.aggregator, args.seed)
        for n in sizes
    ]
    ratios = [
        entries[i + 1]["seconds"] / entries[i]["seconds"] for i in range(len(entries) - 1)
    ]
    for e in entries:
        _log(f"nodes={e['nodes']:>8} edges={e['edges']:>9} layer forward {e['seconds']*1e3:8.2f} ms")
    return {
        "version": 1,
        "command": "perfscan",
        "feat_dim": args.feat_dim,
        "hidden": args.hidden,
        "aggregator": args.aggregator,
        "entries": entries,
        "ratios": ratios,
    }


def run_command(argv: list[str]) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "gen":
            report = _cmd_gen(args)
        elif args.command == "train":
            report = _cmd_train(args)
        elif args.command in ("eval", "zeroshot"):
            report = _cmd_eval(args, args.command)
        elif args.command == "symcheck":
            report = _cmd_symcheck(args)
        elif args.command == "gradcheck":
            report = _cmd_gradcheck(args)
        elif args.command == "basis":
            report = _cmd_basis(args)
        elif args.command == "perfscan":
            report = _cmd_perfscan(args)
        else:  # pragma: no cover - argparse enforces choices
            raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return EXIT_USAGE
    except DataError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except CheckFailure as exc:
        # The failing report is still emitted for machine consumption.
        _emit(json.loads(str(exc)), getattr(args, "out", None))
        _log("check failed: deviation beyond tolerance")
        return EXIT_CHECK
    _emit(report, getattr(args, "out", None))
    return EXIT_OK


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
