"""Command-line entry points.

Subcommands: train, eval, delta, distortion, estimate-curvature.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
Options may come from a JSON config file (--config); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import curvature, graphs, training
from .manifold import ManifoldError
from .training import RunConfig, TrainingDiverged


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="curvgnn",
                description="Hyperbolic GNN with adaptive curvature search")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run the curvature-search training loop")
    tr.add_argument("--config", help="JSON file of RunConfig fields")
    tr.add_argument("--edges")
    tr.add_argument("--features")
    tr.add_argument("--labels")
    tr.add_argument("--synthetic-tree", type=int, dest="synthetic_tree_depth",
                    help="train on a balanced binary tree of this depth")
    tr.add_argument("--task", choices=["lp", "nc"])
    tr.add_argument("--seed", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--dim", type=int)
    tr.add_argument("--layers", type=int, dest="n_layers")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--dropout", type=float)
    tr.add_argument("--zeta0", type=float)
    tr.add_argument("--gamma", type=float)
    tr.add_argument("--alpha", type=float)
    tr.add_argument("--beta", type=float)
    tr.add_argument("--val-frac", type=float, dest="val_frac")
    tr.add_argument("--test-frac", type=float, dest="test_frac")
    tr.add_argument("--no-rl", action="store_true",
                    help="fixed-curvature control run (RL disabled)")
    tr.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="evaluate a saved checkpoint on its test split")
    ev.add_argument("--checkpoint", required=True)

    de = sub.add_parser("delta", help="Gromov delta-hyperbolicity of a graph")
    de.add_argument("--edges", required=True)
    de.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    de.add_argument("--samples", type=int, default=5000)
    de.add_argument("--seed", type=int, default=0)

    di = sub.add_parser("distortion",
                        help="sweep embedding distortion over a curvature grid")
    di.add_argument("--edges", required=True)
    di.add_argument("--embeddings", help=".npy of ambient coordinates (n, d+1)")
    di.add_argument("--tree-layout", type=float, dest="tree_layout",
                    help="instead of --embeddings, lay the graph out as a tree "
                         "with this edge length")
    di.add_argument("--zeta", type=float, default=1.0,
                    help="curvature the embeddings live at")
    di.add_argument("--grid", default="0.2:4.0:0.2", help="start:stop:step, inclusive")
    di.add_argument("--seed", type=int, default=0)

    ec = sub.add_parser("estimate-curvature",
                        help="parallelogram-law curvature estimate of an embedding")
    ec.add_argument("--edges", required=True)
    ec.add_argument("--embeddings", required=True)
    ec.add_argument("--zeta", type=float, default=1.0)
    ec.add_argument("--samples", type=int, default=2, help="quadruples per node")
    ec.add_argument("--seed", type=int, default=0)
    return p


_TRAIN_FIELDS = (
    "edge_path", "feature_path", "label_path", "synthetic_tree_depth", "task",
    "seed", "epochs", "dim", "n_layers", "lr", "dropout", "zeta0", "gamma",
    "alpha", "beta", "val_frac", "test_frac",
)


def _train_config(args) -> RunConfig:
    fields: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                fields.update(json.load(fh))
            except json.JSONDecodeError as e:
                raise graphs.DataError(f"bad config JSON: {e}", args.config, e.lineno)
    overrides = {
        "edge_path": args.edges, "feature_path": args.features,
        "label_path": args.labels,
        "synthetic_tree_depth": args.synthetic_tree_depth,
        "task": args.task, "seed": args.seed, "epochs": args.epochs,
        "dim": args.dim, "n_layers": args.n_layers, "lr": args.lr,
        "dropout": args.dropout, "zeta0": args.zeta0, "gamma": args.gamma,
        "alpha": args.alpha, "beta": args.beta,
        "val_frac": args.val_frac, "test_frac": args.test_frac,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_rl:
        fields["rl_enabled"] = False
    unknown = set(fields) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown config fields: {sorted(unknown)}")
    return RunConfig(**fields)


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(tok) for tok in text.split(":"))
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected start:stop:step")
    if step <= 0 or stop < start:
        raise UsageError("grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step)) + 1
    grid = start + step * np.arange(n)
    return grid[grid <= stop + 1e-9]


def _load_embeddings(args, g: graphs.Graph) -> np.ndarray:
    if args.embeddings:
        emb = np.load(args.embeddings)
        if emb.ndim != 2 or emb.shape[0] != g.n_nodes:
            raise graphs.DataError(
                f"embeddings shape {emb.shape} does not match {g.n_nodes} nodes")
        return emb
    if getattr(args, "tree_layout", None):
        return curvature.tree_layout_hyperbolic(g, args.zeta, args.tree_layout)
    raise UsageError("give --embeddings or --tree-layout")


def _cmd_train(args) -> int:
    config = _train_config(args)
    result = training.train(config, out_dir=args.out)
    print(f"best_val={result.best_val_metric:.4f} epoch={result.best_epoch} "
          f"test={result.test_metric:.4f} zetas={result.final_zetas} "
          f"distortion={result.final_distortion:.4f}")
    return 0


def _cmd_eval(args) -> int:
    out = training.evaluate_checkpoint(args.checkpoint)
    print(json.dumps(out))
    return 0


def _cmd_delta(args) -> int:
    g = graphs.load_graph(args.edges)
    d = graphs.gromov_delta(g, mode=args.mode,
                            n_samples=args.samples if args.mode == "sampled" else None,
                            seed=args.seed)
    if args.mode == "sampled":
        print(f"{d:g} (lower bound from {args.samples} sampled quadruples)")
    else:
        print(f"{d:g}")
    return 0


def _cmd_distortion(args) -> int:
    g = graphs.load_graph(args.edges)
    emb = _load_embeddings(args, g)
    grid = _parse_grid(args.grid)
    for z, rep in curvature.distortion_sweep(g, emb, args.zeta, grid, seed=args.seed):
        print(f"{z:g},{rep.mean_distortion:.6f},{rep.pairs_used},{rep.pairs_excluded}")
    return 0


def _cmd_estimate(args) -> int:
    g = graphs.load_graph(args.edges)
    emb = np.load(args.embeddings)
    est = curvature.estimate_kappa(g, emb, args.zeta, n_s=args.samples,
                                   seed=args.seed)
    print(f"{est.kappa:.6g}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "delta": _cmd_delta,
    "distortion": _cmd_distortion,
    "estimate-curvature": _cmd_estimate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        if isinstance(e, (graphs.DataError, ManifoldError)):
            print(f"data error: {e}", file=sys.stderr)
            return 2
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except TrainingDiverged as e:
        print(f"diverged: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
