"""Graph attention training and rogue-node benchmarks.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import binfmt
from .attention_analysis import write_attention_csv
from .config import ConfigError, RunConfig, load_config
from .gat_model import load_checkpoint, model_forward
from .graph_store import dataset_from_bytes, load_planetoid, save_dataset
from .perturbation import NoiseSpec, inject_rogue_nodes, poisoned_from_bytes, save_poisoned
from .runner import (
    load_inputs,
    model_input,
    poison_seed,
    run_benchmark,
    run_train,
    write_benchmark,
)

log = logging.getLogger("robustgat")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _plural(n: int, word: str, plural: str | None = None) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {plural or word + 's'}"


def _config(args) -> RunConfig:
    rc = load_config(args.config) if args.config else RunConfig().validate()
    if args.seed is not None:
        rc.set("run.base_seed", args.seed)
    if args.out is not None:
        rc.set("run.output_dir", args.out)
    return rc


def cmd_prepare(args) -> int:
    ds = load_planetoid(args.content, args.cites)
    out = args.out or "dataset.bin"
    save_dataset(out, ds, tag=args.tag)
    print(f"{_plural(ds.n_nodes, 'node')}, {_plural(ds.n_features, 'feat')}, "
          f"{_plural(ds.n_classes, 'class', 'classes')}, "
          f"{_plural(len(ds.edges), 'edge')}")
    if ds.skipped_cites:
        print(f"skipped {_plural(ds.skipped_cites, 'citation line')} with unknown ids", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    rc = _config(args)
    summary = run_train(rc, rc["run.output_dir"])
    print(f"test_acc={summary['test_acc']:.4f} best_epoch={summary['best_epoch']} "
          f"-> {rc['run.output_dir']}")
    return 0


def cmd_attack(args) -> int:
    rc = _config(args)
    ds, adj, _ = load_inputs(rc)
    _, spec = rc.grid()[0]
    seed = rc["run.base_seed"]
    spec = NoiseSpec(spec.n_rogue, spec.edges_per_rogue, spec.feature_model, poison_seed(seed, 0, 0))
    pg = inject_rogue_nodes(ds, adj, spec)
    os.makedirs(rc["run.output_dir"], exist_ok=True)
    path = os.path.join(rc["run.output_dir"], "poisoned.bin")
    save_poisoned(path, pg, ds.labels)
    added = len(pg.adj.undirected_edges()) - len(adj.undirected_edges())
    print(f"{_plural(spec.n_rogue, 'rogue node')}, {_plural(added, 'added edge')}, "
          f"checksum {pg.checksum()[:16]} -> {path}")
    return 0


def _load_graph(path):
    """Cached dataset or poisoned graph: (features, adj, rogue_ids)."""
    data = binfmt.read(path)
    if data[8:12] == b"PGRF":
        pg, _ = poisoned_from_bytes(data)
        return pg.features, pg.adj, pg.rogue_ids
    ds, adj, _ = dataset_from_bytes(data)
    return ds.features, adj, np.empty(0, np.int64)


def cmd_analyze(args) -> int:
    feats, adj, rogue_ids = _load_graph(args.graph)
    params, cfg = load_checkpoint(args.checkpoint, in_dim=feats.shape[1])
    _, attn = model_forward(model_input(feats), adj, params, cfg)
    out = args.out or "attention.csv"
    if os.path.isdir(out):
        out = os.path.join(out, "attention.csv")
    n = write_attention_csv(out, attn, adj, rogue_ids)
    print(f"{_plural(n, 'row')} -> {out}")
    return 0


def cmd_benchmark(args) -> int:
    rc = _config(args)
    result = run_benchmark(rc, jobs=args.jobs)
    write_benchmark(result, rc["run.output_dir"])
    failed = sum(1 for c in result.cells if c.error)
    print(f"{_plural(len(result.rows), 'row')} ({failed} failed cells) -> {rc['run.output_dir']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="override run.base_seed")
    common.add_argument("--out", help="output directory (file for prepare/analyze)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="robustgat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prepare", parents=[common], help="parse Planetoid files into a cache")
    s.add_argument("content")
    s.add_argument("cites")
    s.add_argument("--tag", default="", help="dataset tag stored in the cache")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", parents=[common], help="train one model")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", parents=[common], help="write a poisoned graph")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("analyze", parents=[common], help="attention statistics CSV")
    s.add_argument("checkpoint")
    s.add_argument("graph", help="cached dataset or poisoned graph file")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("benchmark", parents=[common], help="paired baseline/robust grid")
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"robustgat: config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"robustgat: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
