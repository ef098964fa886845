"""Experiment orchestration: data loading, single runs and paired benchmarks."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attention_analysis import mean_norm_entropy, mean_rogue_mass
from .config import RunConfig
from .gat_model import evaluate, save_checkpoint, train
from .graph_store import build_csr, load_dataset, load_planetoid, make_split, row_normalize
from .perturbation import NoiseSpec, inject_rogue_nodes
from .synthetic import planted_citation_graph, two_cluster_graph

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "case", "n_rogue", "edges_per_rogue", "variant", "seed", "test_acc",
    "mean_norm_entropy", "mean_rogue_mass", "best_epoch", "wall_time_s",
]
AGGREGATE_COLUMNS = [
    "case", "n_rogue", "edges_per_rogue", "variant", "n", "test_acc_mean", "test_acc_std",
    "mean_norm_entropy_mean", "mean_rogue_mass_mean", "lambda",
]
VARIANTS = ("baseline", "robust")


def load_inputs(rc: RunConfig):
    """Dataset, clean CSR and split described by the ``data.*``/``split.*`` keys."""
    syn = rc["data.synthetic"]
    if syn == "two_cluster":
        ds, split = two_cluster_graph(seed=rc["data.synthetic_seed"])
        return ds, build_csr(ds.edges, ds.n_nodes), split
    if syn == "planted":
        ds = planted_citation_graph(topic_share=0.15, topic_vocab=40, seed=rc["data.synthetic_seed"])
        adj = build_csr(ds.edges, ds.n_nodes)
    elif rc["data.cache"]:
        ds, adj, _ = load_dataset(rc["data.cache"])
    elif rc["data.content"] and rc["data.cites"]:
        ds = load_planetoid(rc["data.content"], rc["data.cites"])
        adj = build_csr(ds.edges, ds.n_nodes)
    else:
        raise FileNotFoundError("config names no dataset (data.cache or data.content/data.cites)")
    split = make_split(ds, rc["split.per_class_train"], rc["split.n_val"], rc["split.n_test"],
                       rc["split.seed"])
    return ds, adj, split


def model_input(features, normalize: bool = True):
    return row_normalize(features) if normalize else np.asarray(features, dtype=np.float64)


def poison_seed(base_seed: int, point: int, seed_idx: int) -> int:
    return int(np.random.SeedSequence([base_seed, point, seed_idx]).generate_state(1)[0])


def run_train(rc: RunConfig, out_dir, seed: int | None = None) -> dict:
    """Train one model as configured; writes ``report.json`` and ``checkpoint.bin``."""
    ds, adj, split = load_inputs(rc)
    seed = rc["run.base_seed"] if seed is None else seed
    case, spec = rc.grid()[0]
    spec = NoiseSpec(spec.n_rogue, spec.edges_per_rogue, spec.feature_model,
                     poison_seed(seed, 0, 0))
    pg = inject_rogue_nodes(ds, adj, spec)
    X = model_input(pg.features, rc["data.normalize"])
    cfg = rc.gat_config(seed=seed, reg=rc.reg_spec())
    t0 = time.perf_counter()
    rep = train(X, ds.labels, pg.adj, split, cfg, n_classes=ds.n_classes)
    log.info("trained in %.1fs", time.perf_counter() - t0)
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), rep.final_params, cfg,
                    X.shape[1], ds.n_classes)
    summary = rep.summary()
    summary.update({
        "dataset": {"n_nodes": ds.n_nodes, "n_features": ds.n_features,
                    "n_classes": ds.n_classes, "n_edges": int(len(ds.edges))},
        "noise": {"n_rogue": spec.n_rogue, "edges_per_rogue": spec.edges_per_rogue,
                  "feature_model": spec.feature_model.value, "seed": spec.seed,
                  "checksum": pg.checksum()},
        "mean_norm_entropy": mean_norm_entropy(rep.final_attention, pg.adj),
        "mean_rogue_mass": mean_rogue_mass(rep.final_attention, pg.adj, pg.rogue_ids),
    })
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


@dataclass
class CellResult:
    point: int
    seed_idx: int
    lam: float
    seed: int
    test_acc: float
    val_acc: float
    norm_entropy: float
    rogue_mass: float
    best_epoch: int
    wall_time_s: float
    checksum: str
    error: str = ""


_STATE: dict = {}


def _init_worker(rc: RunConfig, ds, adj, split):
    _STATE.update(rc=rc, ds=ds, adj=adj, split=split)


def _run_cell(job) -> CellResult:
    point, seed_idx, lam = job
    rc, ds, adj, split = _STATE["rc"], _STATE["ds"], _STATE["adj"], _STATE["split"]
    base = rc["run.base_seed"]
    seed = base + seed_idx
    _, spec = rc.grid()[point]
    spec = NoiseSpec(spec.n_rogue, spec.edges_per_rogue, spec.feature_model,
                     poison_seed(base, point, seed_idx))
    t0 = time.perf_counter()
    checksum = ""
    try:
        pg = inject_rogue_nodes(ds, adj, spec)
        checksum = pg.checksum()
        X = model_input(pg.features, rc["data.normalize"])
        cfg = rc.gat_config(seed=seed, reg=rc.reg_spec(lam))
        rep = train(X, ds.labels, pg.adj, split, cfg, n_classes=ds.n_classes)
        return CellResult(
            point, seed_idx, lam, seed, rep.test_acc,
            evaluate(rep.final_params, X, pg.adj, ds.labels, split.val_idx, cfg),
            mean_norm_entropy(rep.final_attention, pg.adj),
            mean_rogue_mass(rep.final_attention, pg.adj, pg.rogue_ids),
            rep.best_epoch, time.perf_counter() - t0, checksum,
        )
    except Exception as exc:  # a failed cell is recorded, the benchmark continues
        log.warning("cell point=%d seed=%d lambda=%g failed: %s", point, seed, lam, exc)
        nan = float("nan")
        return CellResult(point, seed_idx, lam, seed, nan, nan, nan, nan, -1,
                          time.perf_counter() - t0, checksum, error=str(exc))


@dataclass
class BenchmarkResult:
    rows: list[dict]
    aggregates: list[dict]
    selection: list[dict]
    cells: list[CellResult]
    config_text: str = ""
    reg_kind: str = ""


def _lambdas(rc: RunConfig) -> list[float]:
    lams = [float(x) for x in rc["reg.sweep"]] or [rc["reg.lambda"]]
    if rc.reg_spec().kind.value == "none":
        lams = [0.0]
    return sorted(set([0.0] + lams))


def _mean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return float(np.mean(xs)) if xs else float("nan")


def _std(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return float(np.std(xs)) if xs else float("nan")


def run_benchmark(rc: RunConfig, jobs: int = 1) -> BenchmarkResult:
    """Paired baseline/robust runs over the configured attack grid.

    At every grid point each seed gets one poisoned graph shared by all
    variants. With ``reg.sweep`` set, the robust lambda of a grid point is
    the sweep value with the best mean validation accuracy there.
    """
    ds, adj, split = load_inputs(rc)
    grid = rc.grid()
    lams = _lambdas(rc)
    n_seeds = rc["run.n_seeds"]
    work = [(p, k, lam) for p in range(len(grid)) for k in range(n_seeds) for lam in lams]
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(rc, ds, adj, split)) as pool:
            cells = list(pool.map(_run_cell, work))
    else:
        _init_worker(rc, ds, adj, split)
        cells = [_run_cell(w) for w in work]
    by_key = {(c.point, c.seed_idx, c.lam): c for c in cells}

    sweep = bool(rc["reg.sweep"])
    rows, aggregates, selection = [], [], []
    for p, (case, spec) in enumerate(grid):
        stats = {lam: [by_key[(p, k, lam)] for k in range(n_seeds)] for lam in lams}
        if sweep:
            best = max(lams, key=lambda l: (_mean([c.val_acc for c in stats[l]]), -l))
        else:
            best = lams[-1]
        for lam in lams:
            selection.append({
                "case": case, "n_rogue": spec.n_rogue, "edges_per_rogue": spec.edges_per_rogue,
                "lambda": lam,
                "mean_val_acc": _mean([c.val_acc for c in stats[lam]]),
                "mean_norm_entropy": _mean([c.norm_entropy for c in stats[lam]]),
                "selected": lam == best,
            })
        for variant, lam in zip(VARIANTS, (0.0, best)):
            group = stats[lam]
            for c in group:
                rows.append({
                    "case": case, "n_rogue": spec.n_rogue,
                    "edges_per_rogue": spec.edges_per_rogue, "variant": variant,
                    "seed": c.seed, "test_acc": c.test_acc,
                    "mean_norm_entropy": c.norm_entropy, "mean_rogue_mass": c.rogue_mass,
                    "best_epoch": c.best_epoch,
                    "wall_time_s": c.wall_time_s if rc["run.record_wall_time"] else "",
                    "checksum": c.checksum,
                })
            accs = [c.test_acc for c in group]
            aggregates.append({
                "case": case, "n_rogue": spec.n_rogue, "edges_per_rogue": spec.edges_per_rogue,
                "variant": variant, "n": len(group),
                "test_acc_mean": _mean(accs), "test_acc_std": _std(accs),
                "mean_norm_entropy_mean": _mean([c.norm_entropy for c in group]),
                "mean_rogue_mass_mean": _mean([c.rogue_mass for c in group]),
                "lambda": lam,
            })
    return BenchmarkResult(rows, aggregates, selection, cells, rc.dump(), rc["reg.kind"])


def _f(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_f(r[c]) for c in columns])


def _pct(mean: float, std: float) -> str:
    if math.isnan(mean):
        return "nan"
    return f"{100 * mean:.2f} ± {100 * std:.2f}"


def markdown_table(aggregates: list[dict]) -> str:
    """One table per attack case: grid axis, Baseline GAT, Robust GAT accuracy (%)."""
    out = []
    cases = list(dict.fromkeys(a["case"] for a in aggregates))
    for case in cases:
        agg = [a for a in aggregates if a["case"] == case]
        axis = "# Noisy Edges" if case == "nodes_fixed_50" else "# Noisy Nodes"
        key = "edges_per_rogue" if case == "nodes_fixed_50" else "n_rogue"
        out.append(f"### {case}\n")
        out.append(f"| {axis} | Baseline GAT | Robust GAT | lambda |")
        out.append("|---|---|---|---|")
        points = list(dict.fromkeys((a["n_rogue"], a["edges_per_rogue"]) for a in agg))
        for pt in points:
            b, r = (next(a for a in agg if (a["n_rogue"], a["edges_per_rogue"]) == pt
                         and a["variant"] == v) for v in VARIANTS)
            out.append(f"| {b[key]} | {_pct(b['test_acc_mean'], b['test_acc_std'])} | "
                       f"{_pct(r['test_acc_mean'], r['test_acc_std'])} | {_f(r['lambda'])} |")
        out.append("")
    return "\n".join(out)


def write_benchmark(result: BenchmarkResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "report.csv"), REPORT_COLUMNS, result.rows)
    _write_csv(os.path.join(out_dir, "aggregate.csv"), AGGREGATE_COLUMNS, result.aggregates)
    _write_csv(os.path.join(out_dir, "selection.csv"),
               ["case", "n_rogue", "edges_per_rogue", "lambda", "mean_val_acc",
                "mean_norm_entropy", "selected"], result.selection)
    _write_csv(os.path.join(out_dir, "pairing.csv"),
               ["case", "n_rogue", "edges_per_rogue", "variant", "seed", "checksum"], result.rows)
    with open(os.path.join(out_dir, "report.md"), "w", encoding="utf-8") as fh:
        if result.reg_kind:
            fh.write(f"Robust variant regularizer: {result.reg_kind}\n\n")
        fh.write(markdown_table(result.aggregates))
    if result.config_text:
        with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(result.config_text)
    with open(os.path.join(out_dir, "timings.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "seed", "lambda", "wall_time_s", "error"])
        for c in result.cells:
            w.writerow([c.point, c.seed, c.lam, f"{c.wall_time_s:.3f}", c.error])


def read_report(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
