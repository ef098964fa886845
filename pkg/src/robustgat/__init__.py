"""Graph attention networks from scratch, rogue-node poisoning and attention regularization."""

from .gat_model import GatConfig, GatParams, TrainReport, evaluate, model_forward, train
from .graph_store import CsrAdjacency, Dataset, Split, build_csr, load_planetoid, make_split
from .perturbation import FeatureModel, GridCase, NoiseSpec, inject_rogue_nodes, noise_grid
from .robust_reg import RegKind, RegSpec

__all__ = [
    "CsrAdjacency", "Dataset", "FeatureModel", "GatConfig", "GatParams", "GridCase",
    "NoiseSpec", "RegKind", "RegSpec", "Split", "TrainReport", "build_csr", "evaluate",
    "inject_rogue_nodes", "load_planetoid", "make_split", "model_forward", "noise_grid", "train",
]
