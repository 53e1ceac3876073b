"""Granular-ball representation for imbalanced partial-label learning."""
from .data import LongTailSpec, PllDataset, TrainView, make_longtail_pll
from .evalrep import EvalReport, evaluate
from .gbgraph import GbGraph, build_graph
from .gbspace import GbSpace, GranularBall, build_gb_space
from .kernels import BACKEND
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EvalReport", "GbGraph", "GbSpace", "GranularBall", "LongTailSpec", "PllDataset",
    "TrainConfig", "TrainView", "build_gb_space", "build_graph", "evaluate", "make_longtail_pll", "train",
]
