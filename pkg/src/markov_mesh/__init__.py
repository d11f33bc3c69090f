"""Bayesian structure learning for binary Markov mesh models."""
from .lattice import LatticeDims, Offset, Scene, disk_template, extend_scene, read_scene, write_scene
from .pbf import PBF, EMPTY, InteractionSet, interaction, read_model, write_model
from .model import Mmm, log_likelihood, simulate
from .prior import PriorConfig
from .rjmcmc import ChainTrace, RunConfig, run_chain

__all__ = [
    "EMPTY",
    "ChainTrace",
    "InteractionSet",
    "LatticeDims",
    "Mmm",
    "Offset",
    "PBF",
    "PriorConfig",
    "RunConfig",
    "Scene",
    "disk_template",
    "extend_scene",
    "interaction",
    "log_likelihood",
    "read_model",
    "read_scene",
    "run_chain",
    "simulate",
    "write_model",
    "write_scene",
]
__version__ = "0.1.0"
