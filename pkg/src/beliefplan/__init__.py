"""Belief-compression planning for discrete POMDPs."""

from .epca import (
    BeliefSet,
    EpcaConfig,
    EpcaResult,
    compress,
    compress_batch,
    epca_fit,
    epca_loss,
    kl_divergence,
    loss_gradients,
    orthonormalize,
    pca_fit,
    pca_reconstruct,
    reconstruct,
)
from .pomdp import Pomdp, belief_predict, belief_update, expected_reward, simulate_step, validate
from .problems import build_corridor_nav, build_grid_nav, build_two_corridor_maze, discretized_von_mises

__version__ = "0.1.0"

__all__ = [
    "BeliefSet",
    "EpcaConfig",
    "EpcaResult",
    "Pomdp",
    "belief_predict",
    "belief_update",
    "build_corridor_nav",
    "build_grid_nav",
    "build_two_corridor_maze",
    "compress",
    "compress_batch",
    "discretized_von_mises",
    "epca_fit",
    "epca_loss",
    "expected_reward",
    "kl_divergence",
    "loss_gradients",
    "orthonormalize",
    "pca_fit",
    "pca_reconstruct",
    "reconstruct",
    "simulate_step",
    "validate",
]
