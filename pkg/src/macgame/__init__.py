"""Constrained Markov multiple-access games: models, LP best responses and equilibrium solvers."""

__version__ = "0.1.0"

from .model import ChannelModel, GameSpec, QueueModel, UserModel, build_bf_fsmc, reference_game, reference_user
from .throughput import (
    DecodingRandomization,
    PartitionScheme,
    ThroughputSelector,
    is_exact_potential,
    make_randomization,
    table1_partition,
)
from .lp import LPInfeasible, LinearProgram, build_polytope, simplex_solve
from .solver import algorithm1, algorithm2, best_response, simulate, solve, verify_cne

__all__ = [
    "ChannelModel", "GameSpec", "QueueModel", "UserModel", "build_bf_fsmc", "reference_game", "reference_user",
    "DecodingRandomization", "PartitionScheme", "ThroughputSelector", "is_exact_potential",
    "make_randomization", "table1_partition", "LPInfeasible", "LinearProgram", "build_polytope",
    "simplex_solve", "algorithm1", "algorithm2", "best_response", "simulate", "solve", "verify_cne",
]
