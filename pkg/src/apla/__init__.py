"""Aspiration-based perturbed learning automata on finite strategic-form games."""

from apla.dynamics import SimConfig, SystemState, AgentState, phi, step, validate_step_sizes
from apla.game import Game, load_game, stag_hunt

__all__ = [
    "AgentState",
    "Game",
    "SimConfig",
    "SystemState",
    "load_game",
    "phi",
    "stag_hunt",
    "step",
    "validate_step_sizes",
]
