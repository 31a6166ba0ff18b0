"""Decentralized optimization over directed graphs with learned mixing weights."""

__version__ = "0.1.0"

from d3gd.didgd import DivergenceError, NetworkState, StepSchedule, didgd_init, didgd_step, run_didgd  # noqa: E402
from d3gd.engine import RunConfig, run_d3gd  # noqa: E402
from d3gd.graph import (  # noqa: E402
    DirectedGraph,
    MixingMatrix,
    generate_er_digraph,
    metropolis_weights,
    perron_vector,
    spectral_gap,
    uniform_in_weights,
)

__all__ = [
    "DirectedGraph",
    "DivergenceError",
    "MixingMatrix",
    "NetworkState",
    "RunConfig",
    "StepSchedule",
    "didgd_init",
    "didgd_step",
    "generate_er_digraph",
    "metropolis_weights",
    "perron_vector",
    "run_d3gd",
    "run_didgd",
    "spectral_gap",
    "uniform_in_weights",
]
