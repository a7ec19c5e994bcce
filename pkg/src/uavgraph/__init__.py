"""Two-stage UAV mission planning on a monitoring graph.

Stage one turns the graph into a prompt and reads a visiting order back;
stage two allocates bandwidth and transmit power with a small graph network.
"""

from .codec import parse_graph, parse_route_reply, render_prompt, serialize_graph
from .decision import DecisionBackendSpec, propose_trajectory
from .energy import Allocation, EnergyModelConfig, EnergyReport, simulate, uniform_allocation
from .graph import NetworkGraph, Node, NodeKind, ScenarioConfig, build_scenario
from .kernels import IMPLEMENTATION
from .routing import Route, exhaustive_optimal, heuristic_route, two_opt_improve

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "DecisionBackendSpec",
    "EnergyModelConfig",
    "EnergyReport",
    "IMPLEMENTATION",
    "NetworkGraph",
    "Node",
    "NodeKind",
    "Route",
    "ScenarioConfig",
    "build_scenario",
    "exhaustive_optimal",
    "heuristic_route",
    "parse_graph",
    "parse_route_reply",
    "propose_trajectory",
    "render_prompt",
    "serialize_graph",
    "simulate",
    "two_opt_improve",
    "uniform_allocation",
]
