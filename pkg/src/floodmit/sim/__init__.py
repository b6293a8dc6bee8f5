from .engine import (
    FlowReport,
    SimState,
    SimulationFault,
    frame_specs,
    gate_flow,
    initial_state,
    simulate,
    step,
    total_volume,
)
from .forcing import ForcingConfig, make_forcing, rain_series, tide_series
from .topology import Cell, NetworkTopology, Reach, Structure, default_topology

__all__ = [
    "Cell",
    "FlowReport",
    "ForcingConfig",
    "NetworkTopology",
    "Reach",
    "SimState",
    "SimulationFault",
    "Structure",
    "default_topology",
    "frame_specs",
    "gate_flow",
    "initial_state",
    "make_forcing",
    "rain_series",
    "simulate",
    "step",
    "tide_series",
    "total_volume",
]
