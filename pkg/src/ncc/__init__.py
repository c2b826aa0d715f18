"""Simulator of the Node-Capacitated Clique with its primitive and algorithm suite."""

from .net import (CapacityViolation, ExecutionTrace, Message, Network, NetworkConfig,
                  PayloadTooLarge, ProtocolStall, SimulationError, deliver_round, run)
from .butterfly import BfCoordinate, ButterflyMap, bf_neighbors, build_map, route_next_hop
from .sim import Simulation

__version__ = "0.1.0"
