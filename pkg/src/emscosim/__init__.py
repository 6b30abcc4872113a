"""emscosim: deterministic co-simulation of a DC power grid, its SCADA
network and EMS control loop, with stealthy data-attack injection and exact
attack-cost security metrics."""

from . import dispatch, estimation, grid, netgraph
from .exceptions import (
    AttackError,
    ConfigError,
    ContractError,
    DispatchError,
    EmscosimError,
    EstimationError,
    ModelError,
)

__version__ = "0.1.0"
