"""Exception hierarchy shared by all emscosim modules.

The CLI maps these onto distinct exit codes (see cli.py), so keep the
top-level classes stable.
"""


class EmscosimError(Exception):
    """Base class for all library errors."""


class ConfigError(EmscosimError):
    """Bad or inconsistent input files / parameters."""


class ModelError(EmscosimError):
    """Structurally invalid physical or communication model
    (disconnected grid, zero reactance, unreachable RTU, singular system)."""


class ContractError(EmscosimError, ValueError):
    """A documented precondition was violated by the caller."""


class EstimationError(EmscosimError):
    """State estimation cannot run (unobservable or no redundancy)."""

    def __init__(self, msg, rank=None, required=None):
        super().__init__(msg)
        self.rank = rank
        self.required = required


class DispatchError(EmscosimError):
    """Optimal power flow is infeasible for the given loads/limits."""


class AttackError(EmscosimError):
    """Attack vector construction failed (infeasible or breaks observability)."""
