"""Static DC model of the power network.

Everything here is per-unit on the case base power (100 MVA for the bundled
cases), angles in radians.  The measurement model is linear: z = H x + e,
where x holds the phase angles of every bus except the reference (fixed at 0)
and rows of H encode branch flows ((theta_f - theta_t) / x) and bus
injections (sum of incident branch flows).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ContractError, ModelError

MEASUREMENT_KINDS = ("bus-injection", "branch-flow-from", "branch-flow-to")


@dataclass(frozen=True)
class Bus:
    id: int
    load: float = 0.0  # per-unit MW withdrawal


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: int
    to_bus: int
    x: float           # series reactance, per-unit
    limit: float = 99.0  # |flow| bound used by the OPF, per-unit


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    cost: float  # currency per per-unit MW, linear


@dataclass(frozen=True)
class MeasurementDef:
    kind: str    # one of MEASUREMENT_KINDS
    target: object  # bus id for injections, branch id for flows
    sigma: float

    @property
    def name(self) -> str:
        tag = {"bus-injection": "inj", "branch-flow-from": "from", "branch-flow-to": "to"}[self.kind]
        return f"{tag}:{self.target}"


@dataclass(frozen=True)
class StateVector:
    """Bus phase angles (radians) for every bus except the reference."""

    angles: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.angles, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "angles", arr)


@dataclass(frozen=True)
class MeasurementVector:
    values: np.ndarray
    available: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        available = np.asarray(self.available, dtype=bool)
        if values.shape != available.shape:
            raise ContractError("values and available must have identical length")
        values.setflags(write=False)
        available.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "available", available)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    reference_bus: int
    measurement_plan: tuple[MeasurementDef, ...]
    base_mva: float = 100.0

    def __post_init__(self):
        for name in ("buses", "branches", "generators", "measurement_plan"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        _validate_case(self)

    # --- index helpers -------------------------------------------------

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_by_id(self) -> dict[str, Branch]:
        return {br.id: br for br in self.branches}

    @cached_property
    def nonref_bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.id != self.reference_bus)

    @cached_property
    def state_index(self) -> dict[int, int]:
        """bus id -> column of H / entry of StateVector (reference excluded)."""
        return {b: i for i, b in enumerate(self.nonref_bus_ids)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_state(self) -> int:
        return len(self.buses) - 1

    @property
    def m(self) -> int:
        return len(self.measurement_plan)

    @cached_property
    def loads(self) -> np.ndarray:
        arr = np.array([b.load for b in self.buses])
        arr.setflags(write=False)
        return arr

    @cached_property
    def sigmas(self) -> np.ndarray:
        arr = np.array([md.sigma for md in self.measurement_plan])
        arr.setflags(write=False)
        return arr

    @cached_property
    def measurement_names(self) -> tuple[str, ...]:
        return tuple(md.name for md in self.measurement_plan)

    @cached_property
    def measurement_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.measurement_names)}

    def measurement_bus(self, md: MeasurementDef) -> int:
        """Bus where the measurement is physically taken (its RTU's bus)."""
        if md.kind == "bus-injection":
            return int(md.target)
        branch = self.branch_by_id[md.target]
        return branch.from_bus if md.kind == "branch-flow-from" else branch.to_bus

    # --- susceptance structure ------------------------------------------

    @cached_property
    def bus_susceptance(self) -> np.ndarray:
        """Full n_bus x n_bus DC susceptance matrix B (injection = B @ theta)."""
        n = self.n_bus
        B = np.zeros((n, n))
        for br in self.branches:
            f = self.bus_index[br.from_bus]
            t = self.bus_index[br.to_bus]
            b = 1.0 / br.x
            B[f, f] += b
            B[t, t] += b
            B[f, t] -= b
            B[t, f] -= b
        B.setflags(write=False)
        return B


def _validate_case(case: GridCase) -> None:
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate bus ids")
    if case.reference_bus not in set(ids):
        raise ModelError(f"reference bus {case.reference_bus} does not exist")
    branch_ids = [br.id for br in case.branches]
    if len(set(branch_ids)) != len(branch_ids):
        raise ModelError("duplicate branch ids")
    for br in case.branches:
        if br.x <= 0:
            raise ModelError(f"branch {br.id}: reactance must be > 0")
        if br.from_bus not in case.bus_index or br.to_bus not in case.bus_index:
            raise ModelError(f"branch {br.id}: endpoint bus missing")
        if br.from_bus == br.to_bus:
            raise ModelError(f"branch {br.id}: self loop")
    for g in case.generators:
        if g.bus not in case.bus_index:
            raise ModelError(f"generator bus {g.bus} does not exist")
        if g.pmin > g.pmax:
            raise ModelError(f"generator at bus {g.bus}: pmin > pmax")
    for md in case.measurement_plan:
        if md.kind not in MEASUREMENT_KINDS:
            raise ModelError(f"unknown measurement kind {md.kind!r}")
        if md.sigma <= 0:
            raise ModelError(f"measurement {md.name}: sigma must be > 0")
        if md.kind == "bus-injection":
            if md.target not in case.bus_index:
                raise ModelError(f"measurement {md.name}: bus missing")
        elif md.target not in case.branch_by_id:
            raise ModelError(f"measurement {md.name}: branch missing")
    # connectivity over the branch graph
    if case.n_bus > 1:
        adjacency: dict[int, set[int]] = {b.id: set() for b in case.buses}
        for br in case.branches:
            adjacency[br.from_bus].add(br.to_bus)
            adjacency[br.to_bus].add(br.from_bus)
        seen = {case.reference_bus}
        stack = [case.reference_bus]
        while stack:
            for nb in adjacency[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != case.n_bus:
            missing = sorted(set(ids) - seen)
            raise ModelError(f"branch graph is disconnected (unreachable buses {missing})")


# --------------------------------------------------------------------------
# model construction and power flow
# --------------------------------------------------------------------------

def _flow_row(case: GridCase, branch: Branch) -> np.ndarray:
    """Row of H for the from-side flow of a branch: (theta_f - theta_t)/x."""
    row = np.zeros(case.n_state)
    b = 1.0 / branch.x
    sidx = case.state_index
    if branch.from_bus != case.reference_bus:
        row[sidx[branch.from_bus]] += b
    if branch.to_bus != case.reference_bus:
        row[sidx[branch.to_bus]] -= b
    return row


def build_h_matrix(case: GridCase) -> np.ndarray:
    """Measurement matrix H (m x n) of the linear model z = H x + e."""
    m = case.m
    H = np.zeros((m, case.n_state))
    for i, md in enumerate(case.measurement_plan):
        if md.kind == "bus-injection":
            bus = int(md.target)
            for br in case.branches:
                if br.from_bus == bus:
                    H[i] += _flow_row(case, br)
                elif br.to_bus == bus:
                    H[i] -= _flow_row(case, br)
        elif md.kind == "branch-flow-from":
            H[i] = _flow_row(case, case.branch_by_id[md.target])
        else:
            H[i] = -_flow_row(case, case.branch_by_id[md.target])
    return H


def dc_power_flow(case: GridCase, injections: np.ndarray) -> tuple[StateVector, np.ndarray]:
    """Solve lossless DC power flow for given per-bus injections.

    Returns the state (non-reference angles, radians) and per-branch flows
    ordered as case.branches (positive = from->to).  Injections must sum to
    zero within 1e-9.
    """
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (case.n_bus,):
        raise ContractError("injections must have one entry per bus")
    if abs(injections.sum()) > 1e-9:
        raise ContractError(f"injections must balance to zero (sum={injections.sum():.3e})")
    ref = case.bus_index[case.reference_bus]
    keep = [i for i in range(case.n_bus) if i != ref]
    B_red = case.bus_susceptance[np.ix_(keep, keep)]
    try:
        theta_red = np.linalg.solve(B_red, injections[keep])
    except np.linalg.LinAlgError as exc:
        raise ModelError("reduced susceptance matrix is singular") from exc
    theta_full = np.zeros(case.n_bus)
    theta_full[keep] = theta_red
    flows = np.array([
        (theta_full[case.bus_index[br.from_bus]] - theta_full[case.bus_index[br.to_bus]]) / br.x
        for br in case.branches
    ])
    return StateVector(theta_red), flows


def state_to_full_angles(case: GridCase, state: StateVector) -> np.ndarray:
    """Expand a StateVector to all buses (reference angle = 0), case bus order."""
    theta = np.zeros(case.n_bus)
    for bus_id, k in case.state_index.items():
        theta[case.bus_index[bus_id]] = state.angles[k]
    return theta


def generate_measurements(case: GridCase, state: StateVector, rng_seed: int,
                          timestamp: float = 0.0) -> MeasurementVector:
    """Noisy measurement snapshot z = H x + e, e_i ~ N(0, sigma_i^2).

    The same seed always yields bitwise-identical output.
    """
    if state.angles.size != case.n_state:
        raise ContractError("state length does not match case")
    H = build_h_matrix(case)
    rng = np.random.default_rng(rng_seed)
    values = draw_measurements(H, state.angles, case.sigmas, rng)
    return MeasurementVector(values, np.ones(case.m, dtype=bool), timestamp)


def draw_measurements(H: np.ndarray, angles: np.ndarray, sigmas: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """One draw of z = H x + e from an externally managed noise stream."""
    return H @ angles + sigmas * rng.standard_normal(H.shape[0])


def check_observability(h: np.ndarray, available: np.ndarray) -> bool:
    """True iff the available rows of H have full column rank."""
    available = np.asarray(available, dtype=bool)
    if available.shape != (h.shape[0],):
        raise ContractError("availability mask length must equal the row count")
    rows = h[available]
    n = h.shape[1]
    if rows.shape[0] < n:
        return False
    return matrix_rank(rows) == n


def matrix_rank(a: np.ndarray, rtol: float = 1e-8) -> int:
    """Rank with a relative singular-value cutoff (1e-8 of the largest)."""
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


# --------------------------------------------------------------------------
# case file I/O
# --------------------------------------------------------------------------

def load_case(source) -> GridCase:
    """Load a GridCase from a JSON file path or an already-parsed dict.

    Schema: {base_mva, reference_bus, buses: [{id, load}], branches:
    [{id, from, to, x, limit}], generators: [{bus, pmin, pmax, cost}],
    measurements: [{kind, target, sigma}]}.
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read case file {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"case file {source} is not valid JSON: {exc}") from exc
    else:
        raw = source
    try:
        buses = tuple(Bus(int(b["id"]), float(b.get("load", 0.0))) for b in raw["buses"])
        branches = tuple(
            Branch(str(br.get("id", f"{br['from']}-{br['to']}")), int(br["from"]),
                   int(br["to"]), float(br["x"]), float(br.get("limit", 99.0)))
            for br in raw["branches"]
        )
        generators = tuple(
            Generator(int(g["bus"]), float(g.get("pmin", 0.0)), float(g["pmax"]),
                      float(g["cost"]))
            for g in raw["generators"]
        )
        plan = tuple(
            MeasurementDef(str(md["kind"]),
                           int(md["target"]) if md["kind"] == "bus-injection" else str(md["target"]),
                           float(md.get("sigma", 0.005)))
            for md in raw["measurements"]
        )
        case = GridCase(
            buses=buses,
            branches=branches,
            generators=generators,
            reference_bus=int(raw["reference_bus"]),
            measurement_plan=plan,
            base_mva=float(raw.get("base_mva", 100.0)),
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed case file: {exc}") from exc
    return case


def dump_h_csv(case: GridCase, path) -> None:
    """Write H as CSV: one row per measurement, one column per non-ref bus."""
    H = build_h_matrix(case)
    header = ["measurement"] + [f"theta_{b}" for b in case.nonref_bus_ids]
    lines = [",".join(header)]
    for name, row in zip(case.measurement_names, H):
        lines.append(",".join([name] + [repr(v) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")
