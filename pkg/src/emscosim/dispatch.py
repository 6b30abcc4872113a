"""DC optimal power flow: linear-cost dispatch of the generators against
estimated per-bus loads, subject to branch flow limits and generator bounds.

The LP is solved exactly with HiGHS (scipy.optimize.linprog).  Branch limits
are tightened internally by 1e-9 so that flows recomputed from the returned
set points through an exact power-flow solve never violate the stated limits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import ContractError, DispatchError
from .estimation import EstimationResult
from .grid import GridCase, state_to_full_angles

_LIMIT_MARGIN = 1e-9


@dataclass(frozen=True)
class DispatchResult:
    setpoints: np.ndarray       # per generator, case.generators order, per-unit
    objective: float            # total linear cost
    binding_limits: tuple[str, ...]  # branch/generator ids at their bounds

    def setpoint_by_bus(self, case: GridCase) -> np.ndarray:
        """Total commanded generation per bus (case bus order)."""
        per_bus = np.zeros(case.n_bus)
        for g, p in zip(case.generators, self.setpoints):
            per_bus[case.bus_index[g.bus]] += p
        return per_bus


def solve_dc_opf(case: GridCase, load_estimates: np.ndarray) -> DispatchResult:
    """Minimize total generation cost subject to DC network constraints.

    Variables are generator outputs and non-reference bus angles.  Raises
    DispatchError when infeasible (callers typically hold the previous
    set points in that event).
    """
    loads = np.asarray(load_estimates, dtype=float)
    if loads.shape != (case.n_bus,):
        raise ContractError("load_estimates must have one entry per bus")
    gens = case.generators
    ng = len(gens)
    if ng == 0:
        raise DispatchError("case has no generators")
    ns = case.n_state
    nv = ng + ns

    cost = np.zeros(nv)
    cost[:ng] = [g.cost for g in gens]

    # nodal balance: sum of local generation - load = B theta (reference row included)
    ref = case.bus_index[case.reference_bus]
    keep = [i for i in range(case.n_bus) if i != ref]
    A_eq = np.zeros((case.n_bus, nv))
    for gi, g in enumerate(gens):
        A_eq[case.bus_index[g.bus], gi] = 1.0
    A_eq[:, ng:] = -case.bus_susceptance[:, keep]
    b_eq = loads.copy()

    # flow limits: |(theta_f - theta_t)/x| <= limit
    theta_col = {bus_i: ng + k for k, bus_i in enumerate(keep)}
    A_ub = np.zeros((2 * len(case.branches), nv))
    b_ub = np.zeros(2 * len(case.branches))
    for bi, br in enumerate(case.branches):
        row = np.zeros(nv)
        b = 1.0 / br.x
        fi = case.bus_index[br.from_bus]
        ti = case.bus_index[br.to_bus]
        if fi != ref:
            row[theta_col[fi]] = b
        if ti != ref:
            row[theta_col[ti]] = -b
        A_ub[2 * bi] = row
        A_ub[2 * bi + 1] = -row
        b_ub[2 * bi] = br.limit - _LIMIT_MARGIN
        b_ub[2 * bi + 1] = br.limit - _LIMIT_MARGIN

    bounds = [(g.pmin, g.pmax) for g in gens] + [(None, None)] * ns
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise DispatchError(f"OPF infeasible or failed: {res.message}")

    setpoints = res.x[:ng].copy()
    # restore exact power balance (solver residual is ~1e-10); push the
    # correction onto a generator with slack so bounds stay satisfied
    mismatch = loads.sum() - setpoints.sum()
    if mismatch != 0.0:
        for gi, g in enumerate(gens):
            if g.pmin <= setpoints[gi] + mismatch <= g.pmax:
                setpoints[gi] += mismatch
                break

    binding: list[str] = []
    theta = np.zeros(case.n_bus)
    theta[keep] = res.x[ng:]
    for br in case.branches:
        flow = (theta[case.bus_index[br.from_bus]] - theta[case.bus_index[br.to_bus]]) / br.x
        if abs(abs(flow) - br.limit) <= 1e-6 * max(1.0, br.limit):
            binding.append(br.id)
    for gi, g in enumerate(gens):
        if abs(setpoints[gi] - g.pmax) <= 1e-6 or abs(setpoints[gi] - g.pmin) <= 1e-6:
            binding.append(f"gen@{g.bus}")

    return DispatchResult(setpoints=setpoints, objective=float(cost[:ng] @ setpoints),
                          binding_limits=tuple(binding))


def extract_load_estimates(case: GridCase, est: EstimationResult,
                           setpoints_by_bus: np.ndarray | None = None) -> np.ndarray:
    """Per-bus net withdrawal implied by the estimated state.

    Estimated injections follow from the bus susceptance matrix applied to
    the estimated angles; the last commanded generator outputs are then
    subtracted to leave the load component.
    """
    theta = state_to_full_angles(case, est.estimate)
    injections = case.bus_susceptance @ theta
    if setpoints_by_bus is None:
        setpoints_by_bus = np.zeros(case.n_bus)
    return np.asarray(setpoints_by_bus, dtype=float) - injections
