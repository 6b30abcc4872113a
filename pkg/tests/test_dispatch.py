import itertools

import numpy as np
import pytest

from emscosim.dispatch import extract_load_estimates, solve_dc_opf
from emscosim.estimation import wls_estimate
from emscosim.exceptions import DispatchError
from emscosim.grid import (
    Branch,
    Bus,
    Generator,
    GridCase,
    MeasurementVector,
    build_h_matrix,
    dc_power_flow,
)

from helpers import full_plan, ring3_case


def flows_for_dispatch(case, setpoints_by_bus, loads):
    _, flows = dc_power_flow(case, setpoints_by_bus - loads)
    return flows


def brute_force_opf(case, loads, resolution=1e-3):
    """Exhaustive search over feasible dispatches of a 2-generator case."""
    g1, g2 = case.generators
    total = loads.sum()
    best = None
    p1_grid = np.arange(g1.pmin, g1.pmax + resolution / 2, resolution)
    for p1 in p1_grid:
        p2 = total - p1
        if not (g2.pmin - 1e-12 <= p2 <= g2.pmax + 1e-12):
            continue
        by_bus = np.zeros(case.n_bus)
        by_bus[case.bus_index[g1.bus]] += p1
        by_bus[case.bus_index[g2.bus]] += p2
        flows = flows_for_dispatch(case, by_bus, loads)
        if np.any(np.abs(flows) > np.array([br.limit for br in case.branches]) + 1e-9):
            continue
        cost = g1.cost * p1 + g2.cost * p2
        if best is None or cost < best[0]:
            best = (cost, p1, p2)
    return best


def test_merit_order_uncongested():
    # cheaper generator 1 runs at its max, generator 2 covers the rest
    case = ring3_case(gens=(Generator(1, 0.0, 1.0, 10.0), Generator(2, 0.0, 2.0, 30.0)))
    loads = np.array([0.0, 0.9, 0.6])
    res = solve_dc_opf(case, loads)
    assert res.setpoints == pytest.approx([1.0, 0.5], abs=1e-9)
    assert "gen@1" in res.binding_limits


def test_zero_load_all_at_lower_bound():
    case = ring3_case()
    res = solve_dc_opf(case, np.zeros(3))
    assert res.setpoints == pytest.approx([0.0, 0.0], abs=1e-12)
    assert res.objective == pytest.approx(0.0, abs=1e-12)


def test_line_limit_forces_redispatch_matches_grid_search():
    # a tight limit on branch 1-2 forces part of the cheap generation back down;
    # brute-force oracle at 1e-3 resolution confirms the LP optimum
    case = ring3_case(gens=(Generator(1, 0.0, 2.0, 10.0), Generator(2, 0.0, 2.0, 30.0)))
    case = GridCase(
        buses=case.buses,
        branches=(Branch("1-2", 1, 2, 1.0, 0.30), Branch("2-3", 2, 3, 1.0, 99.0),
                  Branch("1-3", 1, 3, 1.0, 99.0)),
        generators=case.generators,
        reference_bus=1,
        measurement_plan=case.measurement_plan,
    )
    loads = np.array([0.0, 0.9, 0.3])
    res = solve_dc_opf(case, loads)
    oracle = brute_force_opf(case, loads)
    assert oracle is not None
    assert res.objective == pytest.approx(oracle[0], abs=5e-2 * 1e-3 * 40)  # resolution * cost spread
    assert res.setpoints[0] == pytest.approx(oracle[1], abs=2e-3)
    assert "1-2" in res.binding_limits


def test_power_balance_invariant():
    case = ring3_case()
    rng = np.random.default_rng(9)
    for _ in range(10):
        loads = np.abs(rng.normal(scale=0.5, size=3))
        res = solve_dc_opf(case, loads)
        assert res.setpoints.sum() == pytest.approx(loads.sum(), abs=1e-9)


def test_no_pairwise_exchange_improves_cost():
    # optimality certificate: moving eps between any generator pair either
    # breaks feasibility or does not reduce cost
    eps = 1e-4
    case = ring3_case(gens=(Generator(1, 0.0, 1.2, 10.0), Generator(2, 0.0, 2.0, 30.0)))
    loads = np.array([0.1, 0.8, 0.5])
    res = solve_dc_opf(case, loads)
    limits = np.array([br.limit for br in case.branches])
    base_cost = res.objective
    for i, j in itertools.permutations(range(2), 2):
        p = res.setpoints.copy()
        p[i] += eps
        p[j] -= eps
        gi, gj = case.generators[i], case.generators[j]
        if not (gi.pmin <= p[i] <= gi.pmax and gj.pmin <= p[j] <= gj.pmax):
            continue
        by_bus = np.zeros(case.n_bus)
        for g, val in zip(case.generators, p):
            by_bus[case.bus_index[g.bus]] += val
        flows = flows_for_dispatch(case, by_bus, loads)
        if np.any(np.abs(flows) > limits + 1e-9):
            continue
        new_cost = sum(g.cost * v for g, v in zip(case.generators, p))
        assert new_cost >= base_cost - 1e-12


def test_merit_order_swaps_with_costs():
    loads = np.array([0.0, 0.9, 0.6])
    cheap_first = ring3_case(gens=(Generator(1, 0.0, 2.0, 10.0), Generator(2, 0.0, 2.0, 30.0)))
    res1 = solve_dc_opf(cheap_first, loads)
    assert int(np.argmax(res1.setpoints)) == 0
    swapped = ring3_case(gens=(Generator(1, 0.0, 2.0, 40.0), Generator(2, 0.0, 2.0, 30.0)))
    res2 = solve_dc_opf(swapped, loads)
    assert int(np.argmax(res2.setpoints)) == 1


def test_infeasible_load_raises():
    case = ring3_case(gens=(Generator(1, 0.0, 0.5, 10.0), Generator(2, 0.0, 0.5, 30.0)))
    with pytest.raises(DispatchError):
        solve_dc_opf(case, np.array([0.0, 2.0, 1.0]))


def test_extract_load_estimates_recovers_case_loads():
    # noiseless, unattacked: recovered loads equal the true ones
    case = ring3_case(loads=(0.2, 0.6, 0.4))
    loads = case.loads
    res = solve_dc_opf(case, loads)
    by_bus = res.setpoint_by_bus(case)
    state, _ = dc_power_flow(case, by_bus - loads)
    H = build_h_matrix(case)
    z = MeasurementVector(H @ state.angles, np.ones(case.m, dtype=bool))
    est = wls_estimate(H, z, case.sigmas)
    recovered = extract_load_estimates(case, est, by_bus)
    assert np.allclose(recovered, loads, atol=1e-6)


def test_extract_load_estimates_shift_is_linear_in_c():
    # a stealth shift c moves the load estimates by the injection response to c
    case = ring3_case(loads=(0.2, 0.6, 0.4))
    loads = case.loads
    res = solve_dc_opf(case, loads)
    by_bus = res.setpoint_by_bus(case)
    state, _ = dc_power_flow(case, by_bus - loads)
    H = build_h_matrix(case)
    z0 = MeasurementVector(H @ state.angles, np.ones(case.m, dtype=bool))
    c = np.array([0.03, -0.05])
    za = MeasurementVector(z0.values + H @ c, z0.available)
    est0 = wls_estimate(H, z0, case.sigmas)
    est1 = wls_estimate(H, za, case.sigmas)
    l0 = extract_load_estimates(case, est0, by_bus)
    l1 = extract_load_estimates(case, est1, by_bus)
    c_full = np.zeros(case.n_bus)
    for bus_id, k in case.state_index.items():
        c_full[case.bus_index[bus_id]] = c[k]
    expected_shift = -case.bus_susceptance @ c_full
    assert np.allclose(l1 - l0, expected_shift, atol=1e-9)
    # total apparent load is invariant under any stealth shift
    assert l1.sum() == pytest.approx(l0.sum(), abs=1e-9)
