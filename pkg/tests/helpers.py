"""Shared fixtures-by-hand: small grid cases and comm graphs used across tests."""

from __future__ import annotations

import numpy as np

from emscosim.grid import Branch, Bus, Generator, GridCase, MeasurementDef
from emscosim.netgraph import CommGraph, LinkDef, NodeDef


def full_plan(buses, branches, sigma=0.005):
    plan = [MeasurementDef("bus-injection", b.id, sigma) for b in buses]
    for br in branches:
        plan.append(MeasurementDef("branch-flow-from", br.id, sigma))
        plan.append(MeasurementDef("branch-flow-to", br.id, sigma))
    return tuple(plan)


def ring3_case(sigma=0.005, limit=99.0, loads=(0.0, 0.6, 0.4), gens=None):
    """3-bus ring, unit reactances, full 9-measurement plan (ref = bus 1)."""
    buses = (Bus(1, loads[0]), Bus(2, loads[1]), Bus(3, loads[2]))
    branches = (
        Branch("1-2", 1, 2, 1.0, limit),
        Branch("2-3", 2, 3, 1.0, limit),
        Branch("1-3", 1, 3, 1.0, limit),
    )
    if gens is None:
        gens = (Generator(1, 0.0, 2.0, 10.0), Generator(2, 0.0, 2.0, 30.0))
    return GridCase(
        buses=buses,
        branches=branches,
        generators=tuple(gens),
        reference_bus=1,
        measurement_plan=full_plan(buses, branches, sigma),
    )


def line2_case(x=0.5, sigma=0.005):
    """2-bus case with a single branch."""
    buses = (Bus(1, 0.0), Bus(2, 1.0))
    branches = (Branch("1-2", 1, 2, x, 99.0),)
    return GridCase(
        buses=buses,
        branches=branches,
        generators=(Generator(1, 0.0, 5.0, 10.0),),
        reference_bus=1,
        measurement_plan=full_plan(buses, branches, sigma),
    )


def random_case(rng: np.random.Generator, n_bus=None, sigma=0.005):
    """Random connected grid (spanning tree plus extra branches), full plan."""
    if n_bus is None:
        n_bus = int(rng.integers(3, 15))
    buses = tuple(Bus(i + 1, float(rng.uniform(0.0, 1.0))) for i in range(n_bus))
    branches = []
    for i in range(2, n_bus + 1):
        j = int(rng.integers(1, i))
        branches.append(Branch(f"{j}-{i}", j, i, float(rng.uniform(0.05, 0.5))))
    extra = int(rng.integers(0, n_bus))
    tried = {(br.from_bus, br.to_bus) for br in branches}
    for _ in range(extra):
        a, b = sorted(rng.choice(np.arange(1, n_bus + 1), size=2, replace=False).tolist())
        if (a, b) in tried:
            continue
        tried.add((a, b))
        branches.append(Branch(f"{a}-{b}", int(a), int(b), float(rng.uniform(0.05, 0.5))))
    branches = tuple(branches)
    return GridCase(
        buses=buses,
        branches=branches,
        generators=(Generator(1, 0.0, 20.0, 10.0),),
        reference_bus=1,
        measurement_plan=full_plan(buses, branches, sigma),
    )


def routing_example_graph():
    """The 4-node / 3-link illustration graph: N1-L1-N2, N2-L2-N3, N2-L3-N4.

    N1 and N3 are RTUs, N2 a router, N4 the MTU.  The min-hop route from N1
    is N1-L1-N2-L3-N4.
    """
    nodes = (
        NodeDef("N1", "rtu", "sA"),
        NodeDef("N2", "router", "sA"),
        NodeDef("N3", "rtu", "sB"),
        NodeDef("N4", "mtu", "sA"),
    )
    links = (
        LinkDef("L1", "N1", "N2", "lan", 0.002, 0.0),
        LinkDef("L2", "N2", "N3", "lan", 0.002, 0.0),
        LinkDef("L3", "N2", "N4", "lan", 0.002, 0.0),
    )
    return CommGraph(nodes=nodes, links=links, substation_buses={"sA": (1,), "sB": (2, 3)})
