"""Static SCADA communication graph and routing-vector computation.

Nodes are RTUs, modems, routers and a single MTU; links are LAN or WAN
channels with latency and loss parameters.  Each measurement originates at
the RTU of the substation containing its bus and is delivered to the MTU
along one or more loop-free paths.  A routing vector is the binary
node/link incidence of one such path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ContractError, ModelError
from .grid import GridCase

NODE_KINDS = ("rtu", "modem", "router", "mtu")
LINK_KINDS = ("lan", "wan")

DEFAULT_CHANNELS = {"lan": {"latency": 0.002, "loss": 0.0},
                    "wan": {"latency": 0.010, "loss": 0.0}}


@dataclass(frozen=True)
class NodeDef:
    id: str
    kind: str
    substation: str


@dataclass(frozen=True)
class LinkDef:
    id: str
    a: str
    b: str
    kind: str
    latency: float = 0.0
    loss: float = 0.0

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class CommGraph:
    nodes: tuple[NodeDef, ...]
    links: tuple[LinkDef, ...]
    substation_buses: dict[str, tuple[int, ...]] = field(default_factory=dict)
    roles: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        _validate_graph(self)

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def link_ids(self) -> tuple[str, ...]:
        return tuple(l.id for l in self.links)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def link_index(self) -> dict[str, int]:
        return {l.id: i for i, l in enumerate(self.links)}

    @cached_property
    def node_by_id(self) -> dict[str, NodeDef]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def link_by_id(self) -> dict[str, LinkDef]:
        return {l.id: l for l in self.links}

    @cached_property
    def mtu(self) -> NodeDef:
        return next(n for n in self.nodes if n.kind == "mtu")

    @cached_property
    def adjacency(self) -> dict[str, tuple[tuple[str, str], ...]]:
        """node id -> ((neighbor id, link id), ...) sorted by neighbor id."""
        adj: dict[str, list[tuple[str, str]]] = {n.id: [] for n in self.nodes}
        for l in self.links:
            adj[l.a].append((l.b, l.id))
            adj[l.b].append((l.a, l.id))
        return {k: tuple(sorted(v)) for k, v in adj.items()}

    def rtu_for_bus(self, bus_id: int) -> str:
        for sub, buses in self.substation_buses.items():
            if bus_id in buses:
                rtus = [n.id for n in self.nodes if n.kind == "rtu" and n.substation == sub]
                if len(rtus) != 1:
                    raise ModelError(f"substation {sub} must have exactly one RTU, has {len(rtus)}")
                return rtus[0]
        raise ModelError(f"bus {bus_id} is not assigned to any substation")


def _validate_graph(g: CommGraph) -> None:
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate node ids")
    for n in g.nodes:
        if n.kind not in NODE_KINDS:
            raise ModelError(f"node {n.id}: unknown kind {n.kind!r}")
    mtus = [n for n in g.nodes if n.kind == "mtu"]
    if len(mtus) != 1:
        raise ModelError(f"graph must contain exactly one MTU node, found {len(mtus)}")
    link_ids = [l.id for l in g.links]
    if len(set(link_ids)) != len(link_ids):
        raise ModelError("duplicate link ids")
    if set(link_ids) & set(ids):
        raise ModelError("node and link ids must be disjoint")
    node_set = set(ids)
    seen_pairs = set()
    for l in g.links:
        if l.kind not in LINK_KINDS:
            raise ModelError(f"link {l.id}: unknown kind {l.kind!r}")
        if l.a not in node_set or l.b not in node_set:
            raise ModelError(f"link {l.id}: endpoint missing")
        if l.a == l.b:
            raise ModelError(f"link {l.id}: self loop")
        pair = frozenset((l.a, l.b))
        if pair in seen_pairs:
            raise ModelError(f"link {l.id}: parallel edge")
        seen_pairs.add(pair)
        if not 0.0 <= l.loss <= 1.0:
            raise ModelError(f"link {l.id}: loss probability must be in [0, 1]")
        if l.latency < 0.0:
            raise ModelError(f"link {l.id}: latency must be >= 0")
    # every rtu must reach the mtu
    dist = _bfs_distances(g, mtus[0].id)
    for n in g.nodes:
        if n.kind == "rtu" and n.id not in dist:
            raise ModelError(f"RTU {n.id} cannot reach the MTU")


@dataclass(frozen=True)
class RoutingVector:
    measurement: int
    path_id: int
    node_part: np.ndarray   # bool, length N (graph node order)
    link_part: np.ndarray   # bool, length E (graph link order)
    node_seq: tuple[str, ...]
    link_seq: tuple[str, ...]

    def __post_init__(self):
        np_arr = np.asarray(self.node_part, dtype=bool)
        lp_arr = np.asarray(self.link_part, dtype=bool)
        np_arr.setflags(write=False)
        lp_arr.setflags(write=False)
        object.__setattr__(self, "node_part", np_arr)
        object.__setattr__(self, "link_part", lp_arr)


@dataclass(frozen=True)
class RoutingMatrix:
    graph: CommGraph
    rows: tuple[RoutingVector, ...]
    n_measurements: int

    @cached_property
    def by_measurement(self) -> dict[int, tuple[RoutingVector, ...]]:
        out: dict[int, list[RoutingVector]] = {i: [] for i in range(self.n_measurements)}
        for rv in self.rows:
            out[rv.measurement].append(rv)
        return {k: tuple(v) for k, v in out.items()}

    def paths_for(self, measurement: int) -> tuple[RoutingVector, ...]:
        return self.by_measurement[measurement]


def _bfs_distances(g: CommGraph, source: str) -> dict[str, int]:
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for v in frontier:
            for nb, _link in g.adjacency[v]:
                if nb not in dist:
                    dist[nb] = dist[v] + 1
                    nxt.append(nb)
        frontier = nxt
    return dist


def _lex_shortest_path(g: CommGraph, source: str, target: str,
                       banned_nodes=frozenset(), banned_links=frozenset()):
    """Minimum-hop path with deterministic lexicographic node-id tie-break.

    Returns (node_seq, link_seq) or None if target unreachable.
    """
    if source in banned_nodes or target in banned_nodes:
        return None
    # BFS distances from the target over the allowed subgraph
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for v in frontier:
            for nb, link in g.adjacency[v]:
                if nb in banned_nodes or link in banned_links or nb in dist:
                    continue
                dist[nb] = dist[v] + 1
                nxt.append(nb)
        frontier = nxt
    if source not in dist:
        return None
    # walk greedily towards the target, always taking the smallest admissible
    # neighbor id: yields the lexicographically smallest shortest node sequence
    nodes = [source]
    links = []
    cur = source
    while cur != target:
        step = None
        for nb, link in g.adjacency[cur]:  # sorted by neighbor id
            if nb in banned_nodes or link in banned_links:
                continue
            if dist.get(nb, -1) == dist[cur] - 1:
                step = (nb, link)
                break
        nodes.append(step[0])
        links.append(step[1])
        cur = step[0]
    return tuple(nodes), tuple(links)


def _k_shortest_paths(g: CommGraph, source: str, target: str, k: int):
    """Yen's algorithm on hop counts; candidates ordered by (length, node seq)."""
    first = _lex_shortest_path(g, source, target)
    if first is None:
        return []
    paths = [first]
    candidates: list[tuple[int, tuple[str, ...], tuple[str, ...]]] = []
    while len(paths) < k:
        prev_nodes, prev_links = paths[-1]
        for i in range(len(prev_nodes) - 1):
            spur = prev_nodes[i]
            root_nodes = prev_nodes[: i + 1]
            root_links = prev_links[:i]
            banned_links = set()
            for p_nodes, p_links in paths:
                if p_nodes[: i + 1] == root_nodes:
                    banned_links.add(p_links[i])
            banned_nodes = set(root_nodes[:-1])
            spur_path = _lex_shortest_path(g, spur, target,
                                           frozenset(banned_nodes), frozenset(banned_links))
            if spur_path is None:
                continue
            total_nodes = root_nodes + spur_path[0][1:]
            total_links = root_links + spur_path[1]
            entry = (len(total_nodes), total_nodes, total_links)
            if (total_nodes, total_links) not in [(n, l) for _, n, l in candidates] \
                    and (total_nodes, total_links) not in paths:
                candidates.append(entry)
        if not candidates:
            break
        candidates.sort()
        _, nodes, links = candidates.pop(0)
        paths.append((nodes, links))
    return paths


def measurement_origins(case: GridCase, graph: CommGraph) -> tuple[str, ...]:
    """Originating RTU node id for every measurement in the case plan."""
    return tuple(graph.rtu_for_bus(case.measurement_bus(md)) for md in case.measurement_plan)


def compute_routes(graph: CommGraph, origins, scheme: str = "single-path",
                   k: int = 1) -> RoutingMatrix:
    """RoutingMatrix for all measurements under the given routing scheme.

    single-path: one minimum-hop path per measurement (lexicographic
    tie-break).  k-shortest-multipath: up to k loop-free shortest paths.
    """
    if scheme not in ("single-path", "k-shortest-multipath"):
        raise ContractError(f"unknown routing scheme {scheme!r}")
    if k < 1:
        raise ContractError("k must be >= 1")
    if scheme == "single-path":
        k = 1
    mtu = graph.mtu.id
    rows = []
    path_counter = 0
    # identical origins share identical paths; cache per rtu
    cache: dict[str, list] = {}
    for mi, rtu in enumerate(origins):
        if rtu not in cache:
            paths = _k_shortest_paths(graph, rtu, mtu, k)
            if not paths:
                raise ModelError(f"RTU {rtu} cannot reach the MTU")
            cache[rtu] = paths
        for nodes, links in cache[rtu]:
            node_part = np.zeros(len(graph.nodes), dtype=bool)
            link_part = np.zeros(len(graph.links), dtype=bool)
            for nid in nodes:
                node_part[graph.node_index[nid]] = True
            for lid in links:
                link_part[graph.link_index[lid]] = True
            rows.append(RoutingVector(mi, path_counter, node_part, link_part, nodes, links))
            path_counter += 1
    return RoutingMatrix(graph=graph, rows=tuple(rows), n_measurements=len(origins))


def measurements_through(matrix: RoutingMatrix, element_id: str) -> set[int]:
    """All measurements any of whose routing paths traverse the node or link."""
    g = matrix.graph
    if element_id in g.node_index:
        idx = g.node_index[element_id]
        return {rv.measurement for rv in matrix.rows if rv.node_part[idx]}
    if element_id in g.link_index:
        idx = g.link_index[element_id]
        return {rv.measurement for rv in matrix.rows if rv.link_part[idx]}
    raise ContractError(f"unknown node or link id {element_id!r}")


# --------------------------------------------------------------------------
# network file I/O
# --------------------------------------------------------------------------

def load_network(source) -> CommGraph:
    """Load a CommGraph from a JSON file path or parsed dict.

    Schema: {substations: [{id, buses}], nodes: [{id, kind, substation}],
    links: [{id, a, b, kind, latency?, loss?}], channel_defaults: {lan, wan},
    roles?: {...}}.  Link latency/loss default to the channel parameters of
    their kind.
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read network file {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"network file {source} is not valid JSON: {exc}") from exc
    else:
        raw = source
    try:
        defaults = dict(DEFAULT_CHANNELS)
        for kind, params in raw.get("channel_defaults", {}).items():
            defaults[kind] = {**DEFAULT_CHANNELS.get(kind, {}), **params}
        nodes = tuple(NodeDef(str(n["id"]), str(n["kind"]), str(n["substation"]))
                      for n in raw["nodes"])
        links = []
        for l in raw["links"]:
            kind = str(l["kind"])
            ch = defaults.get(kind, {"latency": 0.0, "loss": 0.0})
            links.append(LinkDef(str(l["id"]), str(l["a"]), str(l["b"]), kind,
                                 float(l.get("latency", ch["latency"])),
                                 float(l.get("loss", ch["loss"]))))
        subs = {str(s["id"]): tuple(int(b) for b in s["buses"])
                for s in raw.get("substations", [])}
        graph = CommGraph(nodes=nodes, links=tuple(links), substation_buses=subs,
                          roles=dict(raw.get("roles", {})))
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed network file: {exc}") from exc
    return graph


def routes_to_csv(matrix: RoutingMatrix, path, measurement_names=None) -> None:
    """Dump the routing matrix: one row per (measurement, path)."""
    g = matrix.graph
    header = ["measurement", "name", "path", "nodes", "links", "node_part", "link_part"]
    lines = [",".join(header)]
    for rv in matrix.rows:
        name = measurement_names[rv.measurement] if measurement_names else ""
        lines.append(",".join([
            str(rv.measurement), name, str(rv.path_id),
            "|".join(rv.node_seq), "|".join(rv.link_seq),
            "".join("1" if v else "0" for v in rv.node_part),
            "".join("1" if v else "0" for v in rv.link_part),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")
