"""Deterministic discrete-event packet simulator for the SCADA network.

Measurement packets travel RTU -> MTU and set-point packets MTU -> RTU along
their routing paths, hop by hop.  Every link traversal adds the channel
latency and may drop the packet with the channel loss probability (drawn
from a dedicated seeded stream, independent of measurement noise).  A
compromised router tampers or drops the measurement packets that traverse
it.  The event loop is single-threaded; ties in time are broken by insertion
order, so identical inputs replay identical traces.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ContractError
from .netgraph import CommGraph, RoutingMatrix, measurements_through


@dataclass(frozen=True)
class ChannelParams:
    latency: float
    loss_probability: float = 0.0

    def __post_init__(self):
        if self.latency < 0:
            raise ContractError("latency must be >= 0")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ContractError("loss probability must be in [0, 1]")


@dataclass
class Packet:
    pid: int
    kind: str                 # "measurement" | "setpoint"
    key: int                  # measurement index or generator index
    value: float
    created_at: float
    node_seq: tuple[str, ...]
    link_seq: tuple[str, ...]
    hop_index: int = 0
    tampered: bool = False
    dropped: bool = False


class EventQueue:
    """Time-ordered event queue; ties pop in insertion order."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0.0

    def push(self, time: float, handler, payload=None) -> None:
        if time < self.now:
            raise ContractError(f"cannot schedule event at {time} before now={self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), handler, payload))

    def __len__(self):
        return len(self._heap)

    def run_until(self, t: float) -> int:
        """Process every event with time <= t in deterministic order.

        Advances the clock to exactly t and returns the number of events
        processed.
        """
        if t < self.now:
            raise ContractError("cannot run backwards in time")
        processed = 0
        heap = self._heap
        while heap and heap[0][0] <= t:
            time, _seq, handler, payload = heapq.heappop(heap)
            self.now = time
            handler(payload)
            processed += 1
        self.now = t
        return processed


@dataclass
class TamperRule:
    """Per-router corruption: add a[i] to measurement i, drop where d[i]."""

    a: np.ndarray
    d: np.ndarray
    start_time: float = 0.0
    drop_setpoints: bool = False
    label: str = ""


@dataclass
class TraceEvent:
    time: float
    pid: int
    event: str     # send | forward | tamper | drop_attack | drop_loss | deliver
    node: str
    tampered: bool
    dropped: bool


class PacketNetwork:
    """Binds a CommGraph + RoutingMatrix to the event queue.

    Measurement deliveries land in `pool` (latest value per measurement id);
    set-point deliveries invoke `on_setpoint(key, value, time)`.
    """

    def __init__(self, graph: CommGraph, routing: RoutingMatrix, loss_seed: int = 0,
                 record_trace: bool = False):
        self.graph = graph
        self.routing = routing
        self.rng_loss = np.random.default_rng(loss_seed)
        self.record_trace = record_trace
        self.trace: list[TraceEvent] = []
        self.pool: dict[int, tuple[float, float]] = {}   # meas -> (value, created_at)
        self.on_setpoint = None
        self.compromised: dict[str, TamperRule] = {}
        self._pid = itertools.count()
        self._link = graph.link_by_id
        self.sent = 0
        self.delivered = 0
        self.dropped_loss = 0
        self.dropped_attack = 0
        # primary path per measurement (first routing row)
        self._paths = {m: rows[0] for m, rows in routing.by_measurement.items() if rows}

    # --- attack wiring ----------------------------------------------------

    def compromise_router(self, node_id: str, attack, coverage: str = "strict") -> TamperRule:
        """Install a man-in-the-middle behavior override on a router.

        `attack` provides vectors a and d plus start_time (an AttackSpec
        qualifies).  With coverage="strict" the attack must only touch
        measurements routed through this node; "clip" silently restricts it
        to them.
        """
        node = self.graph.node_by_id.get(node_id)
        if node is None or node.kind != "router":
            raise ContractError(f"{node_id!r} is not a router")
        a = np.asarray(attack.a, dtype=float).copy()
        d = np.asarray(attack.d).astype(bool).copy()
        routed = measurements_through(self.routing, node_id)
        touched = set(np.flatnonzero(a != 0.0)) | set(np.flatnonzero(d))
        outside = touched - routed
        if outside:
            if coverage == "strict":
                raise ConfigError(
                    f"attack touches measurements {sorted(outside)} that are not "
                    f"routed through {node_id} (attack infeasible at this vantage point)")
            mask = np.zeros(a.shape[0], dtype=bool)
            mask[sorted(routed)] = True
            a = np.where(mask, a, 0.0)
            d = d & mask
        rule = TamperRule(a=a, d=d, start_time=float(getattr(attack, "start_time", 0.0)),
                          label=node_id)
        self.compromised[node_id] = rule
        return rule

    # --- sending ----------------------------------------------------------

    def send(self, queue: EventQueue, packet: Packet) -> Packet:
        """Inject a packet at the head of its path and schedule its journey."""
        if len(packet.node_seq) != len(packet.link_seq) + 1:
            raise ContractError("malformed packet path")
        self.sent += 1
        self._trace(queue.now, packet, "send", packet.node_seq[0])
        self._process_at_node(queue, packet, 0)
        return packet

    def send_measurement(self, queue: EventQueue, measurement: int, value: float) -> Packet:
        rv = self._paths[measurement]
        packet = Packet(next(self._pid), "measurement", measurement, float(value),
                        queue.now, rv.node_seq, rv.link_seq)
        return self.send(queue, packet)

    def send_setpoint(self, queue: EventQueue, key: int, value: float,
                      rtu_node: str) -> Packet:
        """Reverse route MTU -> RTU for a set-point command."""
        rv = None
        for row in self.routing.rows:
            if row.node_seq[0] == rtu_node:
                rv = row
                break
        if rv is None:
            raise ContractError(f"no route available towards {rtu_node}")
        packet = Packet(next(self._pid), "setpoint", key, float(value), queue.now,
                        tuple(reversed(rv.node_seq)), tuple(reversed(rv.link_seq)))
        return self.send(queue, packet)

    # --- event mechanics --------------------------------------------------

    def _process_at_node(self, queue: EventQueue, packet: Packet, pos: int) -> None:
        node_id = packet.node_seq[pos]
        packet.hop_index = pos
        rule = self.compromised.get(node_id)
        if rule is not None and queue.now >= rule.start_time:
            if packet.kind == "measurement":
                i = packet.key
                if rule.d[i]:
                    packet.dropped = True
                    self.dropped_attack += 1
                    self._trace(queue.now, packet, "drop_attack", node_id)
                    return
                if rule.a[i] != 0.0 and not packet.tampered:
                    packet.value += rule.a[i]
                    packet.tampered = True
                    self._trace(queue.now, packet, "tamper", node_id)
            elif packet.kind == "setpoint" and rule.drop_setpoints:
                packet.dropped = True
                self.dropped_attack += 1
                self._trace(queue.now, packet, "drop_attack", node_id)
                return
        if pos == len(packet.node_seq) - 1:
            self._deliver(queue, packet, node_id)
            return
        link = self._link[packet.link_seq[pos]]
        if link.loss > 0.0 and self.rng_loss.random() < link.loss:
            packet.dropped = True
            self.dropped_loss += 1
            self._trace(queue.now, packet, "drop_loss", node_id)
            return
        self._trace(queue.now, packet, "forward", node_id)
        queue.push(queue.now + link.latency, self._arrival, (queue, packet, pos + 1))

    def _arrival(self, payload) -> None:
        queue, packet, pos = payload
        self._process_at_node(queue, packet, pos)

    def _deliver(self, queue: EventQueue, packet: Packet, node_id: str) -> None:
        self.delivered += 1
        self._trace(queue.now, packet, "deliver", node_id)
        if packet.kind == "measurement":
            old = self.pool.get(packet.key)
            if old is None or packet.created_at >= old[1]:
                self.pool[packet.key] = (packet.value, packet.created_at)
        elif self.on_setpoint is not None:
            self.on_setpoint(packet.key, packet.value, queue.now)

    def _trace(self, time, packet, event, node):
        if self.record_trace:
            self.trace.append(TraceEvent(time, packet.pid, event, node,
                                         packet.tampered, packet.dropped))


def pool_snapshot(network: PacketNetwork, m: int, now: float,
                  freshness: float) -> tuple[np.ndarray, np.ndarray]:
    """Assemble (values, available) from the MTU pool.

    An entry is available iff present and not older than `freshness` seconds
    (one measurement cycle in the co-simulation engine).
    """
    values = np.zeros(m)
    avail = np.zeros(m, dtype=bool)
    for i, (value, created) in network.pool.items():
        if now - created <= freshness + 1e-12:
            values[i] = value
            avail[i] = True
    return values, avail
