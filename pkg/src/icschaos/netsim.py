"""Deterministic fixed-step network simulator for the control traffic.

Nodes live on two LANs (control room and process operations) joined by a
single router; every cross-LAN route is the two-hop path through it, while
same-LAN traffic uses a direct link.  Delivery times are checked once per
simulation step, so a latency lands on the next step boundary at or after
its exact value.

Randomness contract (language independent, for replay oracles)
---------------------------------------------------------------
All randomness comes from counter-based 64-bit streams.  With GOLDEN =
0x9E3779B97F4A7C15 and mix64 the finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2**64), draw i = 1, 2, ... of a stream with seed s is
mix64(s + i * GOLDEN), and a uniform in [0, 1) is that value >> 11, times
2.0**-53.  Each directed link (a, b) owns its own stream, seeded as

    link_seed = mix64(mix64(master_seed ^ 0xA0761D6478BD642F)
                      + (a * 2**20 + b) * GOLDEN)

Per message, per link along the route in order: one drop draw if the link's
effective drop probability is positive (dropped when draw < p), then one
jitter draw if the link's jitter is positive.  Links with zero drop and zero
jitter consume nothing, so quiet traffic never disturbs the streams.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0xA0761D6478BD642F


def mix64(z: int) -> int:
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def link_stream_seed(master_seed: int, src: int, dst: int) -> int:
    key = (src << 20) | dst
    return mix64((mix64(master_seed ^ SEED_SALT) + key * GOLDEN) & MASK64)


@dataclass
class RngStream:
    """Counter-based stream: draw i is mix64(seed + i * GOLDEN)."""

    seed: int
    counter: int = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * GOLDEN) & MASK64)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)


class Role(Enum):
    SENSOR = "sensor"
    CONTROLLER = "controller"
    ACTUATOR = "actuator"
    HISTORIAN = "historian"
    HMI = "hmi"
    ROUTER = "router"


class Lan(Enum):
    CONTROL_ROOM = "control_room"
    PROCESS_OPS = "process_ops"


@dataclass
class NetNode:
    id: int
    role: Role
    lan: Lan
    alive: bool = True
    slowdown: float = 1.0


@dataclass
class Link:
    """Directed link; chaos overlays stack additively and revert exactly.

    Effective values are recomputed from the base plus the overlay lists, so
    removing every overlay restores the base bit for bit.
    """

    src: int
    dst: int
    base_latency: float = 0.0
    jitter: float = 0.0
    drop_prob: float = 0.0
    up: bool = True
    latency_overlays: list = field(default_factory=list)
    drop_overlays: list = field(default_factory=list)

    @property
    def effective_latency(self) -> float:
        if not self.latency_overlays:
            return self.base_latency
        return self.base_latency + sum(self.latency_overlays)

    @property
    def effective_drop(self) -> float:
        if not self.drop_overlays:
            return self.drop_prob
        return min(1.0, max(0.0, self.drop_prob + sum(self.drop_overlays)))


@dataclass(frozen=True)
class StateSample:
    node: int
    value: float
    sample_time: float


@dataclass(frozen=True)
class Command:
    target: int
    value: float


@dataclass
class Message:
    seq: int
    src: int
    dst: int
    payload: object
    send_time: float
    deliver_time: float | None
    dropped: bool


class UnknownRoute(Exception):
    """No route between the given endpoints."""


def _payload_kind(payload):
    return "state_sample" if isinstance(payload, StateSample) else "command"


class Network:
    """Static-routed message fabric with per-link counter RNG streams."""

    def __init__(self, nodes, master_seed: int, default_link=None, link_overrides=None):
        self.nodes = {n.id: n for n in nodes}
        routers = [n for n in nodes if n.role is Role.ROUTER]
        if len(routers) != 1:
            raise ValueError(f"exactly one router required, got {len(routers)}")
        self.router_id = routers[0].id
        self.master_seed = int(master_seed)
        self._default_link = dict(default_link or {})
        self._links = {}
        for ov in link_overrides or []:
            ov = dict(ov)
            src, dst = int(ov.pop("src")), int(ov.pop("dst"))
            self._links[(src, dst)] = Link(src=src, dst=dst, **ov)
        self._streams = {}
        self._queue = []
        self._seq = 0
        self._last_known = {}
        self.message_log = []

    # -- wiring ------------------------------------------------------------

    def link(self, src: int, dst: int) -> Link:
        key = (src, dst)
        if key not in self._links:
            self._links[key] = Link(src=src, dst=dst, **self._default_link)
        return self._links[key]

    def links_matching(self, src_role=None, dst_role=None, pairs=None):
        """Resolve a link selector to concrete Link objects, creating the
        route hops it refers to if they are not materialized yet."""
        if pairs is not None:
            return [self.link(int(a), int(b)) for a, b in pairs]
        out = []
        for key in sorted(self._all_hop_keys()):
            a, b = key
            na, nb = self.nodes[a], self.nodes[b]
            if src_role is not None and na.role is not src_role:
                continue
            if dst_role is not None and nb.role is not dst_role:
                continue
            out.append(self.link(a, b))
        return out

    def _all_hop_keys(self):
        keys = set()
        ids = sorted(self.nodes)
        for a in ids:
            for b in ids:
                if a == b or a == self.router_id or b == self.router_id:
                    continue
                for hop in self._route_keys(a, b):
                    keys.add(hop)
        return keys

    def _route_keys(self, src: int, dst: int):
        a, b = self.nodes[src], self.nodes[dst]
        if a.lan is b.lan:
            return [(src, dst)]
        return [(src, self.router_id), (self.router_id, dst)]

    def route(self, src: int, dst: int):
        if src not in self.nodes or dst not in self.nodes:
            raise UnknownRoute(f"no route {src} -> {dst}: unknown node")
        if src == dst:
            raise UnknownRoute(f"no route from node {src} to itself")
        return self._route_keys(src, dst)

    def _stream(self, key) -> RngStream:
        if key not in self._streams:
            self._streams[key] = RngStream(
                seed=link_stream_seed(self.master_seed, key[0], key[1])
            )
        return self._streams[key]

    def _route_nodes(self, hops):
        nodes = [hops[0][0]]
        nodes.extend(b for _, b in hops)
        return nodes

    # -- traffic -----------------------------------------------------------

    def send(self, src: int, dst: int, payload, send_time: float) -> Message:
        hops = self.route(src, dst)
        self._seq += 1
        msg = Message(
            seq=self._seq,
            src=src,
            dst=dst,
            payload=payload,
            send_time=send_time,
            deliver_time=None,
            dropped=False,
        )
        path_ok = all(self.nodes[n].alive for n in self._route_nodes(hops)) and all(
            self.link(a, b).up for a, b in hops
        )
        if not path_ok:
            msg.dropped = True
        else:
            latency = 0.0
            for a, b in hops:
                link = self.link(a, b)
                p = link.effective_drop
                if p > 0 and self._stream((a, b)).next_float() < p:
                    msg.dropped = True
                    break
                hop_latency = link.effective_latency
                if link.jitter > 0:
                    hop_latency += link.jitter * self._stream((a, b)).next_float()
                latency += hop_latency
            if not msg.dropped:
                latency *= self.nodes[dst].slowdown
                msg.deliver_time = send_time + latency
        if msg.dropped:
            self._log(msg)
        else:
            heapq.heappush(self._queue, (msg.deliver_time, msg.seq, msg))
        return msg

    def deliver_due(self, t: float):
        """Deliver everything due by t, ordered by (deliver_time, seq).

        A message whose route is no longer intact at delivery time (node dead
        or link down) is dropped, so cutting the router stops cross-LAN
        deliveries from that instant, including traffic already in flight.
        """
        out = []
        while self._queue and self._queue[0][0] <= t:
            _, _, msg = heapq.heappop(self._queue)
            hops = self._route_keys(msg.src, msg.dst)
            intact = all(
                self.nodes[n].alive for n in self._route_nodes(hops)
            ) and all(self.link(a, b).up for a, b in hops)
            if not intact:
                msg.dropped = True
                msg.deliver_time = None
                self._log(msg)
                continue
            if isinstance(msg.payload, StateSample):
                key = (msg.dst, msg.payload.node)
                prev = self._last_known.get(key)
                if prev is None or msg.payload.sample_time >= prev[1]:
                    self._last_known[key] = (msg.payload.value, msg.payload.sample_time)
            self._log(msg)
            out.append(msg)
        return out

    def last_known(self, receiver: int, source: int):
        """Latest-sampled value the receiver holds for source, or None."""
        return self._last_known.get((receiver, source))

    def _log(self, msg: Message):
        self.message_log.append(
            {
                "seq": msg.seq,
                "src": msg.src,
                "dst": msg.dst,
                "kind": _payload_kind(msg.payload),
                "send_time": msg.send_time,
                "deliver_time": msg.deliver_time,
                "dropped": msg.dropped,
            }
        )

    def export_message_log(self) -> str:
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.message_log)


def two_lan_network(
    m: int,
    master_seed: int = 0,
    default_link=None,
    sensor_base=101,
    controller_base=201,
    actuator_base=301,
    historian_id=None,
    hmi_id=None,
    router_id=900,
):
    """Standard layout: sensors/actuators on the process LAN, controllers on
    the control-room LAN, one router in between.  Returns (network, agent_map)
    where agent_map[j] = (sensor_id, controller_id, actuator_id)."""
    nodes = []
    agent_map = []
    for j in range(m):
        s, c, a = sensor_base + j, controller_base + j, actuator_base + j
        nodes.append(NetNode(id=s, role=Role.SENSOR, lan=Lan.PROCESS_OPS))
        nodes.append(NetNode(id=c, role=Role.CONTROLLER, lan=Lan.CONTROL_ROOM))
        nodes.append(NetNode(id=a, role=Role.ACTUATOR, lan=Lan.PROCESS_OPS))
        agent_map.append((s, c, a))
    if historian_id is not None:
        nodes.append(NetNode(id=historian_id, role=Role.HISTORIAN, lan=Lan.PROCESS_OPS))
    if hmi_id is not None:
        nodes.append(NetNode(id=hmi_id, role=Role.HMI, lan=Lan.CONTROL_ROOM))
    nodes.append(NetNode(id=router_id, role=Role.ROUTER, lan=Lan.CONTROL_ROOM))
    net = Network(nodes, master_seed=master_seed, default_link=default_link)
    return net, agent_map
