"""Fault injection primitives, deterministic input perturbations, and the
abort guard.

Events are applied to a running closed-loop simulation and reverted at the
end of their window; revert restores the touched network state bit for bit.
Overlapping latency or drop injections compose additively (drop probability
clamped to [0, 1]); overlapping slowdowns compose by maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netsim import Role
from .plant import LimitClass, ProcessLimits

# Maximal-length LFSR tap sets (Fibonacci form, 1-based bit positions).
LFSR_TAPS = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 10, 4),
    13: (13, 12, 11, 8),
    14: (14, 13, 12, 2),
    15: (15, 14),
    16: (16, 15, 13, 4),
}

DEFAULT_PERTURBATION_WINDOW_MIN = 1440.0  # one day


class UnknownTarget(Exception):
    """Event names a node or link the simulation does not have."""


# -- event taxonomy --------------------------------------------------------


@dataclass(frozen=True)
class TerminateNode:
    node: int
    duration: float


@dataclass(frozen=True)
class OverloadNode:
    node: int
    slowdown: float
    duration: float

    def __post_init__(self):
        if self.slowdown < 1.0:
            raise ValueError(f"slowdown must be >= 1, got {self.slowdown}")


@dataclass(frozen=True)
class LinkSelector:
    """Concrete (src, dst) pairs, or a role-to-role match on existing hops."""

    pairs: tuple | None = None
    src_role: Role | None = None
    dst_role: Role | None = None

    def resolve(self, network):
        if self.pairs is not None:
            for a, b in self.pairs:
                if a not in network.nodes or b not in network.nodes:
                    raise UnknownTarget(f"link ({a}, {b}) references unknown node")
            return network.links_matching(pairs=self.pairs)
        links = network.links_matching(src_role=self.src_role, dst_role=self.dst_role)
        if not links:
            raise UnknownTarget(
                f"no links match roles {self.src_role} -> {self.dst_role}"
            )
        return links


@dataclass(frozen=True)
class InjectLatency:
    links: LinkSelector
    added_latency: float
    duration: float


@dataclass(frozen=True)
class InjectNetworkError:
    links: LinkSelector
    drop_prob: float
    duration: float


@dataclass(frozen=True)
class SubnetUnavailable:
    duration: float


@dataclass(frozen=True)
class RestartPlc:
    node: int
    downtime: float

    @property
    def duration(self):
        return self.downtime


@dataclass(frozen=True)
class SensorFault:
    STUCK_AT_LAST = "stuck_at_last"
    BIAS = "bias"
    SILENCE = "silence"

    mode: str
    bias: float = 0.0

    def __post_init__(self):
        if self.mode not in (self.STUCK_AT_LAST, self.BIAS, self.SILENCE):
            raise ValueError(f"unknown sensor fault mode {self.mode!r}")


@dataclass(frozen=True)
class FailSensor:
    node: int
    fault: SensorFault
    duration: float


@dataclass(frozen=True)
class ScheduledEvent:
    start_time: float  # minutes on the injection clock
    event: object

    def __post_init__(self):
        if self.start_time < 0:
            raise ValueError("event start_time must be >= 0")
        if self.event.duration < 0:
            raise ValueError("event duration must be >= 0")


@dataclass(frozen=True)
class EventSchedule:
    entries: tuple

    @classmethod
    def of(cls, *entries):
        return cls(entries=tuple(entries))

    def sorted_entries(self):
        return sorted(
            enumerate(self.entries), key=lambda kv: (kv[1].start_time, kv[0])
        )


# -- application to a running simulation -----------------------------------


def _node(sim, node_id):
    node = sim.network.nodes.get(node_id)
    if node is None:
        raise UnknownTarget(f"no network node {node_id}")
    return node


def apply_event(sim, event):
    """Switch an event on.  sim is a closed-loop simulation engine."""
    if isinstance(event, TerminateNode):
        _node(sim, event.node).alive = False
    elif isinstance(event, OverloadNode):
        node = _node(sim, event.node)
        base = sim.base_slowdown[event.node]
        sim.slowdown_overlays.setdefault(event.node, []).append(event.slowdown)
        node.slowdown = max(base, *sim.slowdown_overlays[event.node])
    elif isinstance(event, InjectLatency):
        links = event.links.resolve(sim.network)
        sim.link_grants[id(event)] = links
        for link in links:
            link.latency_overlays.append(event.added_latency)
    elif isinstance(event, InjectNetworkError):
        links = event.links.resolve(sim.network)
        sim.link_grants[id(event)] = links
        for link in links:
            link.drop_overlays.append(event.drop_prob)
    elif isinstance(event, SubnetUnavailable):
        sim.network.nodes[sim.network.router_id].alive = False
    elif isinstance(event, RestartPlc):
        node = _node(sim, event.node)
        if node.role is not Role.CONTROLLER:
            raise UnknownTarget(f"node {event.node} is not a controller")
        node.alive = False
    elif isinstance(event, FailSensor):
        node = _node(sim, event.node)
        if node.role is not Role.SENSOR:
            raise UnknownTarget(f"node {event.node} is not a sensor")
        sim.sensor_faults[event.node] = event.fault
    else:
        raise UnknownTarget(f"unknown event type {type(event).__name__}")


def revert_event(sim, event):
    """Switch an event off, restoring what it touched exactly."""
    if isinstance(event, TerminateNode):
        _node(sim, event.node).alive = True
    elif isinstance(event, OverloadNode):
        overlays = sim.slowdown_overlays.get(event.node, [])
        overlays.remove(event.slowdown)
        base = sim.base_slowdown[event.node]
        _node(sim, event.node).slowdown = max(base, *overlays) if overlays else base
    elif isinstance(event, InjectLatency):
        for link in sim.link_grants.pop(id(event)):
            link.latency_overlays.remove(event.added_latency)
    elif isinstance(event, InjectNetworkError):
        for link in sim.link_grants.pop(id(event)):
            link.drop_overlays.remove(event.drop_prob)
    elif isinstance(event, SubnetUnavailable):
        sim.network.nodes[sim.network.router_id].alive = True
    elif isinstance(event, RestartPlc):
        _node(sim, event.node).alive = True
        sim.reset_agent_integrator(event.node)
    elif isinstance(event, FailSensor):
        sim.sensor_faults.pop(event.node, None)
    else:
        raise UnknownTarget(f"unknown event type {type(event).__name__}")


# -- deterministic input perturbations --------------------------------------


@dataclass(frozen=True)
class PerturbationSequence:
    """Three-level step sequence around a nominal input level.

    Holds u0, steps to u0 + delta for one window starting at t0, then to
    u0 - delta for a second window, then back to u0.  The two windows cancel
    exactly in integral.
    """

    u0: float
    delta: float
    t0: float
    window: float = DEFAULT_PERTURBATION_WINDOW_MIN

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")


def eval_perturbation(p: PerturbationSequence, t: float) -> float:
    if t < p.t0:
        return p.u0
    if t < p.t0 + p.window:
        return p.u0 + p.delta
    if t < p.t0 + 2.0 * p.window:
        return p.u0 - p.delta
    return p.u0


def perturbation_integral(p: PerturbationSequence, a: float, b: float) -> float:
    """Exact integral of (signal - u0) over [a, b], by breakpoint pieces."""
    if b < a:
        raise ValueError("need a <= b")

    def overlap(lo, hi):
        return max(0.0, min(b, hi) - max(a, lo))

    up = overlap(p.t0, p.t0 + p.window) * p.delta
    down = overlap(p.t0 + p.window, p.t0 + 2.0 * p.window) * p.delta
    return up - down


@dataclass
class PrbsGenerator:
    """Maximal-length LFSR whose freshest bit pair picks a level.

    Bit pairs map 00 -> 0, 01 -> +delta, 10 -> -delta, 11 -> 0 (older bit
    first).  The bit sequence has period 2**k - 1 and the +delta / -delta
    counts over one period are exactly balanced.
    """

    k: int = 10
    register: int = 1
    delta: float = 1.0
    prev_bit: int | None = None

    def __post_init__(self):
        if self.k not in LFSR_TAPS:
            raise ValueError(f"no maximal tap set for k={self.k}")
        if not 0 < self.register < (1 << self.k):
            raise ValueError("register must be a non-zero k-bit value")


def prbs_next(g: PrbsGenerator) -> float:
    """Advance one bit and return the mapped level."""
    # Right-shift Fibonacci form: tap positions count from the output end,
    # which implements the reciprocal of the tabulated polynomial (primitive
    # exactly when the original is, so the period stays 2**k - 1).
    fb = 0
    for tap in LFSR_TAPS[g.k]:
        fb ^= (g.register >> (g.k - tap)) & 1
    out_bit = g.register & 1
    g.register = (g.register >> 1) | (fb << (g.k - 1))
    prev = g.prev_bit
    g.prev_bit = out_bit
    if prev is None or prev == out_bit:
        return 0.0
    return g.delta if (prev, out_bit) == (0, 1) else -g.delta


# -- abort guard ------------------------------------------------------------


@dataclass(frozen=True)
class GuardVerdict:
    aborted: bool
    variable: str | None = None
    value: float | None = None
    limit: float | None = None
    time: float | None = None


CONTINUE = GuardVerdict(aborted=False)


@dataclass(frozen=True)
class AbortGuard:
    limits: ProcessLimits
    enabled: bool = True


def guard_check(values: dict, guard: AbortGuard, t: float) -> GuardVerdict:
    """Abort on the first shutdown-limit violation; anything else continues."""
    if not guard.enabled:
        return CONTINUE
    for name, v in values.items():
        if name not in guard.limits:
            continue
        lim = guard.limits[name]
        if lim.classify(v) is LimitClass.SHUTDOWN_EXCEEDED:
            bound = lim.shutdown_high if (
                lim.shutdown_high is not None and v > lim.shutdown_high
            ) else lim.shutdown_low
            return GuardVerdict(
                aborted=True, variable=name, value=v, limit=bound, time=t
            )
    return CONTINUE
