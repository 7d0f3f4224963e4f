"""Continuous plant models and the process-safety bookkeeping around them.

A plant is dx/dt = g(x, u, delta) with an output-deviation map
h(x, u, delta).  Integration is classical fixed-step RK4 with the inputs and
the disturbance held constant across each step (zero-order hold).  Process
variables are classified against two nested limit bands, and boundary
performance is summarized by three key process indicators: throughput rate,
input feed rate, and output yield.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# trapezoid superseded trapz in numpy 2
_trapz = getattr(np, "trapezoid", None) or np.trapz

from .topology import EigenSolveFailure


class NonFiniteState(Exception):
    """Integration produced a NaN or infinity."""


class UnknownVariable(Exception):
    """A named process variable has no limit entry."""


class EmptyWindow(Exception):
    """A KPI window must contain at least two samples."""


@dataclass(frozen=True)
class DisturbanceSignal:
    """Piecewise-constant exogenous input: sorted (time, vector) breakpoints.

    Before the first breakpoint the first vector applies; each breakpoint's
    vector holds until the next one.
    """

    times: tuple
    values: tuple  # tuple of tuples, one vector per breakpoint

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("need matching, non-empty times and values")
        if list(self.times) != sorted(self.times):
            raise ValueError("breakpoint times must be sorted ascending")
        n = len(self.values[0])
        if any(len(v) != n for v in self.values):
            raise ValueError("all breakpoint vectors must share one dimension")

    @classmethod
    def constant(cls, vector):
        return cls(times=(0.0,), values=(tuple(float(v) for v in vector),))

    @classmethod
    def from_breakpoints(cls, points):
        pts = sorted(points, key=lambda p: p[0])
        return cls(
            times=tuple(float(p[0]) for p in pts),
            values=tuple(tuple(float(v) for v in p[1]) for p in pts),
        )

    def value_at(self, t: float) -> np.ndarray:
        k = bisect.bisect_right(self.times, t) - 1
        if k < 0:
            k = 0
        return np.asarray(self.values[k], dtype=float)


@dataclass
class PlantState:
    t: float
    x: np.ndarray


@dataclass(frozen=True)
class PlantModel:
    """Drift map g, output map h, and the naming needed around them.

    agent_signal maps (x, u, delta) to the m-vector of per-agent sensor
    readings used by the coordination layer.  boundary_maps are named
    instantaneous KPI signals (x, u, delta) -> float.
    """

    n: int
    m: int
    n_delta: int
    g: object
    h: object
    state_names: tuple
    input_names: tuple
    agent_signal: object = None
    boundary_maps: dict = field(default_factory=dict)

    def named_state(self, s: PlantState) -> dict:
        return {name: float(v) for name, v in zip(self.state_names, s.x)}


class LimitClass(Enum):
    NORMAL = "normal"
    NORMAL_EXCEEDED = "normal_exceeded"
    SHUTDOWN_EXCEEDED = "shutdown_exceeded"


@dataclass(frozen=True)
class VariableLimits:
    """Nested operating bands; any bound may be absent.

    Where present: shutdown_low <= normal_low <= normal_high <= shutdown_high.
    """

    normal_low: float | None = None
    normal_high: float | None = None
    shutdown_low: float | None = None
    shutdown_high: float | None = None

    def __post_init__(self):
        seq = [self.shutdown_low, self.normal_low, self.normal_high, self.shutdown_high]
        present = [v for v in seq if v is not None]
        if present != sorted(present):
            raise ValueError(f"limit bounds out of order: {seq}")

    def classify(self, v: float) -> LimitClass:
        if (self.shutdown_low is not None and v < self.shutdown_low) or (
            self.shutdown_high is not None and v > self.shutdown_high
        ):
            return LimitClass.SHUTDOWN_EXCEEDED
        if (self.normal_low is not None and v < self.normal_low) or (
            self.normal_high is not None and v > self.normal_high
        ):
            return LimitClass.NORMAL_EXCEEDED
        return LimitClass.NORMAL


@dataclass(frozen=True)
class ProcessLimits:
    variables: dict  # name -> VariableLimits

    def __contains__(self, name):
        return name in self.variables

    def __getitem__(self, name):
        return self.variables[name]


@dataclass(frozen=True)
class EquilibriumParams:
    """Scalar gain gamma > 0 and the committed demand d."""

    gamma: float
    d: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class KpiSample:
    throughput_rate: float
    input_feed_rate: float
    output_yield: float
    window: tuple


def step(model: PlantModel, s: PlantState, u, delta_signal, dt: float) -> PlantState:
    """One classical RK4 step with u and delta held over [t, t+dt]."""
    u = np.asarray(u, dtype=float)
    if delta_signal is None:
        delta = np.zeros(model.n_delta)
    elif isinstance(delta_signal, DisturbanceSignal):
        delta = delta_signal.value_at(s.t)
    else:
        delta = np.asarray(delta_signal, dtype=float)
    x = s.x
    k1 = model.g(x, u, delta)
    k2 = model.g(x + 0.5 * dt * k1, u, delta)
    k3 = model.g(x + 0.5 * dt * k2, u, delta)
    k4 = model.g(x + dt * k3, u, delta)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"non-finite state at t={s.t + dt}: {x_new}")
    return PlantState(t=s.t + dt, x=x_new)


def output_deviation(model: PlantModel, s: PlantState, u, delta_signal=None):
    if delta_signal is None:
        delta = np.zeros(model.n_delta)
    elif isinstance(delta_signal, DisturbanceSignal):
        delta = delta_signal.value_at(s.t)
    else:
        delta = np.asarray(delta_signal, dtype=float)
    return model.h(s.x, np.asarray(u, dtype=float), delta)


def equilibrium_map(u_bar, p: EquilibriumParams) -> np.ndarray:
    """Steady output deviation for committed inputs u_bar.

    Every component equals (sum(u_bar) - d) / gamma, so the vector is
    componentwise identical by construction and zero exactly when the inputs
    balance the demand.
    """
    u_bar = np.asarray(u_bar, dtype=float)
    val = (float(np.sum(u_bar)) - p.d) / p.gamma
    return np.full(u_bar.shape[0], val)


def check_limits(values: dict, limits: ProcessLimits) -> dict:
    """Classify each named value against its limit bands.

    Raises UnknownVariable for a name without a limits entry.
    """
    out = {}
    for name, v in values.items():
        if name not in limits:
            raise UnknownVariable(f"no limit entry for variable {name!r}")
        out[name] = limits[name].classify(v)
    return out


def kpi(times, product_flow, feed_flow, reactant_flow=None) -> KpiSample:
    """Windowed boundary KPIs from sampled flow series.

    throughput_rate and input_feed_rate are time averages of the product and
    feed flows.  output_yield is product produced over reactant consumed in
    the window, defined as 0 when nothing was fed.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise EmptyWindow(f"need at least 2 samples, got {times.size}")
    product_flow = np.asarray(product_flow, dtype=float)
    feed_flow = np.asarray(feed_flow, dtype=float)
    reactant = feed_flow if reactant_flow is None else np.asarray(reactant_flow, float)
    span = times[-1] - times[0]
    if span <= 0:
        raise EmptyWindow("window has zero duration")
    produced = float(_trapz(product_flow, times))
    consumed = float(_trapz(reactant, times))
    fed = float(_trapz(feed_flow, times))
    out_yield = produced / consumed if consumed > 0 else 0.0
    return KpiSample(
        throughput_rate=produced / span,
        input_feed_rate=fed / span,
        output_yield=out_yield,
        window=(float(times[0]), float(times[-1])),
    )


def verify_exponential_stability(a_cl) -> dict:
    """Strict spectral stability check: max real part < -1e-9.

    Returns {"stable": bool, "rate": float} with rate = -max(Re(eig)).
    """
    a_cl = np.asarray(a_cl, dtype=float)
    try:
        eigs = np.linalg.eigvals(a_cl)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(f"closed-loop eigensolve failed: {exc}") from exc
    worst = float(np.max(eigs.real))
    return {"stable": worst < -1e-9, "rate": -worst}


def linear_test_plant(m: int) -> PlantModel:
    """Decoupled first-order lag per agent: dx_j/dt = -x_j + u_j."""

    def g(x, u, delta):
        return -x + u

    def h(x, u, delta):
        return x.copy()

    return PlantModel(
        n=m,
        m=m,
        n_delta=0,
        g=g,
        h=h,
        state_names=tuple(f"x{j + 1}" for j in range(m)),
        input_names=tuple(f"u{j + 1}" for j in range(m)),
        agent_signal=lambda x, u, delta: x.copy(),
        boundary_maps={},
    )
