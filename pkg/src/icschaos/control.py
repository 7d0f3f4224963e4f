"""Distributed-averaging integral control and the setpoint layer above it.

Each agent j integrates

    du_j/dt = -C_j * x_j + sum_l a_jl * x_l + beta_j

where x are the exchanged measurements; in matrix form du/dt = -Q x + beta
with Q = diag(C) - A.  C_j defaults to the weight row sum, which makes Q the
graph Laplacian; adding local feedback on top of the row sum is supported
and used by the plant scenario configs.

Setpoints come from minimizing separable convex disutilities subject to a
total-demand equality.  The solver searches the scalar dual variable: for a
price nu each component solves z_j'(u) = nu in its box (strictly convex, so
unique), and the price is adjusted by safeguarded Newton/bisection until the
committed total matches demand to 1e-10.  `verify_optimality` checks the
stationarity system of the equilibrium directly and is kept independent of
the solver's internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chaos as chaos_mod
from .netsim import Command, StateSample
from .plant import (
    DisturbanceSignal,
    EquilibriumParams,
    PlantModel,
    PlantState,
    equilibrium_map,
    step as plant_step,
)
from .topology import Topology, spectral_summary, laplacian

BALANCE_TOL = 1e-10
_MAX_OUTER = 200
_MAX_INNER = 200


class Infeasible(Exception):
    """Demand cannot be met inside the setpoint boxes."""


class NoConvergence(Exception):
    """Iteration budget exhausted before meeting tolerance."""


class ConditionViolated(Exception):
    """A structural precondition of the certificate does not hold."""


class DimensionMismatch(Exception):
    """Vector or matrix sizes disagree with the topology."""


@dataclass(frozen=True)
class AgentState:
    node: int
    u: float
    beta: float = 0.0
    c: float | None = None  # None -> weight row sum


@dataclass(frozen=True)
class DisutilityFunction:
    """Quadratic pull toward a reference plus log barriers on a box.

    z(u) = (u - reference)^2 / (2 * weight) - mu * [log(u - u_low)
           + log(u_high - u)], barrier terms present only for finite bounds.
    Strictly convex on the open box whenever weight > 0.
    """

    reference: float
    weight: float = 1.0
    u_low: float = -math.inf
    u_high: float = math.inf
    mu: float = 1e-6

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if not self.u_low < self.u_high:
            raise ValueError("u_low must be below u_high")

    def value(self, u: float) -> float:
        z = (u - self.reference) ** 2 / (2.0 * self.weight)
        if self.mu > 0:
            if math.isfinite(self.u_low):
                z -= self.mu * math.log(u - self.u_low)
            if math.isfinite(self.u_high):
                z -= self.mu * math.log(self.u_high - u)
        return z

    def slope(self, u: float) -> float:
        s = (u - self.reference) / self.weight
        if self.mu > 0:
            if math.isfinite(self.u_low):
                s -= self.mu / (u - self.u_low)
            if math.isfinite(self.u_high):
                s += self.mu / (self.u_high - u)
        return s

    def curvature(self, u: float) -> float:
        c = 1.0 / self.weight
        if self.mu > 0:
            if math.isfinite(self.u_low):
                c += self.mu / (u - self.u_low) ** 2
            if math.isfinite(self.u_high):
                c += self.mu / (self.u_high - u) ** 2
        return c


@dataclass(frozen=True)
class SetpointSolution:
    u_h: np.ndarray
    nu: float
    balance_residual: float
    stationarity_residual: float


@dataclass(frozen=True)
class OptimalityCertificate:
    q_h: np.ndarray
    residual_balance: float
    residual_conjugate: float

    @property
    def passed(self) -> bool:
        return self.residual_balance <= 1e-8 and self.residual_conjugate <= 1e-8


# -- scalar slope inversion --------------------------------------------------


def _barrier_active(z: DisutilityFunction) -> bool:
    return z.mu > 0 and (math.isfinite(z.u_low) or math.isfinite(z.u_high))


def _invert_slope(z: DisutilityFunction, nu: float, guess: float | None = None):
    """Solve z'(u) = nu for u, strictly inside any finite bounds."""
    if not _barrier_active(z):
        u = z.reference + z.weight * nu
        if z.mu == 0:
            u = min(max(u, z.u_low), z.u_high)  # clamp only in barrier-free mode
        return u

    lo, hi = z.u_low, z.u_high
    # Establish a bracket [a, b] with z'(a) <= nu <= z'(b).
    if math.isfinite(lo) and math.isfinite(hi):
        width = hi - lo
        a = lo + 1e-14 * width
        b = hi - 1e-14 * width
    elif math.isfinite(lo):
        a = lo + 1e-14 * max(1.0, abs(lo))
        b = max(z.reference + z.weight * nu, a + 1.0)
        while z.slope(b) < nu:
            b = a + 2.0 * (b - a)
    else:
        b = hi - 1e-14 * max(1.0, abs(hi))
        a = min(z.reference + z.weight * nu, b - 1.0)
        while z.slope(a) > nu:
            a = b - 2.0 * (b - a)
    u = guess if guess is not None and a < guess < b else 0.5 * (a + b)
    best_u, best_f = u, math.inf
    for _ in range(_MAX_INNER):
        f = z.slope(u) - nu
        if abs(f) < best_f:
            best_u, best_f = u, abs(f)
        if f > 0:
            b = u
        else:
            a = u
        if abs(f) <= 1e-13 * max(1.0, abs(nu)):
            return u
        u_newton = u - f / z.curvature(u)
        u = u_newton if a < u_newton < b else 0.5 * (a + b)
        if b - a <= 1e-15 * max(1.0, abs(a), abs(b)):
            # Bracket is at float granularity; the slope mismatch cannot get
            # below curvature * ulp(u), so hand back the best iterate seen.
            return best_u
    raise NoConvergence(f"slope inversion stalled at nu={nu}")


def conjugate_gradient_map(z_j: DisutilityFunction, q: float) -> float:
    """Gradient of the convex conjugate: the u where z_j' equals the price q."""
    return _invert_slope(z_j, q)


def _price_sensitivity(z: DisutilityFunction, u: float) -> float:
    # du/dnu of the slope inversion; zero once a barrier-free input clamps
    if z.mu == 0 and (u <= z.u_low or u >= z.u_high):
        return 0.0
    return 1.0 / z.curvature(u)


def _kkt_residual(z: DisutilityFunction, u: float, nu: float) -> float:
    s = z.slope(u)
    if z.mu == 0:
        if u <= z.u_low:
            return max(0.0, nu - s)
        if u >= z.u_high:
            return max(0.0, s - nu)
    return abs(s - nu)


# -- setpoint optimization ----------------------------------------------------


def solve_setpoints(z_list, d_cu: float) -> SetpointSolution:
    """Minimize total disutility subject to the inputs summing to d_cu."""
    z_list = list(z_list)
    if not z_list:
        raise DimensionMismatch("need at least one disutility")
    lo_sum = sum(z.u_low for z in z_list)
    hi_sum = sum(z.u_high for z in z_list)
    if not (lo_sum < d_cu < hi_sum):
        raise Infeasible(
            f"demand {d_cu} outside the open box-sum ({lo_sum}, {hi_sum})"
        )

    guesses = [None] * len(z_list)

    def total(nu):
        us = [
            _invert_slope(z, nu, guesses[j]) for j, z in enumerate(z_list)
        ]
        guesses[:] = us
        return sum(us), us

    def mid(z):
        if math.isfinite(z.u_low) and math.isfinite(z.u_high):
            return 0.5 * (z.u_low + z.u_high)
        return z.reference

    nu_lo = min(z.slope(mid(z)) for z in z_list) - 1.0
    nu_hi = max(z.slope(mid(z)) for z in z_list) + 1.0
    step_out = 1.0
    for _ in range(_MAX_OUTER):
        if total(nu_lo)[0] < d_cu:
            break
        nu_lo -= step_out
        step_out *= 2.0
    else:
        raise NoConvergence("could not bracket the price from below")
    step_out = 1.0
    for _ in range(_MAX_OUTER):
        if total(nu_hi)[0] > d_cu:
            break
        nu_hi += step_out
        step_out *= 2.0
    else:
        raise NoConvergence("could not bracket the price from above")

    nu = 0.5 * (nu_lo + nu_hi)
    us = None
    for _ in range(_MAX_OUTER):
        s, us = total(nu)
        miss = s - d_cu
        if abs(miss) <= BALANCE_TOL:
            break
        if miss > 0:
            nu_hi = nu
        else:
            nu_lo = nu
        dsum = sum(_price_sensitivity(z, u) for z, u in zip(z_list, us))
        nu_newton = nu - miss / dsum if dsum > 0 else nu
        nu = nu_newton if nu_lo < nu_newton < nu_hi else 0.5 * (nu_lo + nu_hi)
    else:
        raise NoConvergence(f"price search stalled; last imbalance {miss}")

    u_h = np.array(us)
    stationarity = max(_kkt_residual(z, u, nu) for z, u in zip(z_list, u_h))
    return SetpointSolution(
        u_h=u_h,
        nu=nu,
        balance_residual=abs(float(u_h.sum()) - d_cu),
        stationarity_residual=stationarity,
    )


def verify_optimality(
    t: Topology, d_diag, sol: SetpointSolution, p: EquilibriumParams, z_list
) -> OptimalityCertificate:
    """Stationarity certificate for a solved setpoint, independent of solver.

    d_diag is the diagonal of the non-negative output weighting D.  Checks
    the equilibrium system at q_h = nu * ones: the weighted steady output
    deviation must cancel against the Laplacian applied to the price vector,
    and each input must equal the conjugate-gradient map of its price.
    Requires the left null vector condition x_L^T D 1 > 0.
    """
    d_diag = np.asarray(d_diag, dtype=float)
    m = t.m
    if d_diag.shape != (m,):
        raise DimensionMismatch(f"D diagonal must have length {m}, got {d_diag.shape}")
    if np.any(d_diag < 0):
        raise ConditionViolated("D must be non-negative")
    if len(z_list) != m or sol.u_h.shape[0] != m:
        raise DimensionMismatch("solution/disutility count must match topology")
    summ = spectral_summary(t)
    if summ.zero_multiplicity != 1:
        raise ConditionViolated(
            f"Laplacian zero eigenvalue has multiplicity {summ.zero_multiplicity}"
        )
    if not float(np.dot(summ.left_null_vector, d_diag)) > 0:
        raise ConditionViolated("left null vector weighted by D has no positive mass")
    q_h = sol.nu * np.ones(m)
    res_bal = float(
        np.max(np.abs(d_diag * equilibrium_map(sol.u_h, p) + laplacian(t) @ q_h))
    )
    res_conj = float(
        max(
            abs(u - conjugate_gradient_map(z, q))
            for u, z, q in zip(sol.u_h, z_list, q_h)
        )
    )
    return OptimalityCertificate(
        q_h=q_h, residual_balance=res_bal, residual_conjugate=res_conj
    )


# -- coordination law ---------------------------------------------------------


def coupling_matrix(t: Topology, agents) -> np.ndarray:
    """Q = diag(C) - A with C defaulting to the weight row sums."""
    if len(agents) != t.m:
        raise DimensionMismatch(f"{len(agents)} agents for {t.m} topology nodes")
    a = t.weights
    c = np.array(
        [
            ag.c if ag.c is not None else float(a[j].sum())
            for j, ag in enumerate(agents)
        ]
    )
    return np.diag(c) - a


def dapi_derivative(t: Topology, agents, x) -> np.ndarray:
    """Integrator rates du/dt = -Q x + beta for a shared measurement vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (t.m,):
        raise DimensionMismatch(f"x has shape {x.shape}, need ({t.m},)")
    q = coupling_matrix(t, agents)
    beta = np.array([ag.beta for ag in agents])
    return -q @ x + beta


def dapi_closed_loop_matrix(
    t: Topology, agents, plant_pole: float = 1.0, deflate_conserved: bool = True
) -> np.ndarray:
    """State matrix of the coupled loop d/dt [x; u] on first-order-lag plants.

    When Q 1 = 0 the loop conserves the input total and its equilibria form a
    line, so the raw matrix always carries one zero eigenvalue along that
    family.  With deflate_conserved the matrix is similarity-reduced to the
    complement of the family's direction, leaving exactly the dynamics
    transverse to the equilibrium set; stability of the reduced matrix is
    stability of the consensus loop.
    """
    m = t.m
    q = coupling_matrix(t, agents)
    a_cl = np.zeros((2 * m, 2 * m))
    a_cl[:m, :m] = -plant_pole * np.eye(m)
    a_cl[:m, m:] = np.eye(m)
    a_cl[m:, :m] = -q
    if not deflate_conserved:
        return a_cl
    ones2m = np.ones(2 * m)
    if np.max(np.abs(a_cl @ ones2m)) != 0.0:
        return a_cl  # no conserved family; nothing to deflate
    # Orthonormal basis whose first column spans the equilibrium family.
    v = ones2m / np.linalg.norm(ones2m)
    basis = np.eye(2 * m)
    basis[:, 0] = v
    qmat, _ = np.linalg.qr(basis)
    # QR may flip signs; only the span matters.
    reduced = qmat[:, 1:].T @ a_cl @ qmat[:, 1:]
    return reduced


# -- closed-loop co-simulation ------------------------------------------------


@dataclass
class Trajectory:
    """Sampled run record: named columns over a shared time grid."""

    t: np.ndarray
    columns: dict
    aux: dict = field(default_factory=dict)

    def metric(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.columns[name]
        if name in self.aux:
            return self.aux[name]
        raise KeyError(f"no trajectory column {name!r}")

    def window(self, t_lo: float, t_hi: float):
        mask = (self.t >= t_lo) & (self.t <= t_hi)
        return Trajectory(
            t=self.t[mask],
            columns={k: v[mask] for k, v in self.columns.items()},
            aux={k: v[mask] for k, v in self.aux.items()},
        )


@dataclass(frozen=True)
class InputPerturbation:
    """Additive actuator-side excitation on one input channel.

    kind "three_level" follows a PerturbationSequence; kind "prbs" holds each
    LFSR level for dwell minutes.  Times are on the injection clock.
    """

    input_index: int
    kind: str
    sequence: chaos_mod.PerturbationSequence | None = None
    prbs_k: int = 10
    prbs_register: int = 1
    delta: float = 0.0
    dwell: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("three_level", "prbs"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "three_level" and self.sequence is None:
            raise ValueError("three_level perturbation needs a sequence")
        if self.kind == "prbs" and not self.dwell > 0:
            raise ValueError("prbs dwell must be positive")


class _PrbsTrack:
    def __init__(self, pert: InputPerturbation):
        self.gen = chaos_mod.PrbsGenerator(
            k=pert.prbs_k, register=pert.prbs_register, delta=pert.delta
        )
        self.pert = pert
        self.level = 0.0
        self.next_step = 0

    def level_at(self, t_inj: float) -> float:
        if t_inj < self.pert.t0:
            return 0.0
        want = int((t_inj - self.pert.t0) / self.pert.dwell) + 1
        while self.next_step < want:
            self.level = chaos_mod.prbs_next(self.gen)
            self.next_step += 1
        return self.level


class ClosedLoopSim:
    """Plant, agents, and network advanced together on one fixed step.

    Per step: due chaos events switch on/off, sensors publish (through their
    fault mode), controllers command their actuators, due messages deliver,
    the plant advances one RK4 step under the actuator-held inputs, and the
    integrators advance under the zero-order-held measurement views.  The
    integrator update is exact for piecewise-constant views.
    """

    def __init__(
        self,
        topology: Topology,
        plant: PlantModel,
        agents,
        network,
        agent_map,
        *,
        dt: float,
        x0,
        record_period: float = 1.0,
        sensor_period: float | None = None,
        disturbance: DisturbanceSignal | None = None,
        perturbations=(),
        historian_ids=(),
    ):
        if len(agents) != topology.m or plant.m != topology.m:
            raise DimensionMismatch("agents, plant, and topology sizes disagree")
        self.topology = topology
        self.plant = plant
        self.agents = list(agents)
        self.network = network
        self.agent_map = list(agent_map)
        self.dt = float(dt)
        self.record_period = float(record_period)
        self.sensor_period = float(sensor_period if sensor_period is not None else dt)
        self.state = PlantState(t=0.0, x=np.asarray(x0, dtype=float).copy())
        self.u = np.array([ag.u for ag in self.agents], dtype=float)
        self.u_init = self.u.copy()
        self.applied = self.u.copy()  # actuator-held commands
        self.beta = np.array([ag.beta for ag in self.agents])
        self.q_matrix = coupling_matrix(topology, self.agents)
        self.disturbance = disturbance
        self.injection_offset = None  # None until the experiment phase starts
        self.schedule = None
        self._pending = []
        self._active = []
        self.sensor_faults = {}
        self.slowdown_overlays = {}
        self.base_slowdown = {
            nid: node.slowdown for nid, node in network.nodes.items()
        }
        self.link_grants = {}
        self.event_log = []
        self._perturbations = list(perturbations)
        self._prbs_tracks = {
            id(p): _PrbsTrack(p) for p in self._perturbations if p.kind == "prbs"
        }
        self.historian_ids = tuple(historian_ids)
        # Controllers start from a consistent snapshot of the t=0 signal.
        sig0 = self._measure()
        self.views = np.tile(sig0, (topology.m, 1))
        self._last_emitted = {self.agent_map[j][0]: sig0[j] for j in range(topology.m)}
        self._subscribers = self._build_subscribers()
        self._sensor_to_agent = {s: j for j, (s, c, a) in enumerate(self.agent_map)}
        self._controller_to_agent = {
            c: j for j, (s, c, a) in enumerate(self.agent_map)
        }
        self._actuator_to_agent = {
            a: j for j, (s, c, a) in enumerate(self.agent_map)
        }
        self.records = []
        # Tick counters avoid accumulated float drift on long runs.
        self._steps = 0
        self._record_ticks = 0
        self._sensor_ticks = 0

    # -- plumbing ---------------------------------------------------------

    def _build_subscribers(self):
        subs = []
        a = self.topology.weights
        for j in range(self.topology.m):
            listeners = [
                self.agent_map[i][1] for i in range(self.topology.m)
                if i == j or a[i, j] > 0
            ]
            subs.append(listeners)
        return subs

    def _delta_now(self):
        if self.disturbance is None:
            return np.zeros(self.plant.n_delta)
        if self.injection_offset is None:
            return np.asarray(self.disturbance.values[0], dtype=float)
        return self.disturbance.value_at(self.state.t - self.injection_offset)

    def _measure(self):
        if self.plant.agent_signal is None:
            raise DimensionMismatch("plant has no agent measurement map")
        return np.asarray(
            self.plant.agent_signal(self.state.x, self.applied, self._delta_now()),
            dtype=float,
        )

    def _effective_input(self):
        u_eff = self.applied.copy()
        if self._perturbations and self.injection_offset is not None:
            t_inj = self.state.t - self.injection_offset
            for p in self._perturbations:
                if p.kind == "three_level":
                    u_eff[p.input_index] += (
                        chaos_mod.eval_perturbation(p.sequence, t_inj) - p.sequence.u0
                    )
                else:
                    u_eff[p.input_index] += self._prbs_tracks[id(p)].level_at(t_inj)
        return u_eff

    def reset_agent_integrator(self, controller_node: int):
        for j, (s, c, a) in enumerate(self.agent_map):
            if c == controller_node:
                self.u[j] = self.u_init[j]
                return
        raise chaos_mod.UnknownTarget(
            f"controller node {controller_node} is not mapped to an agent"
        )

    def attach_schedule(self, schedule: chaos_mod.EventSchedule):
        """Arm the event schedule; start times count from the current time."""
        self.injection_offset = self.state.t
        self.schedule = schedule
        self._pending = [
            (self.injection_offset + e.start_time, k, e.event)
            for k, e in schedule.sorted_entries()
        ]

    def _service_events(self):
        t = self.state.t
        while self._pending and self._pending[0][0] <= t:
            start, k, event = self._pending.pop(0)
            chaos_mod.apply_event(self, event)
            self.event_log.append(
                {"t": t, "action": "applied", "event": _event_record(event)}
            )
            self._active.append((start + event.duration, k, event))
            self._active.sort(key=lambda e: (e[0], e[1]))
        while self._active and self._active[0][0] <= t:
            _, _, event = self._active.pop(0)
            chaos_mod.revert_event(self, event)
            self.event_log.append(
                {"t": t, "action": "reverted", "event": _event_record(event)}
            )

    def _emit(self):
        t = self.state.t
        signal = self._measure()
        for j, (sensor, controller, actuator) in enumerate(self.agent_map):
            fault = self.sensor_faults.get(sensor)
            value = signal[j]
            if fault is not None:
                if fault.mode == chaos_mod.SensorFault.SILENCE:
                    continue
                if fault.mode == chaos_mod.SensorFault.STUCK_AT_LAST:
                    value = self._last_emitted[sensor]
                elif fault.mode == chaos_mod.SensorFault.BIAS:
                    value = value + fault.bias
            if fault is None or fault.mode != chaos_mod.SensorFault.STUCK_AT_LAST:
                self._last_emitted[sensor] = value
            if not self.network.nodes[sensor].alive:
                continue
            payload = StateSample(node=sensor, value=value, sample_time=t)
            for listener in self._subscribers[j]:
                self.network.send(sensor, listener, payload, t)
            for hist in self.historian_ids:
                self.network.send(sensor, hist, payload, t)
        for j, (sensor, controller, actuator) in enumerate(self.agent_map):
            if not self.network.nodes[controller].alive:
                continue
            self.network.send(
                controller, actuator, Command(target=actuator, value=self.u[j]), t
            )

    def _absorb_deliveries(self):
        for msg in self.network.deliver_due(self.state.t):
            if isinstance(msg.payload, StateSample):
                viewer = self._controller_to_agent.get(msg.dst)
                src_agent = self._sensor_to_agent.get(msg.payload.node)
                if viewer is None or src_agent is None:
                    continue
                known = self.network.last_known(msg.dst, msg.payload.node)
                if known is not None:
                    self.views[viewer, src_agent] = known[0]
            else:
                j = self._actuator_to_agent.get(msg.dst)
                if j is not None:
                    self.applied[j] = msg.payload.value

    def _integrator_rates(self):
        # Each agent owns its row of views; diagonal is its local reading.
        a = self.topology.weights
        coupled = np.sum(a * self.views, axis=1)
        local = np.diag(self.q_matrix) * np.diagonal(self.views)
        return coupled - local + self.beta

    def step(self):
        """Advance one dt; returns the post-step time."""
        self._service_events()
        if self.state.t >= self._sensor_ticks * self.sensor_period - 1e-9:
            self._emit()
            self._sensor_ticks += 1
        self._absorb_deliveries()
        u_rate = self._integrator_rates()
        u_eff = self._effective_input()
        self.state = plant_step(
            self.plant, self.state, u_eff, self._delta_now(), self.dt
        )
        self._steps += 1
        self.state.t = self._steps * self.dt
        alive = np.array(
            [self.network.nodes[c].alive for (_, c, _) in self.agent_map]
        )
        self.u = self.u + self.dt * np.where(alive, u_rate, 0.0)
        return self.state.t

    def record_if_due(self):
        if self.state.t >= self._record_ticks * self.record_period - 1e-9:
            self._record()
            self._record_ticks += 1
            return True
        return False

    def _record(self):
        u_eff = self._effective_input()
        delta = self._delta_now()
        rec = {"t": self.state.t, "x": self.state.x.copy(), "u_eff": u_eff}
        kpis = {}
        aux = {}
        for name, fn in self.plant.boundary_maps.items():
            value = float(fn(self.state.x, u_eff, delta))
            (aux if name.startswith("_") else kpis)[name] = value
        rec["kpis"] = kpis
        rec["aux"] = aux
        rec["integrators"] = self.u.copy()
        self.records.append(rec)

    def force_record(self):
        self._record()

    def trajectory(self) -> Trajectory:
        if not self.records:
            return Trajectory(t=np.zeros(0), columns={}, aux={})
        t = np.array([r["t"] for r in self.records])
        cols = {}
        for k, name in enumerate(self.plant.state_names):
            cols[name] = np.array([r["x"][k] for r in self.records])
        for k, name in enumerate(self.plant.input_names):
            cols[name] = np.array([r["u_eff"][k] for r in self.records])
        kpi_names = [n for n in self.records[0]["kpis"]]
        for name in kpi_names:
            cols[name] = np.array([r["kpis"][name] for r in self.records])
        aux = {
            name: np.array([r["aux"][name] for r in self.records])
            for name in self.records[0]["aux"]
        }
        for k in range(self.topology.m):
            aux[f"integrator_u{k + 1}"] = np.array(
                [r["integrators"][k] for r in self.records]
            )
        return Trajectory(t=t, columns=cols, aux=aux)


def _event_record(event) -> dict:
    rec = {"type": type(event).__name__}
    for key, val in vars(event).items():
        if isinstance(val, chaos_mod.LinkSelector):
            rec[key] = {
                "pairs": list(map(list, val.pairs)) if val.pairs else None,
                "src_role": val.src_role.value if val.src_role else None,
                "dst_role": val.dst_role.value if val.dst_role else None,
            }
        elif isinstance(val, chaos_mod.SensorFault):
            rec[key] = {"mode": val.mode, "bias": val.bias}
        else:
            rec[key] = val
    return rec


def default_agent_map(net) -> list:
    """Pair sensors, controllers, and actuators by sorted id order."""
    from .netsim import Role

    by_role = {Role.SENSOR: [], Role.CONTROLLER: [], Role.ACTUATOR: []}
    for nid in sorted(net.nodes):
        node = net.nodes[nid]
        if node.role in by_role:
            by_role[node.role].append(nid)
    counts = {r.value: len(v) for r, v in by_role.items()}
    if len(set(counts.values())) != 1:
        raise DimensionMismatch(f"unbalanced roles, cannot pair agents: {counts}")
    return list(
        zip(by_role[Role.SENSOR], by_role[Role.CONTROLLER], by_role[Role.ACTUATOR])
    )


def simulate_closed_loop(
    t: Topology,
    plant: PlantModel,
    agents,
    net,
    duration: float,
    dt: float,
    schedule: chaos_mod.EventSchedule | None = None,
    *,
    x0,
    agent_map=None,
    record_period: float = 1.0,
    sensor_period: float | None = None,
    disturbance: DisturbanceSignal | None = None,
) -> Trajectory:
    """Run the co-simulation for duration minutes and return the trajectory.

    If a schedule is given it is armed at t = 0.  agent_map defaults to
    pairing sensors, controllers, and actuators in sorted id order.
    """
    if agent_map is None:
        agent_map = default_agent_map(net)
    sim = ClosedLoopSim(
        t,
        plant,
        agents,
        net,
        agent_map,
        dt=dt,
        x0=x0,
        record_period=record_period,
        sensor_period=sensor_period,
        disturbance=disturbance,
    )
    if schedule is not None:
        sim.attach_schedule(schedule)
    elif disturbance is not None:
        sim.injection_offset = 0.0
    sim.record_if_due()
    n_steps = int(round(duration / dt))
    for _ in range(n_steps):
        sim.step()
        sim.record_if_due()
    return sim.trajectory()
