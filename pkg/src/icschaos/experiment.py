"""Experiment lifecycle: steady state, hypothesis verdicts, impact metrics.

A run has four phases.  The plant settles under its own control until the
chosen metric sits still long enough to call it steady; that window's mean
becomes the baseline.  The event schedule and any disturbance breakpoints
are then armed, with their clocks starting at the baseline fix.  The system
runs to the configured duration while a guard watches shutdown limits every
step.  Afterwards the hypothesis band is evaluated over its horizon and two
impact summaries are computed over the post-injection window: blast radius
(how far process variables left their normal bands) and the resilience
landmarks of the metric's dip-and-recovery curve.

Everything is deterministic given the spec and its seed; records carry no
wall-clock state.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

# trapezoid superseded trapz in numpy 2
_trapz = getattr(np, "trapezoid", None) or np.trapz

from .chaos import AbortGuard, EventSchedule, guard_check
from .control import (
    AgentState,
    ClosedLoopSim,
    InputPerturbation,
    Trajectory,
)
from .netsim import two_lan_network
from .plant import (
    EmptyWindow,
    NonFiniteState,
    PlantModel,
    ProcessLimits,
    UnknownVariable,
    DisturbanceSignal,
)
from .topology import Topology


@dataclass(frozen=True)
class SteadyStateSpec:
    """Detection rule: the metric must stay within epsilon of its window
    mean for at least hold_min minutes."""

    metric: str
    window_min: float
    epsilon: float
    hold_min: float

    def __post_init__(self):
        if not self.window_min > 0:
            raise ValueError("window_min must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.hold_min < self.window_min:
            raise ValueError("hold_min must be at least window_min")


@dataclass(frozen=True)
class Hypothesis:
    metric: str
    band: tuple
    horizon_min: float

    def __post_init__(self):
        lo, hi = self.band
        if not lo < hi:
            raise ValueError("hypothesis band must have lo < hi")
        if not self.horizon_min > 0:
            raise ValueError("horizon_min must be positive")


@dataclass(frozen=True)
class NetworkSetup:
    """Recipe for the two-LAN layout; the live network is built per run."""

    base_latency_min: float = 0.0
    jitter_min: float = 0.0
    drop_prob: float = 0.0
    historian: bool = False
    hmi: bool = False

    def default_link(self) -> dict:
        return {
            "base_latency": self.base_latency_min,
            "jitter": self.jitter_min,
            "drop_prob": self.drop_prob,
        }


@dataclass(frozen=True)
class ExperimentSpec:
    label: str
    topology: Topology
    plant: PlantModel
    agents: tuple
    x0: tuple
    steady: SteadyStateSpec
    hypothesis: Hypothesis
    schedule: EventSchedule
    guard: AbortGuard
    limits: ProcessLimits
    duration_min: float
    dt_min: float
    seed: int
    settle_limit_min: float
    network: NetworkSetup = NetworkSetup()
    disturbance: DisturbanceSignal | None = None
    perturbations: tuple = ()
    record_period_min: float = 1.0
    sensor_period_min: float = 1.0

    def __post_init__(self):
        if self.duration_min < self.hypothesis.horizon_min:
            raise ValueError("duration_min must cover the hypothesis horizon")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")


# -- verdicts -----------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisHeld:
    kind: str = field(default="held", init=False)


@dataclass(frozen=True)
class Disproved:
    first_violation_time: float
    max_excursion: float
    kind: str = field(default="disproved", init=False)


@dataclass(frozen=True)
class Aborted:
    reason: str
    time: float
    kind: str = field(default="aborted", init=False)


@dataclass(frozen=True)
class NoSteadyState:
    settle_limit_min: float
    kind: str = field(default="no_steady_state", init=False)


@dataclass(frozen=True)
class Baseline:
    t_start: float
    t_end: float
    level: float


@dataclass(frozen=True)
class BlastRadius:
    fraction_violating: float
    violation_integral: float
    shutdown_events: int


@dataclass(frozen=True)
class ResilienceMetrics:
    """Landmarks of the dip-and-recovery curve around a disturbance."""

    baseline_level: float
    minimum_level: float
    t_dip: float
    t_recover: float | None
    final_level: float
    restoration_ratio: float


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    seed: int
    verdict: object
    baseline: Baseline | None
    injection_start: float | None
    blast: BlastRadius | None
    resilience: ResilienceMetrics | None
    trajectory: Trajectory
    event_log: tuple
    message_log: tuple


@dataclass(frozen=True)
class BatchError:
    label: str
    message: str


# -- steady-state detection ---------------------------------------------------


def _hold_samples(hold_min: float, period: float) -> int:
    return max(1, int(math.ceil(hold_min / period - 1e-9)))


def detect_steady_state(trajectory: Trajectory, spec: SteadyStateSpec):
    """Earliest window of length hold_min where the metric stays within
    epsilon of the window mean; returns its Baseline or None."""
    t = trajectory.t
    if t.shape[0] < 2:
        return None
    series = trajectory.metric(spec.metric)
    period = float(t[1] - t[0])
    k = _hold_samples(spec.hold_min, period)
    for i in range(t.shape[0] - k):
        win = series[i : i + k + 1]
        mu = float(win.mean())
        if float(np.max(np.abs(win - mu))) <= spec.epsilon:
            return Baseline(t_start=float(t[i]), t_end=float(t[i + k]), level=mu)
    return None


# -- impact metrics -----------------------------------------------------------


def _normal_band_width(lim) -> float:
    if lim.normal_low is not None and lim.normal_high is not None:
        return lim.normal_high - lim.normal_low
    if lim.normal_high is not None and lim.shutdown_high is not None:
        return lim.shutdown_high - lim.normal_high
    if lim.normal_low is not None and lim.shutdown_low is not None:
        return lim.normal_low - lim.shutdown_low
    return 1.0


def blast_radius(trajectory: Trajectory, limits: ProcessLimits, window) -> BlastRadius:
    """Impact accounting over a time window.

    For each limited variable, the excess beyond its normal band is
    normalized by the band width and integrated; the integral is averaged
    over window length and variable count.  shutdown_events counts distinct
    excursions past shutdown bounds, summed over variables.
    """
    names = sorted(limits.variables)
    if not names:
        return BlastRadius(0.0, 0.0, 0)
    t0, t1 = window
    w = trajectory.window(t0, t1)
    if w.t.shape[0] < 2:
        raise EmptyWindow("blast window needs at least two samples")
    duration = float(w.t[-1] - w.t[0])
    violating = 0
    integral = 0.0
    shutdowns = 0
    for name in names:
        try:
            series = w.metric(name)
        except KeyError:
            raise UnknownVariable(f"no trajectory column for limited variable {name!r}")
        lim = limits[name]
        width = _normal_band_width(lim)
        excess = np.zeros_like(series)
        if lim.normal_high is not None:
            np.maximum(excess, (series - lim.normal_high) / width, out=excess)
        if lim.normal_low is not None:
            np.maximum(excess, (lim.normal_low - series) / width, out=excess)
        if bool(np.any(excess > 0)):
            violating += 1
        integral += float(_trapz(excess, w.t))
        beyond = np.zeros(series.shape, dtype=bool)
        if lim.shutdown_high is not None:
            beyond |= series > lim.shutdown_high
        if lim.shutdown_low is not None:
            beyond |= series < lim.shutdown_low
        if beyond.any():
            shutdowns += int(beyond[0]) + int(np.sum(beyond[1:] & ~beyond[:-1]))
    return BlastRadius(
        fraction_violating=violating / len(names),
        violation_integral=integral / (duration * len(names)),
        shutdown_events=shutdowns,
    )


def resilience_metrics(
    trajectory: Trajectory,
    metric: str,
    baseline_level: float,
    band,
    hold_min: float,
) -> ResilienceMetrics:
    """Dip-and-recovery landmarks of a metric series.

    t_recover is the start of the first in-band run sustained for at least
    hold_min; absent (None) when no such run completes within the series.
    The final level is the mean over the last hold_min of the series.
    """
    t = trajectory.t
    if t.shape[0] < 1:
        raise EmptyWindow("resilience needs a non-empty series")
    v = trajectory.metric(metric)
    i_min = int(np.argmin(v))
    lo, hi = band
    in_band = (v >= lo) & (v <= hi)
    n = t.shape[0]
    t_recover = None
    if in_band.all():
        # Never disturbed out of the band: recovered from the start.
        t_recover = float(t[0])
    else:
        # First re-entry after the first departure, sustained >= hold.
        i = int(np.argmin(in_band))  # first out-of-band sample
        while i < n:
            if in_band[i]:
                j = i
                while j + 1 < n and in_band[j + 1]:
                    j += 1
                if t[j] - t[i] >= hold_min - 1e-9:
                    t_recover = float(t[i])
                    break
                i = j + 1
            else:
                i += 1
    tail = t >= t[-1] - hold_min + 1e-9
    final_level = float(v[tail].mean()) if tail.any() else float(v[-1])
    ratio = final_level / baseline_level if baseline_level != 0 else float("nan")
    return ResilienceMetrics(
        baseline_level=float(baseline_level),
        minimum_level=float(v[i_min]),
        t_dip=float(t[i_min]),
        t_recover=t_recover,
        final_level=final_level,
        restoration_ratio=float(ratio),
    )


# -- run orchestration --------------------------------------------------------


def _record_metric(plant: PlantModel, rec: dict, name: str) -> float:
    if name in rec["kpis"]:
        return rec["kpis"][name]
    if name in plant.state_names:
        return float(rec["x"][plant.state_names.index(name)])
    if name in plant.input_names:
        return float(rec["u_eff"][plant.input_names.index(name)])
    if name in rec["aux"]:
        return rec["aux"][name]
    raise UnknownVariable(f"metric {name!r} is not a KPI, state, or input")


def _build_sim(spec: ExperimentSpec) -> ClosedLoopSim:
    net, agent_map = two_lan_network(
        spec.topology.m,
        master_seed=spec.seed,
        default_link=spec.network.default_link(),
        historian_id=801 if spec.network.historian else None,
        hmi_id=701 if spec.network.hmi else None,
    )
    return ClosedLoopSim(
        spec.topology,
        spec.plant,
        spec.agents,
        net,
        agent_map,
        dt=spec.dt_min,
        x0=np.asarray(spec.x0, dtype=float),
        record_period=spec.record_period_min,
        sensor_period=spec.sensor_period_min,
        disturbance=spec.disturbance,
        perturbations=spec.perturbations,
        historian_ids=(801,) if spec.network.historian else (),
    )


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Full lifecycle for one spec; deterministic in (spec, seed)."""
    sim = _build_sim(spec)
    plant = spec.plant
    period = spec.record_period_min
    k = _hold_samples(spec.steady.hold_min, period)

    sim.record_if_due()
    steady_series = [_record_metric(plant, sim.records[-1], spec.steady.metric)]
    baseline = None
    aborted = None

    # Phase 1: settle until the metric holds still (or give up).
    while sim.state.t < spec.settle_limit_min - 1e-9:
        try:
            sim.step()
        except NonFiniteState:
            aborted = Aborted(reason="integrator divergence", time=float(sim.state.t))
            break
        if sim.record_if_due():
            steady_series.append(
                _record_metric(plant, sim.records[-1], spec.steady.metric)
            )
            if len(steady_series) >= k + 1:
                win = np.array(steady_series[-(k + 1):])
                mu = float(win.mean())
                if float(np.max(np.abs(win - mu))) <= spec.steady.epsilon:
                    t_end = sim.records[-1]["t"]
                    baseline = Baseline(
                        t_start=float(t_end - k * period),
                        t_end=float(t_end),
                        level=mu,
                    )
                    break

    if aborted is not None:
        return _finish(spec, sim, aborted, None, None)
    if baseline is None:
        verdict = NoSteadyState(settle_limit_min=spec.settle_limit_min)
        return _finish(spec, sim, verdict, None, None)

    # Phase 2: arm the schedule; event and disturbance clocks start here.
    t_inject = float(sim.state.t)
    sim.attach_schedule(spec.schedule)

    # Phase 3: run the experiment horizon under the guard.
    t_end = t_inject + spec.duration_min
    while sim.state.t < t_end - 1e-9:
        try:
            sim.step()
        except NonFiniteState:
            aborted = Aborted(reason="integrator divergence", time=float(sim.state.t))
            break
        recorded = sim.record_if_due()
        verdict = guard_check(
            plant.named_state(sim.state), spec.guard, float(sim.state.t)
        )
        if verdict.aborted:
            if not recorded:
                sim.force_record()
            aborted = Aborted(
                reason=(
                    f"{verdict.variable}={verdict.value:.6g} beyond shutdown "
                    f"limit {verdict.limit:.6g}"
                ),
                time=float(verdict.time),
            )
            break

    # Phase 4: verdict and impact metrics over the post-injection window.
    traj = sim.trajectory()
    if aborted is not None:
        final = aborted
    else:
        final = _evaluate_hypothesis(traj, spec.hypothesis, t_inject)
    return _finish(spec, sim, final, baseline, t_inject, traj)


def _evaluate_hypothesis(traj: Trajectory, hyp: Hypothesis, t_inject: float):
    w = traj.window(t_inject, t_inject + hyp.horizon_min)
    v = w.metric(hyp.metric)
    lo, hi = hyp.band
    outside = (v < lo) | (v > hi)
    if not bool(outside.any()):
        return HypothesisHeld()
    first = int(np.argmax(outside))
    excursion = float(np.max(np.maximum(lo - v, v - hi)))
    return Disproved(
        first_violation_time=float(w.t[first]), max_excursion=excursion
    )


def _finish(spec, sim, verdict, baseline, t_inject, traj=None) -> ExperimentResult:
    if traj is None:
        traj = sim.trajectory()
    blast = None
    resilience = None
    if t_inject is not None and traj.t.shape[0] >= 2:
        t_last = float(traj.t[-1])
        if t_last > t_inject:
            blast = blast_radius(traj, spec.limits, (t_inject, t_last))
            band = (
                baseline.level - spec.steady.epsilon,
                baseline.level + spec.steady.epsilon,
            )
            resilience = resilience_metrics(
                traj.window(t_inject, t_last),
                spec.steady.metric,
                baseline.level,
                band,
                spec.steady.hold_min,
            )
    return ExperimentResult(
        label=spec.label,
        seed=spec.seed,
        verdict=verdict,
        baseline=baseline,
        injection_start=t_inject,
        blast=blast,
        resilience=resilience,
        trajectory=traj,
        event_log=tuple(sim.event_log),
        message_log=tuple(sim.network.message_log),
    )


def batch_run(specs, parallelism: int = 1):
    """Run specs (possibly concurrently); results keep spec order and a
    failure in one spec does not cancel the others."""
    specs = list(specs)

    def one(spec):
        try:
            return run_experiment(spec)
        except Exception as exc:  # noqa: BLE001 - isolation contract
            return BatchError(
                label=getattr(spec, "label", "?"),
                message=f"{type(exc).__name__}: {exc}",
            )

    if parallelism <= 1:
        return [one(s) for s in specs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, specs))


# -- result records -----------------------------------------------------------


def result_record(result, config_hash: str | None = None, extra: dict | None = None):
    """Stable JSON-able summary of a result (no trajectory payload)."""
    if isinstance(result, BatchError):
        rec = {
            "label": result.label,
            "error": result.message,
            "verdict": {"kind": "error"},
        }
        if config_hash is not None:
            rec["config_hash"] = config_hash
        return rec
    rec = {
        "label": result.label,
        "seed": result.seed,
        "verdict": asdict(result.verdict),
        "baseline": asdict(result.baseline) if result.baseline else None,
        "injection_start": result.injection_start,
        "blast": asdict(result.blast) if result.blast else None,
        "resilience": asdict(result.resilience) if result.resilience else None,
        "samples": int(result.trajectory.t.shape[0]),
        "events_applied": sum(
            1 for e in result.event_log if e["action"] == "applied"
        ),
        "messages_total": len(result.message_log),
        "messages_dropped": sum(1 for m in result.message_log if m["dropped"]),
    }
    if config_hash is not None:
        rec["config_hash"] = config_hash
    if extra:
        rec.update(extra)
    return rec


def result_to_json(result, config_hash: str | None = None, extra: dict | None = None):
    return json.dumps(result_record(result, config_hash, extra), sort_keys=True)


EXIT_CODES = {
    "held": 0,
    "disproved": 2,
    "aborted": 3,
    "no_steady_state": 4,
    "error": 1,
}


def exit_code_for(verdict) -> int:
    return EXIT_CODES[verdict.kind]
