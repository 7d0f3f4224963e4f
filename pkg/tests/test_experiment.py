"""Experiment lifecycle: steady detection, impact metrics, verdicts, batching."""

import json
import math

import numpy as np
import pytest

from icschaos.chaos import (
    AbortGuard,
    EventSchedule,
    FailSensor,
    ScheduledEvent,
    SensorFault,
)
from icschaos.control import AgentState, Trajectory
from icschaos.experiment import (
    EXIT_CODES,
    Aborted,
    BatchError,
    Disproved,
    ExperimentSpec,
    Hypothesis,
    HypothesisHeld,
    NetworkSetup,
    NoSteadyState,
    SteadyStateSpec,
    batch_run,
    blast_radius,
    detect_steady_state,
    exit_code_for,
    resilience_metrics,
    result_record,
    result_to_json,
    run_experiment,
)
from icschaos.plant import (
    EmptyWindow,
    PlantModel,
    ProcessLimits,
    UnknownVariable,
    VariableLimits,
    linear_test_plant,
)
from icschaos.topology import Topology

K2 = Topology.from_edges(2, [(1, 2), (2, 1)])


def flat_trajectory(values_by_name, t=None):
    names = list(values_by_name)
    n = len(values_by_name[names[0]])
    t = np.arange(n, dtype=float) if t is None else np.asarray(t, dtype=float)
    return Trajectory(
        t=t, columns={k: np.asarray(v, dtype=float) for k, v in values_by_name.items()}
    )


# -- steady-state detection -------------------------------------------------------


def test_steady_constant_found_at_start():
    traj = flat_trajectory({"y": np.full(61, 100.0)})
    spec = SteadyStateSpec(metric="y", window_min=10.0, epsilon=1.0, hold_min=10.0)
    base = detect_steady_state(traj, spec)
    assert base is not None
    assert (base.t_start, base.t_end, base.level) == (0.0, 10.0, 100.0)


def test_steady_ramp_never_settles():
    traj = flat_trajectory({"y": np.arange(61, dtype=float)})
    spec = SteadyStateSpec(metric="y", window_min=10.0, epsilon=0.1, hold_min=10.0)
    assert detect_steady_state(traj, spec) is None


def test_steady_skips_the_transient():
    # ramp to 20 then flat; eps 0.5 rejects any window touching the ramp
    v = np.minimum(np.arange(61, dtype=float), 20.0)
    spec = SteadyStateSpec(metric="y", window_min=10.0, epsilon=0.5, hold_min=10.0)
    base = detect_steady_state(flat_trajectory({"y": v}), spec)
    assert (base.t_start, base.t_end, base.level) == (20.0, 30.0, 20.0)


def test_steady_tolerates_bounded_noise():
    rng = np.random.default_rng(0)
    v = 50.0 + rng.uniform(-0.4, 0.4, size=40)
    spec = SteadyStateSpec(metric="y", window_min=10.0, epsilon=1.0, hold_min=10.0)
    base = detect_steady_state(flat_trajectory({"y": v}), spec)
    assert base.t_start == 0.0
    assert abs(base.level - 50.0) <= 0.4


def test_steady_needs_enough_samples():
    traj = flat_trajectory({"y": np.full(5, 1.0)})
    spec = SteadyStateSpec(metric="y", window_min=10.0, epsilon=1.0, hold_min=10.0)
    assert detect_steady_state(traj, spec) is None


# -- blast radius -------------------------------------------------------------------


def five_variable_limits():
    band = VariableLimits(
        normal_low=0.0, normal_high=10.0, shutdown_low=-5.0, shutdown_high=15.0
    )
    return ProcessLimits(variables={f"v{k}": band for k in range(5)})


def five_variable_run(v0):
    cols = {f"v{k}": np.full(101, 5.0) for k in range(5)}
    cols["v0"] = np.asarray(v0, dtype=float)
    return flat_trajectory(cols)


def test_blast_radius_hand_oracle():
    # one of five variables exceeds its band by 10% of the width for 10 of
    # 100 minutes: fraction 1/5, integral 1.0 normalized by 100 min x 5 vars
    v0 = np.full(101, 5.0)
    v0[45:55] = 11.0
    blast = blast_radius(five_variable_run(v0), five_variable_limits(), (0.0, 100.0))
    assert blast.fraction_violating == 0.2
    assert blast.violation_integral == pytest.approx(0.002, rel=1e-12)
    assert blast.shutdown_events == 0


def test_blast_radius_counts_shutdown_episodes():
    v0 = np.full(101, 5.0)
    v0[20:23] = 16.0  # one episode past shutdown_high
    v0[60:61] = -6.0  # and one past shutdown_low
    blast = blast_radius(five_variable_run(v0), five_variable_limits(), (0.0, 100.0))
    assert blast.shutdown_events == 2
    assert blast.fraction_violating == 0.2


def test_blast_radius_episode_open_at_window_start():
    v0 = np.full(101, 16.0)  # beyond shutdown the whole window
    blast = blast_radius(five_variable_run(v0), five_variable_limits(), (0.0, 100.0))
    assert blast.shutdown_events == 1


def test_blast_radius_quiet_run_is_zero():
    v0 = np.full(101, 5.0)
    blast = blast_radius(five_variable_run(v0), five_variable_limits(), (0.0, 100.0))
    assert blast == pytest.approx((0.0, 0.0, 0))
    assert blast.shutdown_events == 0


def test_blast_radius_missing_column_and_empty_window():
    traj = flat_trajectory({"other": np.zeros(10)})
    with pytest.raises(UnknownVariable):
        blast_radius(traj, five_variable_limits(), (0.0, 9.0))
    with pytest.raises(EmptyWindow):
        blast_radius(five_variable_run(np.full(101, 5.0)),
                     five_variable_limits(), (500.0, 600.0))


# -- resilience ----------------------------------------------------------------------


def test_resilience_constant_recovers_at_start():
    traj = flat_trajectory({"y": np.full(30, 2.0)})
    met = resilience_metrics(traj, "y", 2.0, (1.9, 2.1), hold_min=5.0)
    assert met.t_recover == 0.0
    assert met.t_dip == 0.0
    assert met.minimum_level == 2.0
    assert met.restoration_ratio == 1.0


def test_resilience_exponential_recovery_time():
    # analytic re-entry at t_d + tau * ln(delta / eps), sampled once a minute
    tau, delta, eps, t_d = 15.0, 0.5, 0.02, 20.0
    t = np.arange(201, dtype=float)
    v = np.where(t < t_d, 1.0, 1.0 - delta * np.exp(-(t - t_d) / tau))
    met = resilience_metrics(
        flat_trajectory({"y": v}, t=t), "y", 1.0, (1.0 - eps, 1.0 + eps), 10.0
    )
    t_expected = t_d + tau * math.log(delta / eps)
    assert met.t_recover is not None
    assert abs(met.t_recover - t_expected) <= 1.0  # one sample period
    assert met.t_dip == t_d
    assert met.minimum_level == pytest.approx(0.5)
    assert met.restoration_ratio > 0.999


def test_resilience_requires_a_sustained_reentry():
    t = np.arange(51, dtype=float)
    v = np.full(51, 10.0)
    v[5:15] = 8.0
    v[18:25] = 8.0  # the 3-sample in-band run at t=15..17 is too short
    met = resilience_metrics(
        flat_trajectory({"y": v}, t=t), "y", 10.0, (9.5, 10.5), hold_min=5.0
    )
    assert met.t_recover == 25.0


def test_resilience_prestart_band_run_does_not_count():
    # in-band until the dip at t=10; recovery must anchor after the dip
    t = np.arange(41, dtype=float)
    v = np.full(41, 10.0)
    v[10:20] = 8.0
    met = resilience_metrics(
        flat_trajectory({"y": v}, t=t), "y", 10.0, (9.5, 10.5), hold_min=5.0
    )
    assert met.t_recover == 20.0
    assert met.t_dip == 10.0


def test_resilience_never_recovers():
    t = np.arange(31, dtype=float)
    v = np.where(t < 10, 1.0, 0.5)
    met = resilience_metrics(
        flat_trajectory({"y": v}, t=t), "y", 1.0, (0.98, 1.02), hold_min=5.0
    )
    assert met.t_recover is None
    assert met.restoration_ratio == 0.5
    assert met.final_level == 0.5


def test_resilience_rejects_empty_series():
    with pytest.raises(EmptyWindow):
        resilience_metrics(
            Trajectory(t=np.zeros(0), columns={"y": np.zeros(0)}),
            "y", 1.0, (0.9, 1.1), 5.0,
        )


# -- full lifecycle on the linear plant ------------------------------------------


def linear_spec(label="unit", schedule=(), x0=(1.0, 1.0), u0=(1.0, 1.0),
                band=(0.5, 1.5), settle=30.0, duration=60.0, horizon=40.0,
                epsilon=0.01, limits=None, guard_limits=None, metric="x1"):
    limits = limits if limits is not None else ProcessLimits(variables={})
    guard = AbortGuard(
        limits=guard_limits if guard_limits is not None else ProcessLimits(
            variables={}
        )
    )
    return ExperimentSpec(
        label=label,
        topology=K2,
        plant=linear_test_plant(2),
        agents=(AgentState(node=201, u=u0[0]), AgentState(node=202, u=u0[1])),
        x0=tuple(x0),
        steady=SteadyStateSpec(metric=metric, window_min=5.0, epsilon=epsilon,
                               hold_min=5.0),
        hypothesis=Hypothesis(metric=metric, band=band, horizon_min=horizon),
        schedule=EventSchedule.of(*schedule),
        guard=guard,
        limits=limits,
        duration_min=duration,
        dt_min=0.05,
        seed=11,
        settle_limit_min=settle,
        network=NetworkSetup(),
        record_period_min=1.0,
        sensor_period_min=0.05,
    )


def test_run_held_from_consensus_start():
    result = run_experiment(linear_spec())
    assert isinstance(result.verdict, HypothesisHeld)
    assert result.baseline is not None
    assert result.baseline.t_start == 0.0
    assert result.baseline.t_end == 5.0
    assert result.baseline.level == pytest.approx(1.0, abs=1e-9)
    assert result.injection_start == 5.0
    assert result.resilience.t_recover == 5.0
    assert result.resilience.restoration_ratio == pytest.approx(1.0, abs=1e-9)
    assert exit_code_for(result.verdict) == 0


def test_run_no_steady_state_when_settle_window_is_too_tight():
    spec = linear_spec(x0=(5.0, -5.0), u0=(0.0, 0.0), settle=4.0,
                       epsilon=1e-9, duration=50.0, horizon=40.0)
    result = run_experiment(spec)
    assert isinstance(result.verdict, NoSteadyState)
    assert result.verdict.settle_limit_min == 4.0
    assert result.baseline is None
    assert result.blast is None
    assert exit_code_for(result.verdict) == 4


def test_run_disproved_leaves_a_witness_in_the_trajectory():
    fault = ScheduledEvent(
        2.0, FailSensor(101, SensorFault(SensorFault.BIAS, bias=5.0), duration=30.0)
    )
    result = run_experiment(linear_spec(schedule=(fault,), band=(0.9, 1.1)))
    assert isinstance(result.verdict, Disproved)
    assert result.verdict.first_violation_time >= result.injection_start
    assert result.verdict.max_excursion > 0.0
    k = int(np.searchsorted(result.trajectory.t, result.verdict.first_violation_time))
    value = result.trajectory.metric("x1")[k]
    assert value < 0.9 or value > 1.1
    assert exit_code_for(result.verdict) == 2


def test_run_aborts_on_guard_trip():
    guard_limits = ProcessLimits(
        variables={"x2": VariableLimits(normal_high=1.5, shutdown_high=2.0)}
    )
    fault = ScheduledEvent(
        0.0, FailSensor(101, SensorFault(SensorFault.BIAS, bias=5.0), duration=50.0)
    )
    result = run_experiment(
        linear_spec(schedule=(fault,), guard_limits=guard_limits, limits=guard_limits,
                    metric="x2")
    )
    assert isinstance(result.verdict, Aborted)
    assert "x2" in result.verdict.reason
    assert "beyond shutdown limit 2" in result.verdict.reason
    assert result.verdict.time > result.injection_start
    assert result.blast is not None
    assert result.blast.shutdown_events >= 1
    assert exit_code_for(result.verdict) == 3


def test_run_aborts_on_integrator_divergence():
    def g(x, u, delta):
        return x ** 3

    cubic = PlantModel(
        n=2, m=2, n_delta=0, g=g, h=lambda x, u, delta: x.copy(),
        state_names=("x1", "x2"), input_names=("u1", "u2"),
        agent_signal=lambda x, u, delta: x.copy(), boundary_maps={},
    )
    spec = ExperimentSpec(
        label="blowup",
        topology=K2,
        plant=cubic,
        agents=(AgentState(node=201, u=0.0), AgentState(node=202, u=0.0)),
        x0=(3.0, 3.0),
        steady=SteadyStateSpec(metric="x1", window_min=5.0, epsilon=0.01,
                               hold_min=5.0),
        hypothesis=Hypothesis(metric="x1", band=(0.0, 1.0), horizon_min=10.0),
        schedule=EventSchedule.of(),
        guard=AbortGuard(limits=ProcessLimits(variables={})),
        limits=ProcessLimits(variables={}),
        duration_min=20.0,
        dt_min=0.05,
        seed=1,
        settle_limit_min=10.0,
    )
    with np.errstate(over="ignore", invalid="ignore"):
        result = run_experiment(spec)
    assert isinstance(result.verdict, Aborted)
    assert result.verdict.reason == "integrator divergence"
    assert result.baseline is None


# -- batching and records -----------------------------------------------------------


def test_batch_preserves_order_and_isolates_errors():
    good = linear_spec(label="good")
    bad = linear_spec(label="bad", metric="nope")
    results = batch_run([good, bad, good], parallelism=2)
    assert [type(r).__name__ for r in results] == [
        "ExperimentResult", "BatchError", "ExperimentResult"
    ]
    assert results[1].label == "bad"
    assert "UnknownVariable" in results[1].message


def test_batch_parallelism_does_not_change_results():
    specs = [linear_spec(label=f"s{k}") for k in range(4)]
    serial = [result_to_json(r) for r in batch_run(specs, parallelism=1)]
    threaded = [result_to_json(r) for r in batch_run(specs, parallelism=4)]
    assert serial == threaded


def test_exit_codes():
    assert exit_code_for(HypothesisHeld()) == 0
    assert exit_code_for(Disproved(0.0, 0.0)) == 2
    assert exit_code_for(Aborted("x", 0.0)) == 3
    assert exit_code_for(NoSteadyState(1.0)) == 4
    assert EXIT_CODES["error"] == 1


def test_result_record_shape():
    result = run_experiment(linear_spec())
    rec = result_record(result, config_hash="cafe", extra={"note": 1})
    assert rec["label"] == "unit"
    assert rec["verdict"] == {"kind": "held"}
    assert rec["config_hash"] == "cafe"
    assert rec["note"] == 1
    assert rec["messages_total"] == len(result.message_log)
    assert json.loads(result_to_json(result)) == result_record(result)
    err = result_record(BatchError(label="x", message="boom"))
    assert err["verdict"] == {"kind": "error"}


# -- demo scenario goldens ------------------------------------------------------------


def test_nominal_scenario_holds(nominal_run):
    result, elapsed, preflight = nominal_run
    assert isinstance(result.verdict, HypothesisHeld)
    assert result.baseline.t_start == 0.0
    assert result.baseline.level == pytest.approx(0.95, abs=1e-3)
    assert result.blast == pytest.approx((0.0, 0.0, 0))
    assert result.resilience.restoration_ratio == pytest.approx(1.0, abs=1e-6)
    assert preflight["certificate_passed"]
    assert elapsed < 30.0


def test_router_outage_scenario_disproved(outage_run):
    result, elapsed, _ = outage_run
    assert isinstance(result.verdict, Disproved)
    assert result.verdict.first_violation_time == 80.0
    assert result.resilience.t_dip == 181.0
    assert result.resilience.t_recover == 205.0
    assert result.resilience.restoration_ratio == pytest.approx(1.0, abs=1e-3)
    applied = [e for e in result.event_log if e["action"] == "applied"]
    reverted = [e for e in result.event_log if e["action"] == "reverted"]
    assert [e["t"] for e in applied] == [60.0]
    assert [e["t"] for e in reverted] == [180.0]
    assert elapsed < 30.0


def test_guard_overdrive_scenario_aborts(overdrive_run):
    result, elapsed, _ = overdrive_run
    assert isinstance(result.verdict, Aborted)
    assert "reactor_temperature_c" in result.verdict.reason
    assert result.blast.shutdown_events == 1
    assert result.blast.fraction_violating == pytest.approx(0.2)
    assert result.resilience.t_recover is None
    assert elapsed < 30.0
