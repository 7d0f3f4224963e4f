"""Deterministic chaos experiments on network-controlled process plants.

The package wires five layers together: a directed communication topology
(topology), a nonlinear plant with operating limits (plant, tec), an
integral consensus control layer exchanging measurements over a simulated
two-LAN network (control, netsim), scheduled fault injection with safety
guards (chaos), and the steady-state / hypothesis / blast-radius experiment
lifecycle (experiment) driven from config files (config, cli).
"""

from .chaos import (
    AbortGuard,
    EventSchedule,
    FailSensor,
    InjectLatency,
    InjectNetworkError,
    LinkSelector,
    OverloadNode,
    PerturbationSequence,
    PrbsGenerator,
    RestartPlc,
    ScheduledEvent,
    SensorFault,
    SubnetUnavailable,
    TerminateNode,
    eval_perturbation,
    guard_check,
    prbs_next,
)
from .config import (
    ConfigError,
    build_spec,
    config_hash,
    demo_configs,
    load_config,
    validate_config,
)
from .control import (
    AgentState,
    ClosedLoopSim,
    DisutilityFunction,
    Infeasible,
    InputPerturbation,
    OptimalityCertificate,
    SetpointSolution,
    Trajectory,
    conjugate_gradient_map,
    dapi_closed_loop_matrix,
    dapi_derivative,
    simulate_closed_loop,
    solve_setpoints,
    verify_optimality,
)
from .experiment import (
    Aborted,
    Baseline,
    BlastRadius,
    Disproved,
    ExperimentResult,
    ExperimentSpec,
    Hypothesis,
    HypothesisHeld,
    NetworkSetup,
    NoSteadyState,
    ResilienceMetrics,
    SteadyStateSpec,
    batch_run,
    blast_radius,
    detect_steady_state,
    exit_code_for,
    resilience_metrics,
    run_experiment,
)
from .netsim import Lan, Network, Role, two_lan_network
from .plant import (
    DisturbanceSignal,
    EquilibriumParams,
    LimitClass,
    NonFiniteState,
    PlantModel,
    PlantState,
    ProcessLimits,
    VariableLimits,
    check_limits,
    equilibrium_map,
    kpi,
    step,
)
from .topology import (
    Topology,
    globally_reachable_nodes,
    laplacian,
    reachability_consistency,
    spectral_summary,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
