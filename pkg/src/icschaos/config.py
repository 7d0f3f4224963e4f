"""Config files: schema validation, spec construction, built-in demos.

One YAML file describes one experiment.  Validation is structural and
complete before anything simulates: unknown keys are rejected, every
violation is reported with its dotted path, and all physical quantities
carry their unit in the key name (minutes everywhere).

Building a spec also runs the setpoint preflight: the disutility layer is
solved for the initial inputs (unless initial_u overrides them) and the
optimality certificate residuals are recorded for the result report.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import yaml

from . import tec
from .chaos import (
    AbortGuard,
    EventSchedule,
    FailSensor,
    InjectLatency,
    InjectNetworkError,
    LinkSelector,
    OverloadNode,
    PerturbationSequence,
    RestartPlc,
    ScheduledEvent,
    SensorFault,
    SubnetUnavailable,
    TerminateNode,
)
from .control import (
    AgentState,
    DisutilityFunction,
    InputPerturbation,
    solve_setpoints,
    verify_optimality,
)
from .experiment import (
    ExperimentSpec,
    Hypothesis,
    NetworkSetup,
    SteadyStateSpec,
)
from .netsim import Role
from .plant import (
    DisturbanceSignal,
    EquilibriumParams,
    ProcessLimits,
    VariableLimits,
    linear_test_plant,
)
from .topology import Topology

CONTROLLER_BASE = 201  # node id of agent 1's controller in the standard layout


class ConfigError(Exception):
    """Carries the full list of dotted-path validation messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_ROLES = {
    "sensor": Role.SENSOR,
    "controller": Role.CONTROLLER,
    "actuator": Role.ACTUATOR,
    "historian": Role.HISTORIAN,
    "hmi": Role.HMI,
    "router": Role.ROUTER,
}

_TOP_KEYS = {
    "label",
    "topology",
    "plant",
    "agents",
    "network",
    "disutilities",
    "setpoints",
    "steady_state",
    "hypothesis",
    "events",
    "guard",
    "run",
    "disturbance",
    "perturbations",
}
_REQUIRED_TOP = (
    "topology",
    "plant",
    "disutilities",
    "steady_state",
    "hypothesis",
    "guard",
    "run",
)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


class _Section:
    """Accumulates errors with dotted key paths while reading a mapping."""

    def __init__(self, doc, path, errors):
        self.doc = doc if isinstance(doc, dict) else {}
        self.path = path
        self.errors = errors
        if not isinstance(doc, dict):
            errors.append(f"{path}: expected a mapping")

    def reject_unknown(self, allowed):
        for key in self.doc:
            if key not in allowed:
                self.errors.append(f"{self.path}.{key}: unknown key")

    def err(self, key, msg):
        self.errors.append(f"{self.path}.{key}: {msg}")

    def num(self, key, default=None, required=False, minv=None, maxv=None,
            positive=False, nullable=False):
        if key not in self.doc:
            if required:
                self.err(key, "required key missing")
            return default
        v = self.doc[key]
        if v is None and nullable:
            return None
        if not _is_num(v):
            self.err(key, f"expected a number, got {v!r}")
            return default
        if positive and not v > 0:
            self.err(key, f"must be positive, got {v}")
            return default
        if minv is not None and v < minv:
            self.err(key, f"must be at least {minv}, got {v}")
            return default
        if maxv is not None and v > maxv:
            self.err(key, f"must be at most {maxv}, got {v}")
            return default
        return float(v)

    def integer(self, key, default=None, required=False, minv=None):
        if key not in self.doc:
            if required:
                self.err(key, "required key missing")
            return default
        v = self.doc[key]
        if not _is_int(v):
            self.err(key, f"expected an integer, got {v!r}")
            return default
        if minv is not None and v < minv:
            self.err(key, f"must be at least {minv}, got {v}")
            return default
        return v

    def string(self, key, default=None, required=False, choices=None):
        if key not in self.doc:
            if required:
                self.err(key, "required key missing")
            return default
        v = self.doc[key]
        if not isinstance(v, str):
            self.err(key, f"expected a string, got {v!r}")
            return default
        if choices is not None and v not in choices:
            self.err(key, f"must be one of {sorted(choices)}, got {v!r}")
            return default
        return v

    def boolean(self, key, default=None, required=False):
        if key not in self.doc:
            if required:
                self.err(key, "required key missing")
            return default
        v = self.doc[key]
        if not isinstance(v, bool):
            self.err(key, f"expected a boolean, got {v!r}")
            return default
        return v

    def listing(self, key, default=None, required=False, nullable=False):
        if key not in self.doc:
            if required:
                self.err(key, "required key missing")
            return default
        v = self.doc[key]
        if v is None and nullable:
            return None
        if not isinstance(v, list):
            self.err(key, f"expected a list, got {v!r}")
            return default
        return v


def _check_limit_pairs(bounds: dict, path: str, errors):
    order = ("shutdown_low", "normal_low", "normal_high", "shutdown_high")
    present = [(k, bounds[k]) for k in order if bounds.get(k) is not None]
    for (ka, va), (kb, vb) in zip(present, present[1:]):
        if va > vb:
            errors.append(f"{path}: {ka} ({va}) above {kb} ({vb})")


def _validate_limits_mapping(doc, path, errors):
    if not isinstance(doc, dict):
        errors.append(f"{path}: expected a mapping of variable limits")
        return
    for name, bounds in doc.items():
        sub = _Section(bounds, f"{path}.{name}", errors)
        sub.reject_unknown(
            {"normal_low", "normal_high", "shutdown_low", "shutdown_high"}
        )
        vals = {}
        for key in ("normal_low", "normal_high", "shutdown_low", "shutdown_high"):
            vals[key] = sub.num(key, nullable=True)
        if not any(v is not None for v in vals.values()):
            errors.append(f"{path}.{name}: needs at least one bound")
        _check_limit_pairs(vals, f"{path}.{name}", errors)


_EVENT_TYPES = {
    "terminate_node",
    "overload_node",
    "inject_latency",
    "inject_network_error",
    "subnet_unavailable",
    "restart_plc",
    "fail_sensor",
}


def _validate_event(doc, path, errors):
    sec = _Section(doc, path, errors)
    etype = sec.string("type", required=True, choices=_EVENT_TYPES)
    allowed = {"type", "start_min"}
    sec.num("start_min", required=True, minv=0.0)
    if etype in (None,):
        return
    if etype == "terminate_node":
        allowed |= {"node", "duration_min"}
        sec.integer("node", required=True)
        sec.num("duration_min", required=True, positive=True)
    elif etype == "overload_node":
        allowed |= {"node", "slowdown", "duration_min"}
        sec.integer("node", required=True)
        sec.num("slowdown", required=True, minv=1.0)
        sec.num("duration_min", required=True, positive=True)
    elif etype == "inject_latency":
        allowed |= {"added_latency_min", "duration_min", "pairs", "src_role", "dst_role"}
        sec.num("added_latency_min", required=True, minv=0.0)
        sec.num("duration_min", required=True, positive=True)
        _validate_selector(sec, errors)
    elif etype == "inject_network_error":
        allowed |= {"drop_prob", "duration_min", "pairs", "src_role", "dst_role"}
        sec.num("drop_prob", required=True, minv=0.0, maxv=1.0)
        sec.num("duration_min", required=True, positive=True)
        _validate_selector(sec, errors)
    elif etype == "subnet_unavailable":
        allowed |= {"duration_min"}
        sec.num("duration_min", required=True, positive=True)
    elif etype == "restart_plc":
        allowed |= {"node", "downtime_min"}
        sec.integer("node", required=True)
        sec.num("downtime_min", required=True, positive=True)
    elif etype == "fail_sensor":
        allowed |= {"node", "mode", "bias", "duration_min"}
        sec.integer("node", required=True)
        sec.string(
            "mode", required=True, choices={"stuck_at_last", "bias", "silence"}
        )
        sec.num("bias", default=0.0)
        sec.num("duration_min", required=True, positive=True)
    sec.reject_unknown(allowed)


def _validate_selector(sec: _Section, errors):
    pairs = sec.listing("pairs", nullable=True)
    if pairs is not None:
        for i, pair in enumerate(pairs):
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(_is_int(x) for x in pair)
            ):
                sec.err(f"pairs[{i}]", "expected [src_id, dst_id]")
    sec.string("src_role", choices=set(_ROLES))
    sec.string("dst_role", choices=set(_ROLES))


def validate_config(doc) -> list:
    """Full structural validation; returns a list of dotted-path errors."""
    errors = []
    if not isinstance(doc, dict):
        return ["top level: expected a mapping"]
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append(f"{key}: unknown key")
    for key in _REQUIRED_TOP:
        if key not in doc:
            errors.append(f"{key}: required section missing")

    if "label" in doc and not isinstance(doc["label"], str):
        errors.append("label: expected a string")

    # topology
    topo = _Section(doc.get("topology", {}), "topology", errors)
    topo.reject_unknown({"m", "edges"})
    m = topo.integer("m", required=True, minv=1)
    edges = topo.listing("edges", required=True, default=[])
    if edges is not None:
        for i, e in enumerate(edges):
            if not isinstance(e, list) or len(e) not in (2, 3):
                topo.err(f"edges[{i}]", "expected [i, j] or [i, j, weight]")
                continue
            if not (_is_int(e[0]) and _is_int(e[1])):
                topo.err(f"edges[{i}]", "node ids must be integers")
                continue
            if m is not None and not (
                1 <= e[0] <= m and 1 <= e[1] <= m and e[0] != e[1]
            ):
                topo.err(f"edges[{i}]", f"ids must be distinct and within 1..{m}")
            if len(e) == 3 and (not _is_num(e[2]) or not e[2] > 0):
                topo.err(f"edges[{i}]", "weight must be a positive number")

    # plant
    plant = _Section(doc.get("plant", {}), "plant", errors)
    plant.reject_unknown({"kind", "params", "initial_state"})
    kind = plant.string(
        "kind", required=True, choices={"tec_surrogate", "linear_test"}
    )
    params = plant.doc.get("params")
    if params is not None:
        psec = _Section(params, "plant.params", errors)
        if kind == "tec_surrogate":
            valid = set(tec.TecParams.__dataclass_fields__)
            psec.reject_unknown(valid)
            for key in psec.doc:
                if key in valid:
                    psec.num(key, required=True)
        elif psec.doc:
            psec.reject_unknown(set())
    init_state = plant.listing("initial_state", nullable=True)
    if init_state is not None:
        for i, v in enumerate(init_state):
            if not _is_num(v):
                plant.err(f"initial_state[{i}]", "expected a number")
    if kind == "tec_surrogate" and m is not None and m != 3:
        errors.append("topology.m: tec_surrogate drives 3 inputs, m must be 3")

    # disutilities
    dis = doc.get("disutilities")
    if dis is not None:
        if not isinstance(dis, list):
            errors.append("disutilities: expected a list")
        else:
            if m is not None and len(dis) != m:
                errors.append(
                    f"disutilities: need one entry per agent ({m}), got {len(dis)}"
                )
            for i, entry in enumerate(dis):
                dsec = _Section(entry, f"disutilities[{i}]", errors)
                dsec.reject_unknown({"reference", "weight", "u_low", "u_high", "mu"})
                dsec.num("reference", required=True)
                dsec.num("weight", default=1.0, positive=True)
                lo = dsec.num("u_low", nullable=True)
                hi = dsec.num("u_high", nullable=True)
                dsec.num("mu", default=1e-6, minv=0.0)
                if lo is not None and hi is not None and not lo < hi:
                    dsec.err("u_low", f"must be below u_high ({lo} >= {hi})")

    # setpoints
    sp = _Section(doc.get("setpoints", {}), "setpoints", errors)
    sp.reject_unknown({"demand", "gamma"})
    sp.num("demand", nullable=True)
    sp.num("gamma", default=1.0, positive=True)

    # agents
    ag = _Section(doc.get("agents", {}), "agents", errors)
    ag.reject_unknown({"beta", "local_feedback_gain", "c", "initial_u"})
    for key in ("beta", "c", "initial_u"):
        lst = ag.listing(key, nullable=True)
        if lst is not None:
            if m is not None and len(lst) != m:
                ag.err(key, f"need {m} entries, got {len(lst)}")
            for i, v in enumerate(lst):
                if not _is_num(v):
                    ag.err(f"{key}[{i}]", "expected a number")
                elif key == "c" and v < 0:
                    ag.err(f"{key}[{i}]", "local coefficient must be non-negative")
    ag.num("local_feedback_gain", default=0.0, minv=0.0)

    # network
    net = _Section(doc.get("network", {}), "network", errors)
    net.reject_unknown(
        {"base_latency_min", "jitter_min", "drop_prob", "historian", "hmi"}
    )
    net.num("base_latency_min", default=0.0, minv=0.0)
    net.num("jitter_min", default=0.0, minv=0.0)
    net.num("drop_prob", default=0.0, minv=0.0, maxv=1.0)
    net.boolean("historian", default=False)
    net.boolean("hmi", default=False)

    # steady_state
    ss = _Section(doc.get("steady_state", {}), "steady_state", errors)
    ss.reject_unknown({"metric", "window_min", "epsilon", "hold_min"})
    ss.string("metric", required=True)
    w = ss.num("window_min", required=True, positive=True)
    ss.num("epsilon", required=True, positive=True)
    hold = ss.num("hold_min", required=True, positive=True)
    if w is not None and hold is not None and hold < w:
        ss.err("hold_min", f"must be at least window_min ({hold} < {w})")

    # hypothesis
    hy = _Section(doc.get("hypothesis", {}), "hypothesis", errors)
    hy.reject_unknown({"metric", "band", "horizon_min"})
    hy.string("metric", required=True)
    band = hy.listing("band", required=True)
    if band is not None:
        if len(band) != 2 or not all(_is_num(v) for v in band):
            hy.err("band", "expected [lo, hi]")
        elif not band[0] < band[1]:
            hy.err("band", f"needs lo < hi, got {band}")
    hy.num("horizon_min", required=True, positive=True)

    # events
    events = doc.get("events", [])
    if events is not None:
        if not isinstance(events, list):
            errors.append("events: expected a list")
        else:
            for i, ev in enumerate(events):
                _validate_event(ev, f"events[{i}]", errors)

    # guard
    gd = _Section(doc.get("guard", {}), "guard", errors)
    gd.reject_unknown({"enabled", "limits"})
    gd.boolean("enabled", default=True)
    lim = gd.doc.get("limits")
    if lim is None:
        gd.err("limits", "required key missing")
    elif isinstance(lim, str):
        if lim != "tec_default":
            gd.err("limits", f"unknown named limit set {lim!r}")
    else:
        _validate_limits_mapping(lim, "guard.limits", errors)

    # run
    run = _Section(doc.get("run", {}), "run", errors)
    run.reject_unknown(
        {
            "duration_min",
            "dt_min",
            "seed",
            "settle_limit_min",
            "record_period_min",
            "sensor_period_min",
        }
    )
    duration = run.num("duration_min", required=True, positive=True)
    run.num("dt_min", default=0.05, positive=True)
    run.integer("seed", required=True, minv=0)
    run.num("settle_limit_min", default=240.0, positive=True)
    run.num("record_period_min", default=1.0, positive=True)
    run.num("sensor_period_min", default=1.0, positive=True)
    horizon = (doc.get("hypothesis") or {}).get("horizon_min")
    if (
        duration is not None
        and _is_num(horizon)
        and duration < horizon
    ):
        run.err(
            "duration_min",
            f"must cover hypothesis.horizon_min ({duration} < {horizon})",
        )

    # disturbance
    dist = doc.get("disturbance")
    if dist is not None:
        dsec = _Section(dist, "disturbance", errors)
        dsec.reject_unknown({"breakpoints"})
        bps = dsec.listing("breakpoints", required=True)
        if bps is not None:
            last_t = -math.inf
            for i, bp in enumerate(bps):
                ok = (
                    isinstance(bp, list)
                    and len(bp) == 2
                    and _is_num(bp[0])
                    and isinstance(bp[1], list)
                    and all(_is_num(v) for v in bp[1])
                )
                if not ok:
                    dsec.err(f"breakpoints[{i}]", "expected [time_min, [values...]]")
                    continue
                if bp[0] < last_t:
                    dsec.err(f"breakpoints[{i}]", "times must be ascending")
                last_t = bp[0]

    # perturbations
    perts = doc.get("perturbations")
    if perts is not None:
        if not isinstance(perts, list):
            errors.append("perturbations: expected a list")
        else:
            for i, p in enumerate(perts):
                psec = _Section(p, f"perturbations[{i}]", errors)
                pkind = psec.string(
                    "kind", required=True, choices={"three_level", "prbs"}
                )
                if pkind == "three_level":
                    psec.reject_unknown(
                        {"kind", "input", "delta", "t0_min", "window_min"}
                    )
                    psec.num("delta", required=True)
                    psec.num("t0_min", default=0.0, minv=0.0)
                    psec.num("window_min", default=1440.0, positive=True)
                elif pkind == "prbs":
                    psec.reject_unknown(
                        {"kind", "input", "delta", "t0_min", "dwell_min",
                         "register_bits", "register_init"}
                    )
                    psec.num("delta", required=True)
                    psec.num("t0_min", default=0.0, minv=0.0)
                    psec.num("dwell_min", default=1.0, positive=True)
                    psec.integer("register_bits", default=10, minv=3)
                    psec.integer("register_init", default=1, minv=1)
                idx = psec.integer("input", required=True, minv=1)
                if idx is not None and m is not None and idx > m:
                    psec.err("input", f"input index out of range 1..{m}")

    return errors


def load_config(path) -> dict:
    """Read and validate a config file; raises ConfigError on violations."""
    with open(path, "r") as fh:
        doc = yaml.safe_load(fh)
    errors = validate_config(doc)
    if errors:
        raise ConfigError(errors)
    return doc


def config_hash(doc) -> str:
    """Canonical content hash used to tie results back to their config."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def set_config_value(doc, dotted_path: str, value):
    """Clone the config and set one (possibly list-indexed) dotted key."""
    patched = copy.deepcopy(doc)
    node = patched
    parts = dotted_path.split(".")
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise KeyError(dotted_path)
            idx = int(part)
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if part not in node:
                raise KeyError(dotted_path)
            if last:
                node[part] = value
            else:
                node = node[part]
        else:
            raise KeyError(dotted_path)
    return patched


def get_config_value(doc, dotted_path: str):
    node = doc
    for part in dotted_path.split("."):
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise KeyError(dotted_path)
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise KeyError(dotted_path)
    return node


# -- spec construction --------------------------------------------------------


def _build_topology(doc) -> Topology:
    sec = doc["topology"]
    edges = [tuple(e) for e in sec["edges"]]
    return Topology.from_edges(sec["m"], edges)


def _build_plant(doc):
    sec = doc["plant"]
    if sec["kind"] == "tec_surrogate":
        params = tec.TecParams(**(sec.get("params") or {}))
        model = tec.build_model(params)
        x0 = sec.get("initial_state")
        if x0 is None:
            x0 = tec.nominal_state(params)
        return model, params, tuple(float(v) for v in x0)
    m = doc["topology"]["m"]
    model = linear_test_plant(m)
    x0 = sec.get("initial_state")
    if x0 is None:
        x0 = [0.0] * m
    return model, None, tuple(float(v) for v in x0)


def _build_disutilities(doc):
    out = []
    for entry in doc["disutilities"]:
        lo = entry.get("u_low")
        hi = entry.get("u_high")
        out.append(
            DisutilityFunction(
                reference=float(entry["reference"]),
                weight=float(entry.get("weight", 1.0)),
                u_low=-math.inf if lo is None else float(lo),
                u_high=math.inf if hi is None else float(hi),
                mu=float(entry.get("mu", 1e-6)),
            )
        )
    return out


def _build_limits(doc) -> ProcessLimits:
    lim = doc["guard"]["limits"]
    if lim == "tec_default":
        return tec.default_limits()
    return ProcessLimits(
        variables={
            name: VariableLimits(
                normal_low=bounds.get("normal_low"),
                normal_high=bounds.get("normal_high"),
                shutdown_low=bounds.get("shutdown_low"),
                shutdown_high=bounds.get("shutdown_high"),
            )
            for name, bounds in lim.items()
        }
    )


def _build_selector(ev) -> LinkSelector:
    pairs = ev.get("pairs")
    return LinkSelector(
        pairs=tuple(tuple(p) for p in pairs) if pairs else None,
        src_role=_ROLES[ev["src_role"]] if ev.get("src_role") else None,
        dst_role=_ROLES[ev["dst_role"]] if ev.get("dst_role") else None,
    )


def _build_event(ev):
    etype = ev["type"]
    if etype == "terminate_node":
        return TerminateNode(node=ev["node"], duration=float(ev["duration_min"]))
    if etype == "overload_node":
        return OverloadNode(
            node=ev["node"],
            slowdown=float(ev["slowdown"]),
            duration=float(ev["duration_min"]),
        )
    if etype == "inject_latency":
        return InjectLatency(
            links=_build_selector(ev),
            added_latency=float(ev["added_latency_min"]),
            duration=float(ev["duration_min"]),
        )
    if etype == "inject_network_error":
        return InjectNetworkError(
            links=_build_selector(ev),
            drop_prob=float(ev["drop_prob"]),
            duration=float(ev["duration_min"]),
        )
    if etype == "subnet_unavailable":
        return SubnetUnavailable(duration=float(ev["duration_min"]))
    if etype == "restart_plc":
        return RestartPlc(node=ev["node"], downtime=float(ev["downtime_min"]))
    if etype == "fail_sensor":
        mode = ev["mode"]
        return FailSensor(
            node=ev["node"],
            fault=SensorFault(mode=mode, bias=float(ev.get("bias", 0.0))),
            duration=float(ev["duration_min"]),
        )
    raise ValueError(f"unhandled event type {etype!r}")


def _build_schedule(doc) -> EventSchedule:
    entries = [
        ScheduledEvent(start_time=float(ev["start_min"]), event=_build_event(ev))
        for ev in (doc.get("events") or [])
    ]
    return EventSchedule(entries=tuple(entries))


def _build_perturbations(doc):
    out = []
    for p in doc.get("perturbations") or []:
        idx = p["input"] - 1
        if p["kind"] == "three_level":
            out.append(
                InputPerturbation(
                    input_index=idx,
                    kind="three_level",
                    sequence=PerturbationSequence(
                        u0=0.0,
                        delta=float(p["delta"]),
                        t0=float(p.get("t0_min", 0.0)),
                        window=float(p.get("window_min", 1440.0)),
                    ),
                )
            )
        else:
            out.append(
                InputPerturbation(
                    input_index=idx,
                    kind="prbs",
                    prbs_k=int(p.get("register_bits", 10)),
                    prbs_register=int(p.get("register_init", 1)),
                    delta=float(p["delta"]),
                    dwell=float(p.get("dwell_min", 1.0)),
                    t0=float(p.get("t0_min", 0.0)),
                )
            )
    return tuple(out)


def build_spec(doc, seed_override=None):
    """Construct the runnable ExperimentSpec plus the setpoint preflight.

    The config must already have passed validate_config.  Returns
    (spec, preflight) where preflight records the solved initial inputs and
    the optimality-certificate residuals.
    """
    topology = _build_topology(doc)
    model, _params, x0 = _build_plant(doc)
    z_list = _build_disutilities(doc)

    sp = doc.get("setpoints") or {}
    demand = sp.get("demand")
    if demand is None:
        demand = sum(z.reference for z in z_list)
    gamma = float(sp.get("gamma", 1.0))

    sol = solve_setpoints(z_list, float(demand))
    preflight = {
        "setpoint_u": [float(v) for v in sol.u_h],
        "setpoint_nu": sol.nu,
        "balance_residual": sol.balance_residual,
        "stationarity_residual": sol.stationarity_residual,
    }
    try:
        cert = verify_optimality(
            topology,
            [1.0] * topology.m,
            sol,
            EquilibriumParams(gamma=gamma, d=float(demand)),
            z_list,
        )
        preflight["certificate_balance"] = cert.residual_balance
        preflight["certificate_conjugate"] = cert.residual_conjugate
        preflight["certificate_passed"] = cert.passed
    except Exception as exc:  # noqa: BLE001 - recorded, not gating
        preflight["certificate_error"] = f"{type(exc).__name__}: {exc}"

    ag = doc.get("agents") or {}
    beta = ag.get("beta") or [0.0] * topology.m
    gain = float(ag.get("local_feedback_gain", 0.0))
    c_list = ag.get("c")
    initial_u = ag.get("initial_u")
    u0 = [float(v) for v in (initial_u if initial_u is not None else sol.u_h)]
    weights = topology.weights
    agents = tuple(
        AgentState(
            node=CONTROLLER_BASE + j,
            u=u0[j],
            beta=float(beta[j]),
            c=(
                float(c_list[j])
                if c_list is not None
                else float(weights[j].sum()) + gain
            ),
        )
        for j in range(topology.m)
    )

    netdoc = doc.get("network") or {}
    network = NetworkSetup(
        base_latency_min=float(netdoc.get("base_latency_min", 0.0)),
        jitter_min=float(netdoc.get("jitter_min", 0.0)),
        drop_prob=float(netdoc.get("drop_prob", 0.0)),
        historian=bool(netdoc.get("historian", False)),
        hmi=bool(netdoc.get("hmi", False)),
    )

    ssdoc = doc["steady_state"]
    steady = SteadyStateSpec(
        metric=ssdoc["metric"],
        window_min=float(ssdoc["window_min"]),
        epsilon=float(ssdoc["epsilon"]),
        hold_min=float(ssdoc["hold_min"]),
    )
    hydoc = doc["hypothesis"]
    hypothesis = Hypothesis(
        metric=hydoc["metric"],
        band=(float(hydoc["band"][0]), float(hydoc["band"][1])),
        horizon_min=float(hydoc["horizon_min"]),
    )

    limits = _build_limits(doc)
    guard = AbortGuard(limits=limits, enabled=bool(doc["guard"].get("enabled", True)))

    distdoc = doc.get("disturbance")
    disturbance = None
    if distdoc is not None:
        disturbance = DisturbanceSignal.from_breakpoints(
            [(float(t), tuple(float(v) for v in vec)) for t, vec in distdoc["breakpoints"]]
        )

    rundoc = doc["run"]
    seed = int(seed_override if seed_override is not None else rundoc["seed"])
    spec = ExperimentSpec(
        label=str(doc.get("label", "experiment")),
        topology=topology,
        plant=model,
        agents=agents,
        x0=x0,
        steady=steady,
        hypothesis=hypothesis,
        schedule=_build_schedule(doc),
        guard=guard,
        limits=limits,
        duration_min=float(rundoc["duration_min"]),
        dt_min=float(rundoc.get("dt_min", 0.05)),
        seed=seed,
        settle_limit_min=float(rundoc.get("settle_limit_min", 240.0)),
        network=network,
        disturbance=disturbance,
        perturbations=_build_perturbations(doc),
        record_period_min=float(rundoc.get("record_period_min", 1.0)),
        sensor_period_min=float(rundoc.get("sensor_period_min", 1.0)),
    )
    return spec, preflight


# -- built-in demo scenarios ---------------------------------------------------


def _demo_base(label: str) -> dict:
    return {
        "label": label,
        "topology": {
            "m": 3,
            "edges": [[1, 2], [2, 1], [1, 3], [3, 1], [2, 3], [3, 2]],
        },
        "plant": {"kind": "tec_surrogate", "params": {}, "initial_state": None},
        "disutilities": [
            {"reference": 0.25, "weight": 1.0, "u_low": 0.0, "u_high": 0.5,
             "mu": 1.0e-8},
            {"reference": 3686.0, "weight": 1.0, "u_low": 0.0, "u_high": 7372.0,
             "mu": 1.0e-8},
            {"reference": 9.35, "weight": 1.0, "u_low": 0.0, "u_high": 18.7,
             "mu": 1.0e-8},
        ],
        "setpoints": {"demand": None, "gamma": 1.0},
        "agents": {
            "beta": [0.0, 0.0, 0.0],
            "local_feedback_gain": 0.2,
            "initial_u": None,
        },
        "network": {"base_latency_min": 0.0, "jitter_min": 0.0, "drop_prob": 0.0},
        "steady_state": {
            "metric": "output_yield",
            "window_min": 30.0,
            "epsilon": 0.02,
            "hold_min": 30.0,
        },
        "hypothesis": {
            "metric": "output_yield",
            "band": [0.90, 1.0],
            "horizon_min": 240.0,
        },
        "events": [],
        "guard": {"enabled": True, "limits": "tec_default"},
        "run": {
            "duration_min": 480.0,
            "dt_min": 0.05,
            "seed": 42,
            "settle_limit_min": 120.0,
            "record_period_min": 1.0,
            "sensor_period_min": 1.0,
        },
    }


def demo_configs() -> dict:
    """The four built-in scenarios around the surrogate plant."""
    nominal = _demo_base("demo_nominal")
    nominal["run"]["duration_min"] = 300.0

    outage = _demo_base("demo_router_outage")
    outage["events"] = [
        {"type": "subnet_unavailable", "start_min": 30.0, "duration_min": 120.0}
    ]
    outage["disturbance"] = {
        "breakpoints": [[0.0, [0.0]], [45.0, [1.5]]],
    }

    overdrive = _demo_base("demo_guard_overdrive")
    overdrive["events"] = [
        {"type": "subnet_unavailable", "start_min": 30.0, "duration_min": 300.0}
    ]
    overdrive["disturbance"] = {
        "breakpoints": [[0.0, [0.0]], [45.0, [7.0]]],
    }

    sweep = _demo_base("demo_latency_sweep")
    sweep["events"] = [
        {
            "type": "inject_latency",
            "start_min": 0.0,
            "duration_min": 480.0,
            "added_latency_min": 0.0,
            "src_role": "sensor",
        }
    ]
    sweep["disturbance"] = {
        "breakpoints": [[0.0, [0.0]], [15.0, [4.0]]],
    }

    return {
        "demo_nominal": nominal,
        "demo_router_outage": outage,
        "demo_guard_overdrive": overdrive,
        "demo_latency_sweep": sweep,
    }


def dump_config(doc) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
