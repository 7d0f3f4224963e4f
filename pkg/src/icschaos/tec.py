"""Reduced single-reaction surrogate of the Tennessee Eastman challenge plant.

The full benchmark has dozens of states; this surrogate keeps the handful
that the chaos experiments monitor, with dynamics simple enough to have a
closed-form equilibrium:

  - reactor_temperature_c: dT/dt = k_rxn * F - k_cool * (T - T_cool), where
    F is the reactant inflow (feed 1 + feed 3 + any uncommanded extra feed)
    and k_rxn is calibrated so the nominal feeds hold T at 120 C.
  - reactor pressure and the three holdup levels relax first-order
    (tau = 20 min) toward mid-band targets that shift in proportion to the
    relative feed imbalance.

Product formation follows a Gaussian yield curve in temperature,
Y(T) = 0.95 * exp(-((T - 120) / 40)^2), peaking at the nominal operating
point; product flow is Y(T) * F.  Feed 2 (the heavy mass-flow feed) enters
the feed-rate KPI only.  All times are minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .plant import PlantModel, ProcessLimits, VariableLimits

STATE_NAMES = (
    "reactor_temperature_c",
    "reactor_pressure_kpa",
    "reactor_level_m3",
    "separator_level_m3",
    "stripper_level_m3",
)
INPUT_NAMES = ("feed1_kscmh", "feed2_kgh", "feed3_kscmh")

# Nominal manipulated inputs of the benchmark operating point.
U1_NOMINAL = 0.25     # kscmh
U2_NOMINAL = 3686.0   # kg/h
U3_NOMINAL = 9.35     # kscmh

KPI_NAMES = ("throughput_rate", "input_feed_rate", "output_yield")


@dataclass(frozen=True)
class TecParams:
    """Surrogate constants; every value can be overridden from config."""

    t_cool_c: float = 25.0
    k_cool_per_min: float = 0.2
    t_nominal_c: float = 120.0
    yield_max: float = 0.95
    yield_sigma_c: float = 40.0
    tau_aux_min: float = 20.0
    # Mid-band rest points for the non-thermal states.
    pressure_nominal_kpa: float = 2700.0
    reactor_level_nominal_m3: float = 16.55
    separator_level_nominal_m3: float = 6.15
    stripper_level_nominal_m3: float = 5.05
    # Feed-imbalance coupling of the rest points, per unit relative imbalance.
    pressure_coupling: float = 0.1
    level_coupling: float = 0.5
    # Gain of the per-agent temperature-deviation measurement.
    measurement_gain_per_c: float = 0.01

    @property
    def feed_nominal(self):
        return U1_NOMINAL + U3_NOMINAL

    @property
    def k_rxn(self):
        # Calibrated so nominal feeds balance cooling exactly at t_nominal_c.
        return (
            self.k_cool_per_min
            * (self.t_nominal_c - self.t_cool_c)
            / self.feed_nominal
        )

    def yield_at(self, temp_c: float) -> float:
        z = (temp_c - self.t_nominal_c) / self.yield_sigma_c
        return self.yield_max * math.exp(-(z * z))


# Operating limits of the monitored process variables.  High-side reactor
# limits: trip to shutdown above 175 C / 3000 kPa; the remaining bands are
# two-sided holdup constraints.
DEFAULT_LIMITS = {
    "reactor_pressure_kpa": {"normal_high": 2895.0, "shutdown_high": 3000.0},
    "reactor_level_m3": {
        "normal_low": 11.8,
        "normal_high": 21.3,
        "shutdown_low": 2.0,
        "shutdown_high": 24.0,
    },
    "reactor_temperature_c": {"normal_high": 150.0, "shutdown_high": 175.0},
    "separator_level_m3": {
        "normal_low": 3.3,
        "normal_high": 9.0,
        "shutdown_low": 1.0,
        "shutdown_high": 12.0,
    },
    "stripper_level_m3": {
        "normal_low": 3.5,
        "normal_high": 6.6,
        "shutdown_low": 1.0,
        "shutdown_high": 8.0,
    },
}


def default_limits() -> ProcessLimits:
    return ProcessLimits(
        variables={
            name: VariableLimits(**bounds) for name, bounds in DEFAULT_LIMITS.items()
        }
    )


def nominal_inputs() -> np.ndarray:
    return np.array([U1_NOMINAL, U2_NOMINAL, U3_NOMINAL])


def nominal_state(params: TecParams | None = None) -> np.ndarray:
    p = params or TecParams()
    return np.array(
        [
            p.t_nominal_c,
            p.pressure_nominal_kpa,
            p.reactor_level_nominal_m3,
            p.separator_level_nominal_m3,
            p.stripper_level_nominal_m3,
        ]
    )


def reactant_inflow(u, delta, params: TecParams) -> float:
    # delta[0] is uncommanded extra reactant feed (valve drift etc.), kscmh.
    extra = float(delta[0]) if len(delta) else 0.0
    return float(u[0]) + float(u[2]) + extra


def build_model(params: TecParams | None = None) -> PlantModel:
    p = params or TecParams()
    k_rxn = p.k_rxn
    aux_noms = np.array(
        [
            p.pressure_nominal_kpa,
            p.reactor_level_nominal_m3,
            p.separator_level_nominal_m3,
            p.stripper_level_nominal_m3,
        ]
    )
    couplings = np.array(
        [p.pressure_coupling, p.level_coupling, p.level_coupling, p.level_coupling]
    )
    feed_nom = p.feed_nominal
    nominal_yield = p.yield_at(p.t_nominal_c)

    def g(x, u, delta):
        feed = reactant_inflow(u, delta, p)
        temp = x[0]
        d_temp = k_rxn * feed - p.k_cool_per_min * (temp - p.t_cool_c)
        imbalance = (feed - feed_nom) / feed_nom
        targets = aux_noms * (1.0 + couplings * imbalance)
        d_aux = -(x[1:] - targets) / p.tau_aux_min
        out = np.empty(5)
        out[0] = d_temp
        out[1:] = d_aux
        return out

    def h(x, u, delta):
        temp = x[0]
        return np.array([temp - p.t_nominal_c, p.yield_at(temp) - nominal_yield])

    def agent_signal(x, u, delta):
        dev = p.measurement_gain_per_c * (x[0] - p.t_nominal_c)
        return np.full(3, dev)

    def product_flow(x, u, delta):
        return p.yield_at(x[0]) * reactant_inflow(u, delta, p)

    def throughput_rate(x, u, delta):
        return product_flow(x, u, delta)

    def input_feed_rate(x, u, delta):
        return float(u[0]) + float(u[1]) + float(u[2])

    def output_yield(x, u, delta):
        feed = reactant_inflow(u, delta, p)
        if feed <= 0:
            return 0.0
        return product_flow(x, u, delta) / feed

    return PlantModel(
        n=5,
        m=3,
        n_delta=1,
        g=g,
        h=h,
        state_names=STATE_NAMES,
        input_names=INPUT_NAMES,
        agent_signal=agent_signal,
        boundary_maps={
            "throughput_rate": throughput_rate,
            "input_feed_rate": input_feed_rate,
            "output_yield": output_yield,
            "_reactant_inflow": lambda x, u, delta: reactant_inflow(u, delta, p),
            "_product_flow": product_flow,
        },
    )
