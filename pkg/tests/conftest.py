"""Shared fixtures: the built-in demo scenarios, run once per session.

The three scenario runs and the latency sweep are reused across module tests
and the acceptance gate, so each simulates exactly once.
"""

import time

import pytest

from icschaos.config import build_spec, demo_configs, set_config_value
from icschaos.experiment import run_experiment

SWEEP_LATENCIES = (0.0, 1.0, 5.0, 20.0)


@pytest.fixture(scope="session")
def demo_docs():
    return demo_configs()


def _timed_run(doc):
    spec, preflight = build_spec(doc)
    t0 = time.perf_counter()
    result = run_experiment(spec)
    elapsed = time.perf_counter() - t0
    return result, elapsed, preflight


@pytest.fixture(scope="session")
def nominal_run(demo_docs):
    return _timed_run(demo_docs["demo_nominal"])


@pytest.fixture(scope="session")
def outage_run(demo_docs):
    return _timed_run(demo_docs["demo_router_outage"])


@pytest.fixture(scope="session")
def overdrive_run(demo_docs):
    return _timed_run(demo_docs["demo_guard_overdrive"])


@pytest.fixture(scope="session")
def latency_sweep_runs(demo_docs):
    """Four runs of the sweep scenario at {0, 1, 5, 20} min added latency."""
    base = demo_docs["demo_latency_sweep"]
    out = []
    for lat in SWEEP_LATENCIES:
        doc = set_config_value(base, "events.0.added_latency_min", lat)
        spec, _ = build_spec(doc)
        out.append(run_experiment(spec))
    return out
