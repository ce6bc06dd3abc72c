"""Shared tiny systems; everything here solves in milliseconds."""

import numpy as np
import pytest

from nearopt.model import Generator, Link, Network, Storage
from nearopt.scenario import Scenario


def make_scenario(sid="s", step_hours=3.0, loads=None, cf=None, inflows=None, temps=None):
    return Scenario(
        sid,
        step_hours,
        {k: np.asarray(v, dtype=float) for k, v in (cf or {}).items()},
        {k: np.asarray(v, dtype=float) for k, v in (loads or {}).items()},
        {k: np.asarray(v, dtype=float) for k, v in (inflows or {}).items()},
        {k: np.asarray(v, dtype=float) for k, v in (temps or {}).items()},
    )


@pytest.fixture
def single_bus():
    """One bus, one extendable always-available generator."""
    net = Network(
        buses=("B1",),
        generators=(
            Generator("g", "B1", "gen", extendable=True, capital_cost=100.0, marginal_cost=1.0),
        ),
        links=(),
        storage=(),
        reference_emissions=1000.0,
    )
    sc = make_scenario(loads={"B1": np.full(4, 1.0)})
    return net, sc


@pytest.fixture
def two_bus():
    """Generation at A only, load at B only, one extendable link between."""
    net = Network(
        buses=("A", "B"),
        generators=(
            Generator("g", "A", "gen", extendable=True, capital_cost=50.0, marginal_cost=1.0),
        ),
        links=(Link("AB", "A", "B", existing_mw=0.0, extendable=True, capital_cost=10.0),),
        storage=(),
        reference_emissions=1000.0,
    )
    sc = make_scenario(loads={"A": np.zeros(4), "B": np.array([1.0, 3.0, 2.0, 1.5])})
    return net, sc


@pytest.fixture
def gas_wind():
    """Emitting gas vs free wind on one bus; wind alone can cover the load."""
    net = Network(
        buses=("B1",),
        generators=(
            Generator(
                "gas", "B1", "gas", extendable=True, capital_cost=40.0,
                marginal_cost=10.0, emission_rate=0.5,
            ),
            Generator(
                "wind", "B1", "wind", extendable=True, capital_cost=90.0,
                marginal_cost=0.0, cf_series="wind",
            ),
        ),
        links=(),
        storage=(),
        reference_emissions=1000.0,
    )
    cf = np.array([0.5, 0.3, 0.8, 0.4, 0.6, 0.7, 0.35, 0.55])
    sc = make_scenario(loads={"B1": np.full(8, 2.0)}, cf={"wind": cf})
    return net, sc


def k2_system(n_steps=48, seed=0):
    """Two-technology system whose reduced space is a 2-D polygon."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_steps)
    solar = np.clip(np.maximum(np.sin(np.pi * ((t * 3) % 24 - 6) / 12.0), 0.0) * 0.75, 0, 0.75)
    wind = np.clip(0.4 + 0.3 * np.sin(2 * np.pi * t / 19 + 1.0) + 0.05 * rng.normal(size=n_steps), 0.05, 0.9)
    load = 10.0 + 3.0 * np.sin(2 * np.pi * t / 8.0) + rng.uniform(0, 1, n_steps)
    net = Network(
        buses=("B1",),
        generators=(
            Generator("solar", "B1", "solar", extendable=True, capital_cost=55.0, cf_series="solar"),
            Generator("wind", "B1", "wind", extendable=True, capital_cost=95.0, cf_series="wind"),
            Generator(
                "gas", "B1", "gas", extendable=True, capital_cost=40.0,
                marginal_cost=60.0, emission_rate=0.4,
            ),
        ),
        links=(),
        storage=(
            Storage("batt", "B1", energy_capital_cost=8.0, power_capital_cost=6.0,
                    round_trip_efficiency=0.9, tech="battery"),
        ),
        reference_emissions=60_000.0,
    )
    sc = make_scenario(sid=f"k2-{seed}", loads={"B1": load}, cf={"solar": solar, "wind": wind})
    return net, sc
