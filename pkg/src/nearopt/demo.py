"""Deterministic demo system: 5 buses on a ring, solar/wind/offshore/gas
plus non-extendable hydro and nuclear, battery storage, and synthetic
temperature-driven load built from the packaged regression parameters.

Everything here is generated from fixed seeds so demo runs are reproducible
byte for byte.
"""

from __future__ import annotations

import numpy as np

from .model import CostAssumptions, Generator, Link, Network, Storage, TechCost
from .scenario import (
    Calendar,
    LoadRegressionParams,
    PerturbationConfig,
    Scenario,
    _resample_hours,
    synthesize_load,
)

_BASE_SEED = 20210406  # fixed; demo base data never varies
N_DAYS = 28
STEP_HOURS = 3.0
N_STEPS = N_DAYS * 24 // int(STEP_HOURS)  # 224

BUS_SCALE = {"N1": 0.65, "N2": 0.9, "N3": 1.15, "N4": 1.35, "N5": 1.0}


def demo_network() -> tuple[Network, CostAssumptions]:
    buses = ("N1", "N2", "N3", "N4", "N5")
    links = tuple(
        Link(f"L{a[1]}{b[1]}", a, b, existing_mw=25.0, extendable=True, capital_cost=30000.0)
        for a, b in (("N1", "N2"), ("N2", "N3"), ("N3", "N4"), ("N4", "N5"), ("N5", "N1"))
    )
    gens: list[Generator] = []
    for bus in buses:
        gens.append(
            Generator(f"solar-{bus}", bus, "solar", extendable=True, cf_series=f"solar-{bus}")
        )
        gens.append(
            Generator(f"onwind-{bus}", bus, "onwind", extendable=True, cf_series=f"onwind-{bus}")
        )
    for bus in ("N1", "N5"):
        gens.append(
            Generator(f"offwind-{bus}", bus, "offwind", extendable=True, cf_series=f"offwind-{bus}")
        )
    for bus in ("N2", "N3", "N4"):
        gens.append(Generator(f"gas-{bus}", bus, "gas", extendable=True))
    gens.append(
        Generator("nuclear-N3", "N3", "nuclear", existing_mw=55.0, marginal_cost=12.0)
    )
    gens.append(
        Generator(
            "hydro-N2",
            "N2",
            "hydro",
            existing_mw=50.0,
            marginal_cost=1.0,
            inflow_series="hydro-N2",
            reservoir_mwh=3000.0,
        )
    )
    storage = (
        Storage(
            "batt-N4",
            "N4",
            energy_capital_cost=9000.0,
            power_capital_cost=6500.0,
            round_trip_efficiency=0.88,
            standing_loss=0.0002,
            tech="battery",
        ),
    )
    network = Network(buses, tuple(gens), links, storage, reference_emissions=150_000.0)
    costs = CostAssumptions(
        {
            "solar": TechCost(600_000.0, 25, 0.07, marginal_cost=0.0),
            "onwind": TechCost(1_040_000.0, 27, 0.07, marginal_cost=1.5),
            "offwind": TechCost(1_600_000.0, 27, 0.07, marginal_cost=2.0),
            "gas": TechCost(430_000.0, 25, 0.07, marginal_cost=65.0, emission_factor=0.4),
        }
    )
    return network, costs


def demo_load_params() -> dict[str, LoadRegressionParams]:
    """Per-bus parameters of the two-stage load model."""
    hod = np.arange(24)
    day_shape = 1.0 + 0.16 * np.sin(np.pi * (hod - 7.0) / 12.0) ** 2 * np.where(
        (hod >= 7) & (hod <= 21), 1.0, -0.55
    )
    profile = np.concatenate([day_shape * (0.94 if d >= 5 else 1.0) for d in range(7)])
    profile = profile / profile.mean()
    params = {}
    for bus, scale in BUS_SCALE.items():
        weekday_level = scale * np.array([56.0, 57.0, 57.5, 57.0, 56.0, 50.0, 48.0])
        params[bus] = LoadRegressionParams(
            weekly_profile=profile,
            trend=0.0,
            weekday_level=weekday_level,
            heating_coeff=1.1 * scale,
            cooling_coeff=0.35 * scale,
        )
    return params


def demo_temperatures() -> np.ndarray:
    rng = np.random.default_rng(_BASE_SEED)
    d = np.arange(N_DAYS)
    return 7.5 + 7.0 * np.sin(2 * np.pi * d / N_DAYS - 1.2) + rng.normal(0, 1.1, N_DAYS)


def demo_base_scenario() -> Scenario:
    rng = np.random.default_rng(_BASE_SEED + 1)
    t = np.arange(N_STEPS)
    hod = (t * STEP_HOURS) % 24.0

    cf: dict[str, np.ndarray] = {}
    for i, bus in enumerate(BUS_SCALE):
        sun = np.maximum(np.sin(np.pi * (hod - 6.0) / 12.0), 0.0)
        seasonal = 0.62 + 0.1 * np.sin(2 * np.pi * t / N_STEPS + 0.4 * i)
        cf[f"solar-{bus}"] = np.clip(sun * seasonal * (1.0 + 0.08 * rng.normal(size=N_STEPS)), 0.0, 0.8)
        wind = (
            0.33
            + 0.22 * np.sin(2 * np.pi * t / 56.0 + 1.3 * i)
            + 0.14 * np.sin(2 * np.pi * t / 17.0 + 0.7 * i)
            + 0.06 * rng.normal(size=N_STEPS)
        )
        cf[f"onwind-{bus}"] = np.clip(wind * (1.15 if i < 2 else 0.95), 0.03, 0.82)
    for i, bus in enumerate(("N1", "N5")):
        off = (
            0.46
            + 0.24 * np.sin(2 * np.pi * t / 64.0 + 2.1 * i)
            + 0.05 * rng.normal(size=N_STEPS)
        )
        cf[f"offwind-{bus}"] = np.clip(off, 0.08, 0.85)

    temps = demo_temperatures()
    cal = Calendar.plain(N_DAYS)
    params = demo_load_params()
    loads = {
        bus: _resample_hours(synthesize_load(params[bus], temps, cal), STEP_HOURS, N_STEPS)
        for bus in BUS_SCALE
    }

    inflow = 42.0 + 18.0 * np.sin(2 * np.pi * t / N_STEPS + 0.8) + 4.0 * rng.normal(size=N_STEPS)
    inflows = {"hydro-N2": np.maximum(inflow, 0.0)}

    return Scenario("base", STEP_HOURS, cf, loads, inflows, {"R": temps})


def demo_perturbation() -> PerturbationConfig:
    return PerturbationConfig(
        cf_amplitude=0.12,
        cf_phase_steps=6,
        temp_offset_c=2.5,
        inflow_scale=0.2,
        load_params=demo_load_params(),
        load_region="R",
        calendar=Calendar.plain(N_DAYS),
    )


DEMO_GROUPS: dict[str, list[str]] = {
    "transmission": ["transmission"],
    "solar": ["solar"],
    "onwind": ["onwind"],
    "offwind": ["offwind"],
    "gas": ["gas"],
}


def write_demo_assets(directory, eps: float = 0.05, iterations: int = 40, count: int = 4, seed: int = 7):
    """Write a self-contained demo study (network, base scenario, config)."""
    import pathlib

    import yaml

    from .config import write_network, write_params_file
    from .scenario import write_scenario

    d = pathlib.Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    net, costs = demo_network()
    write_network(net, costs, d / "network.yaml")
    write_params_file(demo_load_params(), d / "load_params.json")
    write_scenario(demo_base_scenario(), d / "base")
    cfg = {
        "seed": seed,
        "eps": eps,
        "co2_fraction": 0.05,
        "paths": {
            "network": "network.yaml",
            "scenarios": "scenarios",
            "output": "run",
        },
        "scenarios": {
            "count": count,
            "base": "base",
            "perturbation": {
                "cf_amplitude": 0.12,
                "cf_phase_steps": 6,
                "temp_offset_c": 2.5,
                "inflow_scale": 0.2,
                "load_params": "load_params.json",
                "load_region": "R",
                "calendar_days": N_DAYS,
            },
        },
        "reduction": {"weight_source": "capital-cost", "groups": DEMO_GROUPS},
        "explore": {
            "method": "maximal-centre-then-facets",
            "iterations": iterations,
            "theta_deg": 1.0,
            "theta_min_deg": 0.01,
            "decay": 0.8,
        },
        "allocations": ["exact", "conservative", "mean", "baseline"],
        "validation": {"shed_cost": 7300.0},
        "workers": 2,
    }
    with open(d / "config.yaml", "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    return d / "config.yaml"
