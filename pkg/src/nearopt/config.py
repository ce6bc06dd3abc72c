"""Configuration files: the network/costs document and the pipeline config.

The network file is YAML with sections buses, links, generators, storage and
costs (plus the reference emissions anchoring the CO2 cap). Time series are
referenced by series id and live in scenario directories as CSV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .explore import ExploreConfig
from .model import CostAssumptions, Generator, Link, Network, Storage, TechCost
from .scenario import Calendar, LoadRegressionParams, PerturbationConfig


class ConfigError(Exception):
    pass


def _get(d: dict, key: str, default=None):
    return d[key] if key in d else default


def network_from_dict(doc: dict) -> tuple[Network, CostAssumptions]:
    try:
        buses = tuple(doc["buses"])
        generators = tuple(
            Generator(
                id=g["id"],
                bus=g["bus"],
                tech=g["tech"],
                existing_mw=float(_get(g, "existing_mw", 0.0)),
                extendable=bool(_get(g, "extendable", False)),
                capital_cost=_get(g, "capital_cost"),
                marginal_cost=_get(g, "marginal_cost"),
                emission_rate=_get(g, "emission_rate"),
                cf_series=_get(g, "cf_series"),
                inflow_series=_get(g, "inflow_series"),
                reservoir_mwh=_get(g, "reservoir_mwh"),
            )
            for g in _get(doc, "generators", [])
        )
        links = tuple(
            Link(
                id=l["id"],
                from_bus=l["from"],
                to_bus=l["to"],
                existing_mw=float(_get(l, "existing_mw", 0.0)),
                extendable=bool(_get(l, "extendable", False)),
                capital_cost=_get(l, "capital_cost"),
            )
            for l in _get(doc, "links", [])
        )
        storage = tuple(
            Storage(
                id=s["id"],
                bus=s["bus"],
                energy_capital_cost=float(s["energy_capital_cost"]),
                power_capital_cost=float(s["power_capital_cost"]),
                round_trip_efficiency=float(_get(s, "round_trip_efficiency", 0.9)),
                standing_loss=float(_get(s, "standing_loss", 0.0)),
                marginal_cost=float(_get(s, "marginal_cost", 0.0)),
                tech=_get(s, "tech", "storage"),
            )
            for s in _get(doc, "storage", [])
        )
        network = Network(
            buses, generators, links, storage, float(doc["reference_emissions"])
        )
        costs = CostAssumptions(
            {
                tech: TechCost(
                    capital_cost=float(c["capital_cost"]),
                    lifetime=float(c["lifetime"]),
                    discount_rate=float(c["discount_rate"]),
                    marginal_cost=float(_get(c, "marginal_cost", 0.0)),
                    emission_factor=float(_get(c, "emission_factor", 0.0)),
                )
                for tech, c in _get(doc, "costs", {}).items()
            }
        )
    except KeyError as err:
        raise ConfigError(f"network config is missing key {err}") from err
    network.validate()
    return network, costs


def network_to_dict(network: Network, costs: CostAssumptions) -> dict:
    def clean(d: dict) -> dict:
        return {k: v for k, v in d.items() if v is not None}

    return {
        "reference_emissions": network.reference_emissions,
        "buses": list(network.buses),
        "generators": [
            clean(
                {
                    "id": g.id,
                    "bus": g.bus,
                    "tech": g.tech,
                    "existing_mw": g.existing_mw,
                    "extendable": g.extendable,
                    "capital_cost": g.capital_cost,
                    "marginal_cost": g.marginal_cost,
                    "emission_rate": g.emission_rate,
                    "cf_series": g.cf_series,
                    "inflow_series": g.inflow_series,
                    "reservoir_mwh": g.reservoir_mwh,
                }
            )
            for g in network.generators
        ],
        "links": [
            clean(
                {
                    "id": l.id,
                    "from": l.from_bus,
                    "to": l.to_bus,
                    "existing_mw": l.existing_mw,
                    "extendable": l.extendable,
                    "capital_cost": l.capital_cost,
                }
            )
            for l in network.links
        ],
        "storage": [
            {
                "id": s.id,
                "bus": s.bus,
                "tech": s.tech,
                "energy_capital_cost": s.energy_capital_cost,
                "power_capital_cost": s.power_capital_cost,
                "round_trip_efficiency": s.round_trip_efficiency,
                "standing_loss": s.standing_loss,
                "marginal_cost": s.marginal_cost,
            }
            for s in network.storage
        ],
        "costs": {
            tech: {
                "capital_cost": c.capital_cost,
                "lifetime": c.lifetime,
                "discount_rate": c.discount_rate,
                "marginal_cost": c.marginal_cost,
                "emission_factor": c.emission_factor,
            }
            for tech, c in costs.techs.items()
        },
    }


def load_network(path) -> tuple[Network, CostAssumptions]:
    with open(path) as fh:
        return network_from_dict(yaml.safe_load(fh))


def load_costs(path) -> CostAssumptions:
    """Standalone costs document: either a bare tech mapping or {costs: {...}}."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    table = doc.get("costs", doc)
    return CostAssumptions(
        {
            tech: TechCost(
                capital_cost=float(c["capital_cost"]),
                lifetime=float(c["lifetime"]),
                discount_rate=float(c["discount_rate"]),
                marginal_cost=float(_get(c, "marginal_cost", 0.0)),
                emission_factor=float(_get(c, "emission_factor", 0.0)),
            )
            for tech, c in table.items()
        }
    )


def write_network(network: Network, costs: CostAssumptions, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(network_to_dict(network, costs), fh, sort_keys=True)


def load_params_file(path) -> dict[str, LoadRegressionParams]:
    with open(path) as fh:
        doc = json.load(fh)
    return {key: LoadRegressionParams.from_json_dict(p) for key, p in doc.items()}


def write_params_file(params: dict[str, LoadRegressionParams], path) -> None:
    with open(path, "w") as fh:
        json.dump({k: p.to_json_dict() for k, p in params.items()}, fh, indent=1, sort_keys=True)


@dataclass
class PipelineConfig:
    root: Path
    network_path: Path
    costs_path: Path | None
    scenario_dir: Path
    output_dir: Path
    eps: float
    co2_fraction: float
    n_scenarios: int
    base_scenario: Path | None  # scenario directory; None means packaged demo base
    perturbation: PerturbationConfig
    reduction_groups: dict[str, list[str]]
    weight_source: str
    explore: ExploreConfig
    allocations: list[str]
    shed_cost: float
    workers: int
    seed: int
    convergence: dict | None = None

    def validate(self) -> None:
        if self.eps < 0:
            raise ConfigError("eps must be nonnegative")
        if not self.network_path.exists():
            raise ConfigError(f"network file not found: {self.network_path}")
        if self.costs_path is not None and not self.costs_path.exists():
            raise ConfigError(f"costs file not found: {self.costs_path}")
        if self.base_scenario is not None and not self.base_scenario.exists():
            raise ConfigError(f"base scenario not found: {self.base_scenario}")
        if len(self.reduction_groups) < 2:
            raise ConfigError("need at least 2 reduction groups")
        if self.weight_source not in ("capital-cost", "unity"):
            raise ConfigError(f"unknown weight source '{self.weight_source}'")


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    overrides = overrides or {}
    root = path.parent

    def respath(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else root / p

    paths = _get(doc, "paths", {})
    scen_doc = _get(doc, "scenarios", {})
    pert_doc = _get(scen_doc, "perturbation", {})
    load_params = _get(pert_doc, "load_params")
    if load_params == "demo":
        from .demo import demo_load_params

        params = demo_load_params()
    elif load_params:
        params = load_params_file(respath(load_params))
    else:
        params = None
    n_days = _get(pert_doc, "calendar_days")
    perturbation = PerturbationConfig(
        cf_amplitude=float(_get(pert_doc, "cf_amplitude", 0.1)),
        cf_phase_steps=int(_get(pert_doc, "cf_phase_steps", 4)),
        temp_offset_c=float(_get(pert_doc, "temp_offset_c", 1.5)),
        inflow_scale=float(_get(pert_doc, "inflow_scale", 0.15)),
        load_amplitude=float(_get(pert_doc, "load_amplitude", 0.0)),
        load_params=params,
        load_region=_get(pert_doc, "load_region"),
        load_scale=_get(pert_doc, "load_scale"),
        calendar=Calendar.plain(int(n_days)) if n_days else None,
    )

    exp_doc = _get(doc, "explore", {})
    conv = _get(exp_doc, "convergence")
    seed = int(overrides.get("seed", _get(doc, "seed", 0)))
    explore_cfg = ExploreConfig(
        method=overrides.get("method", _get(exp_doc, "method", "maximal-centre-then-facets")),
        iterations=int(overrides.get("iterations", _get(exp_doc, "iterations", 150))),
        theta_deg=float(_get(exp_doc, "theta_deg", 1.0)),
        theta_min_deg=float(_get(exp_doc, "theta_min_deg", 0.01)),
        decay=float(_get(exp_doc, "decay", 0.8)),
        convergence_delta_pct=float(conv["delta_pct"]) if conv else None,
        convergence_window=int(conv["window"]) if conv else 5,
        parallel=int(_get(exp_doc, "parallel", 1)),
        seed=seed,
    )

    base = _get(scen_doc, "base")
    red_doc = _get(doc, "reduction", {})
    cfg = PipelineConfig(
        root=root,
        network_path=respath(paths.get("network", "network.yaml")),
        costs_path=respath(paths["costs"]) if paths.get("costs") else None,
        scenario_dir=respath(paths.get("scenarios", "scenarios")),
        output_dir=respath(overrides.get("output", paths.get("output", "run"))),
        eps=float(overrides.get("eps", _get(doc, "eps", 0.05))),
        co2_fraction=float(_get(doc, "co2_fraction", 0.05)),
        n_scenarios=int(_get(scen_doc, "count", 4)),
        base_scenario=respath(base) if base and base != "demo" else None,
        perturbation=perturbation,
        reduction_groups={k: list(v) for k, v in _get(red_doc, "groups", {}).items()},
        weight_source=_get(red_doc, "weight_source", "capital-cost"),
        explore=explore_cfg,
        allocations=list(_get(doc, "allocations", ["exact", "conservative", "mean", "baseline"])),
        shed_cost=float(_get(_get(doc, "validation", {}), "shed_cost", 7300.0)),
        workers=int(overrides.get("parallel", _get(doc, "workers", 1))),
        seed=seed,
    )
    cfg.validate()
    return cfg
