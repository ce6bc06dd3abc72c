"""Stress-testing fixed designs by dispatch-only optimisation.

Every scenario is dispatched with the design's capacities fixed, the CO2 cap
active and a hard operational budget row; unmet demand is absorbed by a
costly load-shedding variable. Because the budget row is hard, the reported
shedding conflates technical infeasibility with over-budget operations; the
two components are separated by re-solving each scenario without the budget
row and reporting that shedding as the technical part.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import lp as lpmod
from .model import DEFAULT_SHED_COST, InvestmentVector, Network, build_dispatch_lp
from .scenario import Scenario


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioDispatch:
    scenario_id: str
    status: str
    shed_mwh: float  # annualised, with the budget row active
    technical_shed_mwh: float  # annualised, budget row removed
    shed_cost: float  # EUR/a
    op_cost: float  # EUR/a, excluding the shedding penalty
    emissions: float  # tCO2/a
    load_mwh: float  # annualised


@dataclass(frozen=True)
class ValidationReport:
    allocation: str
    op_budget: float
    shed_cost_rate: float
    co2_limit: float
    rows: tuple[ScenarioDispatch, ...]

    @property
    def total_shed_mwh(self) -> float:
        return sum(r.shed_mwh for r in self.rows)

    @property
    def total_technical_shed_mwh(self) -> float:
        return sum(r.technical_shed_mwh for r in self.rows)

    @property
    def total_load_mwh(self) -> float:
        return sum(r.load_mwh for r in self.rows)

    @property
    def relative_shedding(self) -> float:
        total = self.total_load_mwh
        return self.total_shed_mwh / total if total > 0 else 0.0

    def to_json_dict(self) -> dict:
        return {
            "allocation": self.allocation,
            "op_budget": self.op_budget,
            "shed_cost_rate": self.shed_cost_rate,
            "co2_limit": self.co2_limit,
            "total_shed_mwh": self.total_shed_mwh,
            "total_technical_shed_mwh": self.total_technical_shed_mwh,
            "total_load_mwh": self.total_load_mwh,
            "relative_shedding": self.relative_shedding,
            "scenarios": [
                {
                    "scenario": r.scenario_id,
                    "status": r.status,
                    "shed_mwh": r.shed_mwh,
                    "technical_shed_mwh": r.technical_shed_mwh,
                    "shed_cost": r.shed_cost,
                    "op_cost": r.op_cost,
                    "emissions": r.emissions,
                    "load_mwh": r.load_mwh,
                }
                for r in self.rows
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)


def _dispatch_one(
    network: Network,
    design: Mapping[str, float],
    sc: Scenario,
    co2_limit: float,
    op_budget: float | None,
    shed_cost: float,
) -> tuple[str, float, float, float, float, float]:
    problem = build_dispatch_lp(network, design, sc, co2_limit, op_budget, shed_cost)
    sol = lpmod.solve(problem.lp)
    if sol.status == lpmod.UNBOUNDED:
        raise ValidationError(
            f"dispatch for scenario {sc.id} is unbounded; the model is malformed"
        )
    if not sol.is_optimal:
        return sol.status, np.nan, np.nan, np.nan, np.nan, problem.load_energy
    shed = problem.shed_mwh(sol.x)
    return (
        sol.status,
        shed,
        shed * shed_cost,
        problem.operational_cost(sol.x),
        problem.emissions_t(sol.x),
        problem.load_energy,
    )


def stress_test(
    design: InvestmentVector | Mapping[str, float],
    network: Network,
    scenarios: Sequence[Scenario],
    op_budget: float,
    shed_cost: float = DEFAULT_SHED_COST,
    co2_limit: float = np.inf,
    allocation: str = "design",
    workers: int = 1,
) -> ValidationReport:
    """Dispatch the design over every scenario under a common budget.

    Two solves per scenario: with the budget row (headline shedding) and
    without it (the technical-infeasibility component of that shedding).
    """
    if isinstance(design, InvestmentVector):
        design = design.as_mapping()
    for element, value in design.items():
        if value < 0:
            raise ValueError(f"negative capacity for {element}")

    def run(sc: Scenario) -> ScenarioDispatch:
        status, shed, shed_eur, op, em, load = _dispatch_one(
            network, design, sc, co2_limit, op_budget, shed_cost
        )
        _, tech_shed, _, _, _, _ = _dispatch_one(
            network, design, sc, co2_limit, None, shed_cost
        )
        return ScenarioDispatch(sc.id, status, shed, tech_shed, shed_eur, op, em, load)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(run, scenarios))
    else:
        rows = tuple(run(sc) for sc in scenarios)
    return ValidationReport(allocation, op_budget, shed_cost, co2_limit, rows)


def summarize(reports: Sequence[ValidationReport]) -> list[dict]:
    """Comparison rows, sorted by ascending total shedding."""
    if not reports:
        raise ValidationError("nothing to summarise")
    rows = [
        {
            "allocation": r.allocation,
            "total_shed_mwh": r.total_shed_mwh,
            "technical_shed_mwh": r.total_technical_shed_mwh,
            "relative_shedding": r.relative_shedding,
        }
        for r in reports
    ]
    rows.sort(key=lambda row: (row["total_shed_mwh"], row["allocation"]))
    return rows


def write_summary_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(
            fh, fieldnames=["allocation", "total_shed_mwh", "technical_shed_mwh", "relative_shedding"]
        )
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
