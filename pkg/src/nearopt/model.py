"""Capacity-expansion and dispatch LPs for a transport-flow power system.

The model is deliberately desk-scale: nodal energy balances, capacity-factor
limited dispatch, transport flows on links (no voltage angles), storage with
cyclic state of charge, inflow-driven reservoir plants with spillage, and an
annual CO2 cap. A snapshot weighting scales all operational quantities so
that one scenario horizon represents one year, which keeps objectives in
EUR/a regardless of horizon length.

Investment variables are new capacities of extendable elements; existing
capacities enter the constraint right-hand sides (partial greenfield). Load
shedding exists only in dispatch problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .lp import (
    INVESTMENT,
    OPERATIONAL,
    ColumnInfo,
    LinearProgram,
    Triplets,
    VariableIndex,
    project_investments,
)
from .scenario import Scenario

HOURS_PER_YEAR = 8760.0
DEFAULT_SHED_COST = 7300.0  # EUR/MWh


class ModelError(Exception):
    pass


class DataError(ModelError):
    """A referenced time series is missing or malformed."""


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    tech: str
    existing_mw: float = 0.0
    extendable: bool = False
    capital_cost: float | None = None  # EUR/MW/a, already annualised
    marginal_cost: float | None = None  # EUR/MWh
    emission_rate: float | None = None  # tCO2/MWh
    cf_series: str | None = None  # series id in the scenario; None means flat 1.0
    inflow_series: str | None = None  # series id; marks a reservoir plant
    reservoir_mwh: float | None = None  # max stored energy; None means unbounded


@dataclass(frozen=True)
class Link:
    id: str
    from_bus: str
    to_bus: str
    existing_mw: float = 0.0
    extendable: bool = False
    capital_cost: float | None = None  # EUR/MW/a


@dataclass(frozen=True)
class Storage:
    id: str
    bus: str
    energy_capital_cost: float  # EUR/MWh/a
    power_capital_cost: float  # EUR/MW/a
    round_trip_efficiency: float = 0.9
    standing_loss: float = 0.0  # fraction of state lost per step
    marginal_cost: float = 0.0  # EUR/MWh discharged
    tech: str = "storage"


@dataclass(frozen=True)
class Network:
    buses: tuple[str, ...]
    generators: tuple[Generator, ...]
    links: tuple[Link, ...]
    storage: tuple[Storage, ...]
    reference_emissions: float  # tCO2/a anchoring the CO2 cap

    def validate(self) -> None:
        buses = set(self.buses)
        if len(buses) != len(self.buses):
            raise ModelError("duplicate bus ids")
        ids = [g.id for g in self.generators] + [l.id for l in self.links] + [s.id for s in self.storage]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate element ids")
        for g in self.generators:
            if g.bus not in buses:
                raise ModelError(f"generator {g.id} references unknown bus {g.bus}")
            if g.existing_mw < 0:
                raise ModelError(f"generator {g.id} has negative existing capacity")
        for l in self.links:
            if l.from_bus == l.to_bus:
                raise ModelError(f"link {l.id} connects a bus to itself")
            if l.from_bus not in buses or l.to_bus not in buses:
                raise ModelError(f"link {l.id} references an unknown bus")
            if l.existing_mw < 0:
                raise ModelError(f"link {l.id} has negative existing capacity")
        for s in self.storage:
            if s.bus not in buses:
                raise ModelError(f"storage {s.id} references unknown bus {s.bus}")
            if not 0 < s.round_trip_efficiency <= 1:
                raise ModelError(f"storage {s.id} round-trip efficiency outside (0, 1]")
            if not 0 <= s.standing_loss < 1:
                raise ModelError(f"storage {s.id} standing loss outside [0, 1)")


@dataclass(frozen=True)
class TechCost:
    capital_cost: float  # EUR/MW overnight
    lifetime: float  # years
    discount_rate: float
    marginal_cost: float = 0.0  # EUR/MWh
    emission_factor: float = 0.0  # tCO2/MWh

    def __post_init__(self):
        if self.lifetime < 1:
            raise ModelError("lifetime must be at least 1 year")
        if not 0 <= self.discount_rate < 1:
            raise ModelError("discount rate must lie in [0, 1)")
        if self.capital_cost < 0 or self.marginal_cost < 0:
            raise ModelError("costs must be nonnegative")


@dataclass(frozen=True)
class CostAssumptions:
    techs: Mapping[str, TechCost]

    def annualised(self, tech: str) -> float:
        tc = self.techs[tech]
        return annuity(tc.capital_cost, tc.lifetime, tc.discount_rate)


def annuity(capital_cost: float, lifetime: float, discount_rate: float) -> float:
    """Annualised cost of capital: capital * r / (1 - (1+r)^-lifetime)."""
    if lifetime < 1:
        raise ValueError("lifetime must be at least 1 year")
    if not 0 <= discount_rate < 1:
        raise ValueError("discount rate must lie in [0, 1)")
    if discount_rate == 0:
        return capital_cost / lifetime
    r = discount_rate
    return capital_cost * r / (1.0 - (1.0 + r) ** (-lifetime))


@dataclass(frozen=True)
class ExpansionProblem:
    """An emitted LP plus the bookkeeping needed to interpret its solutions."""

    lp: LinearProgram
    index: VariableIndex
    co2_limit: float  # tCO2/a
    scenario_id: str
    op_cost: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    shed_energy: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    emissions: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    load_energy: float = 0.0  # MWh/a

    @property
    def investment_costs(self) -> np.ndarray:
        cols, _ = self.index.investment_columns()
        return self.lp.c[cols]

    def operational_cost(self, x: np.ndarray) -> float:
        """EUR/a spent on operations, excluding any shedding penalty."""
        return float(self.op_cost @ x)

    def shed_mwh(self, x: np.ndarray) -> float:
        return float(self.shed_energy @ x)

    def emissions_t(self, x: np.ndarray) -> float:
        return float(self.emissions @ x)


@dataclass(frozen=True)
class InvestmentVector:
    """New capacities per extendable element, ordered by element id."""

    elements: tuple[str, ...]
    values: np.ndarray
    costs: np.ndarray  # EUR per unit per year

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "costs", np.asarray(self.costs, dtype=float))
        if len(self.elements) != len(self.values) or len(self.elements) != len(self.costs):
            raise ModelError("investment vector field lengths differ")

    def capex(self) -> float:
        return float(self.costs @ self.values)

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.elements, (float(v) for v in self.values)))

    def scaled(self, factor: float) -> "InvestmentVector":
        return replace(self, values=self.values * factor)


def investment_vector(problem: ExpansionProblem, x: np.ndarray) -> InvestmentVector:
    _, elements = problem.index.investment_columns()
    return InvestmentVector(elements, project_investments(x, problem.index), problem.investment_costs)


def build_reduction_map(
    problem: ExpansionProblem,
    groups: Mapping[str, Sequence[str]],
    weight_source: str = "capital-cost",
) -> "ReductionMap":
    """Aggregation map from technology-tag groups.

    Weights are the annualised capital costs of the member columns (so every
    dimension is in EUR/a) or 1.0 with the `unity` source (plain capacities).
    """
    from .lp import ReductionMap

    if weight_source not in ("capital-cost", "unity"):
        raise ModelError(f"unknown weight source '{weight_source}'")
    cols, _ = problem.index.investment_columns()
    tech = [problem.index.columns[c].group for c in cols]
    inv_costs = problem.investment_costs
    labels: list[str] = []
    out_groups: list[np.ndarray] = []
    out_weights: list[np.ndarray] = []
    for label, tags in groups.items():
        idx = np.array([i for i, t in enumerate(tech) if t in tags], dtype=np.int64)
        if idx.size == 0:
            raise ModelError(f"reduction group '{label}' matches no investment columns")
        labels.append(label)
        out_groups.append(idx)
        if weight_source == "capital-cost":
            w = inv_costs[idx]
            if np.any(w <= 0):
                raise ModelError(f"group '{label}' has a nonpositive capital-cost weight")
            out_weights.append(w)
        else:
            out_weights.append(np.ones(idx.size))
    return ReductionMap(tuple(labels), tuple(out_groups), tuple(out_weights))


class _Builder:
    """Accumulates columns and sparse rows for one LP."""

    def __init__(self):
        self.cols: list[ColumnInfo] = []
        self.obj: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.ub_rows: list[tuple[list[int], list[float]]] = []
        self.ub_rhs: list[float] = []
        self.eq_rows: list[tuple[list[int], list[float]]] = []
        self.eq_rhs: list[float] = []

    def add_col(self, info: ColumnInfo, cost: float = 0.0, lb: float = 0.0, ub: float = np.inf) -> int:
        self.cols.append(info)
        self.obj.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        return len(self.cols) - 1

    def add_ub(self, cols: list[int], vals: list[float], rhs: float) -> None:
        self.ub_rows.append((cols, vals))
        self.ub_rhs.append(rhs)

    def add_eq(self, cols: list[int], vals: list[float], rhs: float) -> None:
        self.eq_rows.append((cols, vals))
        self.eq_rhs.append(rhs)

    @staticmethod
    def _triplets(rows: list[tuple[list[int], list[float]]]) -> Triplets:
        rr: list[int] = []
        cc: list[int] = []
        vv: list[float] = []
        for i, (cols, vals) in enumerate(rows):
            rr.extend([i] * len(cols))
            cc.extend(cols)
            vv.extend(vals)
        return Triplets(
            np.asarray(rr, dtype=np.int64),
            np.asarray(cc, dtype=np.int64),
            np.asarray(vv, dtype=float),
            len(rows),
        )

    def finish(self) -> tuple[LinearProgram, VariableIndex]:
        index = VariableIndex(self.cols)
        lp = LinearProgram(
            c=np.asarray(self.obj, dtype=float),
            a_ub=self._triplets(self.ub_rows),
            b_ub=np.asarray(self.ub_rhs, dtype=float),
            a_eq=self._triplets(self.eq_rows),
            b_eq=np.asarray(self.eq_rhs, dtype=float),
            lower=np.asarray(self.lb, dtype=float),
            upper=np.asarray(self.ub, dtype=float),
            column_meta=index,
        )
        return lp, index


def _capital_cost_gen(g: Generator, costs: CostAssumptions | None) -> float:
    if g.capital_cost is not None:
        return g.capital_cost
    if costs is not None and g.tech in costs.techs:
        return costs.annualised(g.tech)
    raise ModelError(f"extendable generator {g.id} has no capital cost")


def _capital_cost_link(l: Link, costs: CostAssumptions | None) -> float:
    if l.capital_cost is not None:
        return l.capital_cost
    if costs is not None and "transmission" in costs.techs:
        return costs.annualised("transmission")
    raise ModelError(f"extendable link {l.id} has no capital cost")


def _marginal_cost(g: Generator, costs: CostAssumptions | None) -> float:
    if g.marginal_cost is not None:
        return g.marginal_cost
    if costs is not None and g.tech in costs.techs:
        return costs.techs[g.tech].marginal_cost
    return 0.0


def _emission_rate(g: Generator, costs: CostAssumptions | None) -> float:
    if g.emission_rate is not None:
        return g.emission_rate
    if costs is not None and g.tech in costs.techs:
        return costs.techs[g.tech].emission_factor
    return 0.0


def _series(scenario: Scenario, table: Mapping[str, np.ndarray], key: str, what: str) -> np.ndarray:
    if key not in table:
        raise DataError(f"scenario {scenario.id} is missing {what} series '{key}'")
    s = np.asarray(table[key], dtype=float)
    if len(s) != scenario.n_steps:
        raise DataError(f"series '{key}' length {len(s)} != horizon {scenario.n_steps}")
    return s


def _build(
    network: Network,
    scenarios: Sequence[Scenario],
    *,
    co2_limit: float,
    costs: CostAssumptions | None,
    fixed: Mapping[str, float] | None = None,
    shed_cost: float | None = None,
    op_budget: float | None = None,
) -> tuple[LinearProgram, VariableIndex, np.ndarray, np.ndarray, np.ndarray, float]:
    network.validate()
    if not scenarios:
        raise ModelError("need at least one scenario")
    for sc in scenarios:
        if sc.n_steps == 0:
            raise ValueError(f"scenario {sc.id} has a zero-length horizon")
        sc.validate()

    b = _Builder()
    op_weight = 1.0 / len(scenarios)

    # shared investment columns
    inv_col: dict[str, int] = {}

    def add_investment(element: str, group: str, cost_of) -> None:
        if fixed is not None:
            if element not in fixed:
                raise ModelError(f"fixed capacities do not cover extendable element {element}")
            val = float(fixed[element])
            if val < 0:
                raise ValueError(f"negative fixed capacity for {element}")
            inv_col[element] = b.add_col(
                ColumnInfo(element, INVESTMENT, group), cost=0.0, lb=val, ub=val
            )
        else:
            inv_col[element] = b.add_col(ColumnInfo(element, INVESTMENT, group), cost=cost_of())

    for g in network.generators:
        if g.extendable:
            add_investment(g.id, g.tech, lambda g=g: _capital_cost_gen(g, costs))
    for l in network.links:
        if l.extendable:
            add_investment(l.id, "transmission", lambda l=l: _capital_cost_link(l, costs))
    for s in network.storage:
        add_investment(f"{s.id}.energy", s.tech, lambda s=s: float(s.energy_capital_cost))
        add_investment(f"{s.id}.power", s.tech, lambda s=s: float(s.power_capital_cost))

    op_cost: dict[int, float] = {}
    shed_energy: dict[int, float] = {}
    emission_coeff: dict[int, float] = {}
    load_energy = 0.0

    for sc in scenarios:
        n = sc.n_steps
        dh = sc.step_hours
        w = HOURS_PER_YEAR / (n * dh)  # snapshot weighting: one horizon represents a year
        pre = f"{sc.id}:" if len(scenarios) > 1 else ""

        balance: dict[tuple[str, int], tuple[list[int], list[float]]] = {
            (bus, t): ([], []) for bus in network.buses for t in range(n)
        }

        def on_balance(bus: str, t: int, col: int, val: float) -> None:
            cols, vals = balance[(bus, t)]
            cols.append(col)
            vals.append(val)

        co2_cols: list[int] = []
        co2_vals: list[float] = []
        budget_cols: list[int] = []
        budget_vals: list[float] = []

        for g in network.generators:
            cf = (
                _series(sc, sc.capacity_factors, g.cf_series, "capacity-factor")
                if g.cf_series
                else np.ones(n)
            )
            mc = _marginal_cost(g, costs)
            em = _emission_rate(g, costs)
            p_cols = []
            for t in range(n):
                ub = np.inf if g.extendable else cf[t] * g.existing_mw
                col = b.add_col(
                    ColumnInfo(f"{pre}{g.id}", OPERATIONAL, g.tech, t),
                    cost=op_weight * mc * w * dh,
                    ub=ub,
                )
                p_cols.append(col)
                on_balance(g.bus, t, col, 1.0)
                if mc:
                    op_cost[col] = op_cost.get(col, 0.0) + mc * w * dh
                    budget_cols.append(col)
                    budget_vals.append(mc * w * dh)
                if em:
                    emission_coeff[col] = em * w * dh
                    co2_cols.append(col)
                    co2_vals.append(em * w * dh)
                if g.extendable:
                    b.add_ub([col, inv_col[g.id]], [1.0, -cf[t]], cf[t] * g.existing_mw)
            if g.inflow_series:
                inflow = _series(sc, sc.inflows, g.inflow_series, "inflow")
                soc_cols = [
                    b.add_col(
                        ColumnInfo(f"{pre}{g.id}.soc", OPERATIONAL, g.tech, t),
                        ub=np.inf if g.reservoir_mwh is None else g.reservoir_mwh,
                    )
                    for t in range(n)
                ]
                spill_cols = [
                    b.add_col(ColumnInfo(f"{pre}{g.id}.spill", OPERATIONAL, g.tech, t))
                    for t in range(n)
                ]
                for t in range(n):
                    # soc_t - soc_{t-1} + dh * p_t + spill_t = inflow_t, cyclic closure
                    b.add_eq(
                        [soc_cols[t], soc_cols[t - 1], p_cols[t], spill_cols[t]],
                        [1.0, -1.0, dh, 1.0],
                        float(inflow[t]),
                    )

        for l in network.links:
            for t in range(n):
                if l.extendable:
                    col = b.add_col(
                        ColumnInfo(f"{pre}{l.id}", OPERATIONAL, "transmission", t),
                        lb=-np.inf,
                        ub=np.inf,
                    )
                    b.add_ub([col, inv_col[l.id]], [1.0, -1.0], l.existing_mw)
                    b.add_ub([col, inv_col[l.id]], [-1.0, -1.0], l.existing_mw)
                else:
                    col = b.add_col(
                        ColumnInfo(f"{pre}{l.id}", OPERATIONAL, "transmission", t),
                        lb=-l.existing_mw,
                        ub=l.existing_mw,
                    )
                on_balance(l.from_bus, t, col, -1.0)
                on_balance(l.to_bus, t, col, 1.0)

        for s in network.storage:
            eff = float(np.sqrt(s.round_trip_efficiency))
            ch_cols, dis_cols, soc_cols = [], [], []
            for t in range(n):
                ch = b.add_col(ColumnInfo(f"{pre}{s.id}.charge", OPERATIONAL, s.tech, t))
                dis = b.add_col(
                    ColumnInfo(f"{pre}{s.id}.discharge", OPERATIONAL, s.tech, t),
                    cost=op_weight * s.marginal_cost * w * dh,
                )
                soc = b.add_col(ColumnInfo(f"{pre}{s.id}.soc", OPERATIONAL, s.tech, t))
                ch_cols.append(ch)
                dis_cols.append(dis)
                soc_cols.append(soc)
                on_balance(s.bus, t, ch, -1.0)
                on_balance(s.bus, t, dis, 1.0)
                b.add_ub([ch, inv_col[f"{s.id}.power"]], [1.0, -1.0], 0.0)
                b.add_ub([dis, inv_col[f"{s.id}.power"]], [1.0, -1.0], 0.0)
                b.add_ub([soc, inv_col[f"{s.id}.energy"]], [1.0, -1.0], 0.0)
                if s.marginal_cost:
                    op_cost[dis] = s.marginal_cost * w * dh
                    budget_cols.append(dis)
                    budget_vals.append(s.marginal_cost * w * dh)
            for t in range(n):
                # soc_t = (1 - loss) soc_{t-1} + eff*dh*ch_t - dh/eff*dis_t, cyclic
                b.add_eq(
                    [soc_cols[t], soc_cols[t - 1], ch_cols[t], dis_cols[t]],
                    [1.0, -(1.0 - s.standing_loss), -eff * dh, dh / eff],
                    0.0,
                )

        for bus in network.buses:
            load = _series(sc, sc.loads, bus, "load")
            load_energy += op_weight * w * dh * float(load.sum())
            for t in range(n):
                if shed_cost is not None:
                    col = b.add_col(
                        ColumnInfo(f"{pre}{bus}.shed", OPERATIONAL, "shed", t),
                        cost=op_weight * shed_cost * w * dh,
                        ub=float(load[t]),
                    )
                    on_balance(bus, t, col, 1.0)
                    shed_energy[col] = w * dh
                cols, vals = balance[(bus, t)]
                b.add_eq(cols, vals, float(load[t]))

        if np.isfinite(co2_limit) and co2_cols:
            b.add_ub(co2_cols, co2_vals, co2_limit)
        if op_budget is not None and np.isfinite(op_budget):
            b.add_ub(budget_cols, budget_vals, float(op_budget))

    lp, index = b.finish()
    n_cols = lp.n_cols

    def to_vec(d: dict[int, float]) -> np.ndarray:
        v = np.zeros(n_cols)
        for col, val in d.items():
            v[col] = val
        return v

    return lp, index, to_vec(op_cost), to_vec(shed_energy), to_vec(emission_coeff), load_energy


def build_expansion_lp(
    network: Network,
    scenario: Scenario,
    co2_fraction: float,
    costs: CostAssumptions | None = None,
) -> ExpansionProblem:
    """Single-scenario capacity expansion; investments and dispatch co-optimised."""
    co2_limit = co2_fraction * network.reference_emissions
    lp, index, op_cost, shed, em, load = _build(
        network, [scenario], co2_limit=co2_limit, costs=costs
    )
    return ExpansionProblem(lp, index, co2_limit, scenario.id, op_cost, shed, em, load)


def build_joint_expansion_lp(
    network: Network,
    scenarios: Sequence[Scenario],
    co2_fraction: float,
    costs: CostAssumptions | None = None,
) -> ExpansionProblem:
    """Multi-scenario expansion: shared investments, per-scenario operations.

    Operational costs are averaged over scenarios so the objective stays
    comparable with single-scenario problems (EUR/a).
    """
    co2_limit = co2_fraction * network.reference_emissions
    lp, index, op_cost, shed, em, load = _build(
        network, list(scenarios), co2_limit=co2_limit, costs=costs
    )
    sid = "+".join(sc.id for sc in scenarios)
    return ExpansionProblem(lp, index, co2_limit, sid, op_cost, shed, em, load)


def build_dispatch_lp(
    network: Network,
    fixed_capacities: Mapping[str, float] | InvestmentVector,
    scenario: Scenario,
    co2_limit: float,
    op_budget: float | None = None,
    shed_cost: float = DEFAULT_SHED_COST,
    costs: CostAssumptions | None = None,
) -> ExpansionProblem:
    """Operations-only problem: investments fixed as bounds, load shedding allowed.

    The optional operational budget row covers marginal-cost spending only;
    the shedding penalty is deliberately excluded from it.
    """
    if isinstance(fixed_capacities, InvestmentVector):
        fixed_capacities = fixed_capacities.as_mapping()
    lp, index, op_cost, shed, em, load = _build(
        network,
        [scenario],
        co2_limit=co2_limit,
        costs=costs,
        fixed=fixed_capacities,
        shed_cost=shed_cost,
        op_budget=op_budget,
    )
    return ExpansionProblem(lp, index, co2_limit, scenario.id, op_cost, shed, em, load)
