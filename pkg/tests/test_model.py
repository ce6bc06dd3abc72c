"""Expansion/dispatch LP builders: examples, errors, and model invariants."""

import numpy as np
import pytest

from conftest import make_scenario
from nearopt import lp as lpmod
from nearopt.model import (
    DataError,
    Generator,
    Link,
    ModelError,
    Network,
    Storage,
    annuity,
    build_dispatch_lp,
    build_expansion_lp,
    build_joint_expansion_lp,
    build_reduction_map,
    investment_vector,
)


class TestAnnuity:
    def test_one_year_zero_rate(self):
        assert annuity(1000.0, 1, 0.0) == pytest.approx(1000.0)

    def test_straight_line_limit(self):
        assert annuity(1000.0, 2, 0.0) == pytest.approx(500.0)

    def test_closed_form(self):
        # independent closed-form evaluation, frozen
        r, n = 0.07, 20
        expected = 1000.0 * r / (1.0 - (1.0 + r) ** (-n))
        assert expected == pytest.approx(94.39292574325567, abs=1e-10)
        assert annuity(1000.0, 20, 0.07) == pytest.approx(expected, rel=1e-12)

    def test_invalid_lifetime(self):
        with pytest.raises(ValueError):
            annuity(1000.0, 0, 0.05)
        with pytest.raises(ValueError):
            annuity(1000.0, -3, 0.05)


class TestExpansionExamples:
    def test_flat_load_full_availability_needs_exactly_peak(self, single_bus):
        net, sc = single_bus
        prob = build_expansion_lp(net, sc, 1.0)
        sol = lpmod.solve(prob.lp)
        assert sol.is_optimal
        iv = investment_vector(prob, sol.x)
        assert iv.as_mapping()["g"] == pytest.approx(1.0, abs=1e-7)

    def test_link_capacity_forced_to_peak_remote_load(self, two_bus):
        net, sc = two_bus
        prob = build_expansion_lp(net, sc, 1.0)
        sol = lpmod.solve(prob.lp)
        iv = investment_vector(prob, sol.x)
        assert iv.as_mapping()["AB"] == pytest.approx(3.0, abs=1e-7)  # peak load at B

    def test_zero_emission_cap_shuts_gas_off(self, gas_wind):
        net, sc = gas_wind
        prob = build_expansion_lp(net, sc, 0.0)
        sol = lpmod.solve(prob.lp)
        assert sol.is_optimal
        gas_dispatch = sum(
            sol.x[j]
            for j, col in enumerate(prob.index.columns)
            if col.element == "gas" and col.role == lpmod.OPERATIONAL
        )
        assert gas_dispatch == pytest.approx(0.0, abs=1e-7)

    def test_missing_series_is_a_data_error(self, gas_wind):
        net, _ = gas_wind
        sc = make_scenario(loads={"B1": np.full(8, 2.0)})  # wind cf missing
        with pytest.raises(DataError):
            build_expansion_lp(net, sc, 1.0)

    def test_zero_length_horizon_rejected(self, single_bus):
        net, _ = single_bus
        sc = make_scenario(loads={"B1": np.zeros(0)})
        with pytest.raises(ValueError):
            build_expansion_lp(net, sc, 1.0)


class TestDispatchExamples:
    def test_expansion_optimum_dispatches_without_shedding(self, gas_wind):
        net, sc = gas_wind
        prob = build_expansion_lp(net, sc, 0.1)
        sol = lpmod.solve(prob.lp)
        design = investment_vector(prob, sol.x)
        disp = build_dispatch_lp(net, design, sc, co2_limit=prob.co2_limit)
        dsol = lpmod.solve(disp.lp)
        assert dsol.is_optimal
        assert disp.shed_mwh(dsol.x) == pytest.approx(0.0, abs=1e-6)

    def test_empty_design_sheds_everything_at_stated_penalty(self):
        # one year in 365 daily steps so annualised == horizon totals exactly
        net = Network(
            buses=("B1",),
            generators=(Generator("g", "B1", "gen", extendable=True, capital_cost=10.0),),
            links=(),
            storage=(),
            reference_emissions=1.0,
        )
        load = np.full(365, 2.0)
        sc = make_scenario(step_hours=24.0, loads={"B1": load})
        disp = build_dispatch_lp(net, {"g": 0.0}, sc, co2_limit=np.inf, shed_cost=7300.0)
        sol = lpmod.solve(disp.lp)
        total_load_mwh = float(load.sum() * 24.0)
        assert disp.shed_mwh(sol.x) == pytest.approx(total_load_mwh, rel=1e-9)
        assert sol.objective == pytest.approx(7300.0 * total_load_mwh, rel=1e-9)

    def test_zero_budget_fine_with_free_generation(self, single_bus):
        net, sc = single_bus
        net = Network(
            net.buses,
            (Generator("g", "B1", "gen", existing_mw=5.0, marginal_cost=0.0),),
            (),
            (),
            net.reference_emissions,
        )
        disp = build_dispatch_lp(net, {}, sc, co2_limit=np.inf, op_budget=0.0)
        sol = lpmod.solve(disp.lp)
        assert sol.is_optimal
        assert disp.shed_mwh(sol.x) == pytest.approx(0.0, abs=1e-9)

    def test_negative_fixed_capacity_rejected(self, single_bus):
        net, sc = single_bus
        with pytest.raises(ValueError):
            build_dispatch_lp(net, {"g": -1.0}, sc, co2_limit=np.inf)

    def test_missing_fixed_capacity_rejected(self, single_bus):
        net, sc = single_bus
        with pytest.raises(ModelError):
            build_dispatch_lp(net, {}, sc, co2_limit=np.inf)


def storage_hydro_network():
    net = Network(
        buses=("B1",),
        generators=(
            Generator("gas", "B1", "gas", extendable=True, capital_cost=40.0,
                      marginal_cost=50.0, emission_rate=0.3),
            Generator("wind", "B1", "wind", extendable=True, capital_cost=70.0,
                      marginal_cost=0.0, cf_series="wind"),
            Generator("hydro", "B1", "hydro", existing_mw=3.0, marginal_cost=0.5,
                      inflow_series="hydro", reservoir_mwh=60.0),
        ),
        links=(),
        storage=(
            Storage("batt", "B1", energy_capital_cost=8.0, power_capital_cost=6.0,
                    round_trip_efficiency=0.81, standing_loss=0.001, tech="battery"),
        ),
        reference_emissions=10_000.0,
    )
    rng = np.random.default_rng(3)
    n = 16
    sc = make_scenario(
        loads={"B1": 4.0 + rng.uniform(0, 2, n)},
        cf={"wind": np.clip(0.5 + 0.3 * np.sin(np.arange(n) / 2.0), 0.2, 0.9)},
        inflows={"hydro": rng.uniform(0, 9, n)},
    )
    return net, sc


class TestStorageAndHydro:
    def test_storage_state_is_cyclic_and_bounded(self):
        net, sc = storage_hydro_network()
        prob = build_expansion_lp(net, sc, 1.0)
        sol = lpmod.solve(prob.lp)
        assert sol.is_optimal
        cols = {
            (c.element, c.step): j for j, c in enumerate(prob.index.columns) if c.step is not None
        }
        e_cap = sol.x[[j for j, c in enumerate(prob.index.columns) if c.element == "batt.energy"][0]]
        socs = np.array([sol.x[cols[("batt.soc", t)]] for t in range(sc.n_steps)])
        assert np.all(socs <= e_cap + 1e-6)
        # cyclic closure: recursion at t=0 references the final state
        ch0 = sol.x[cols[("batt.charge", 0)]]
        dis0 = sol.x[cols[("batt.discharge", 0)]]
        eff = np.sqrt(0.81)
        lhs = socs[0]
        rhs = (1 - 0.001) * socs[-1] + eff * 3.0 * ch0 - 3.0 * dis0 / eff
        assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_hydro_dispatch_limited_by_inflow_energy(self):
        net, sc = storage_hydro_network()
        prob = build_expansion_lp(net, sc, 1.0)
        sol = lpmod.solve(prob.lp)
        hydro_mwh = 3.0 * sum(
            sol.x[j]
            for j, c in enumerate(prob.index.columns)
            if c.element == "hydro" and c.step is not None
        )
        assert hydro_mwh <= float(sc.inflows["hydro"].sum()) + 1e-6


class TestInvariants:
    def test_duplicate_build_is_bit_identical(self, gas_wind):
        net, sc = gas_wind
        a = build_expansion_lp(net, sc, 0.5)
        b = build_expansion_lp(net, sc, 0.5)
        assert np.array_equal(a.lp.c, b.lp.c)
        for x, y in ((a.lp.a_ub, b.lp.a_ub), (a.lp.a_eq, b.lp.a_eq)):
            assert np.array_equal(x.rows, y.rows)
            assert np.array_equal(x.cols, y.cols)
            assert np.array_equal(x.vals, y.vals)
        assert np.array_equal(a.lp.b_ub, b.lp.b_ub)
        assert np.array_equal(a.lp.b_eq, b.lp.b_eq)

    def test_energy_conservation_at_every_bus_and_step(self):
        net, sc = storage_hydro_network()
        prob = build_expansion_lp(net, sc, 1.0)
        sol = lpmod.solve(prob.lp)
        bus_of = {g.id: g.bus for g in net.generators}
        bus_of.update({s.id: s.bus for s in net.storage})
        for t in range(sc.n_steps):
            balance = -float(sc.loads["B1"][t])
            for j, c in enumerate(prob.index.columns):
                if c.step != t:
                    continue
                base = c.element.split(".")[0]
                if base not in bus_of:
                    continue
                if c.element.endswith(".charge"):
                    balance -= sol.x[j]
                elif c.element.endswith(".discharge"):
                    balance += sol.x[j]
                elif "." not in c.element:
                    balance += sol.x[j]
            assert abs(balance) < 1e-6 * max(1.0, float(sc.loads["B1"][t]))

    def test_objective_scales_linearly_with_system_size(self):
        net, sc = storage_hydro_network()
        lam = 3.5
        scaled_net = Network(
            net.buses,
            tuple(
                Generator(
                    g.id, g.bus, g.tech, g.existing_mw * lam, g.extendable, g.capital_cost,
                    g.marginal_cost, g.emission_rate, g.cf_series, g.inflow_series,
                    g.reservoir_mwh * lam if g.reservoir_mwh else None,
                )
                for g in net.generators
            ),
            net.links,
            net.storage,
            net.reference_emissions * lam,
        )
        scaled_sc = make_scenario(
            loads={"B1": sc.loads["B1"] * lam},
            cf={"wind": sc.capacity_factors["wind"]},
            inflows={"hydro": sc.inflows["hydro"] * lam},
        )
        base_obj = lpmod.solve(build_expansion_lp(net, sc, 0.02).lp).objective
        scaled_obj = lpmod.solve(build_expansion_lp(scaled_net, scaled_sc, 0.02).lp).objective
        assert scaled_obj == pytest.approx(lam * base_obj, rel=1e-6)

    def test_relaxing_emission_cap_never_costs_more(self):
        net, sc = storage_hydro_network()
        objs = []
        for frac in (0.002, 0.005, 0.02, 0.1):
            sol = lpmod.solve(build_expansion_lp(net, sc, frac).lp)
            assert sol.is_optimal
            objs.append(sol.objective)
        assert all(b <= a + 1e-6 * abs(a) for a, b in zip(objs, objs[1:]))


class TestJoint:
    def test_joint_shares_investments_across_scenarios(self, gas_wind):
        net, sc = gas_wind
        sc2 = make_scenario(
            sid="s2", loads={"B1": np.full(8, 3.0)}, cf={"wind": np.full(8, 0.5)}
        )
        prob = build_joint_expansion_lp(net, [sc, sc2], 0.5)
        inv_cols, elements = prob.index.investment_columns()
        assert elements == ("gas", "wind")
        sol = lpmod.solve(prob.lp)
        assert sol.is_optimal
        # joint capacity must cover the harder of the two scenarios
        single = lpmod.solve(build_expansion_lp(net, sc2, 0.5).lp)
        assert sol.objective >= single.objective - 1e-6 * abs(single.objective)

    def test_joint_objective_averages_operational_cost(self, gas_wind):
        net, sc = gas_wind
        prob1 = build_joint_expansion_lp(net, [sc, sc], 0.5)
        prob2 = build_expansion_lp(net, sc, 0.5)
        o1 = lpmod.solve(prob1.lp).objective
        o2 = lpmod.solve(prob2.lp).objective
        assert o1 == pytest.approx(o2, rel=1e-7)  # duplicated scenario changes nothing


class TestReductionMapBuilder:
    def test_capital_cost_weights(self, gas_wind):
        net, sc = gas_wind
        prob = build_expansion_lp(net, sc, 0.5)
        rmap = build_reduction_map(prob, {"gas": ["gas"], "wind": ["wind"]})
        assert rmap.labels == ("gas", "wind")
        assert rmap.weights[0][0] == pytest.approx(40.0)
        assert rmap.weights[1][0] == pytest.approx(90.0)

    def test_unity_weights(self, gas_wind):
        net, sc = gas_wind
        prob = build_expansion_lp(net, sc, 0.5)
        rmap = build_reduction_map(prob, {"gas": ["gas"], "wind": ["wind"]}, "unity")
        assert all(np.all(w == 1.0) for w in rmap.weights)

    def test_unmatched_group_rejected(self, gas_wind):
        net, sc = gas_wind
        prob = build_expansion_lp(net, sc, 0.5)
        with pytest.raises(ModelError):
            build_reduction_map(prob, {"gas": ["gas"], "nuclear": ["nuclear"]})


class TestNetworkValidation:
    def test_self_loop_link_rejected(self):
        with pytest.raises(ModelError):
            Network(
                ("A",), (), (Link("AA", "A", "A"),), (), 1.0
            ).validate()

    def test_unknown_bus_rejected(self):
        with pytest.raises(ModelError):
            Network(("A",), (Generator("g", "Z", "t"),), (), (), 1.0).validate()

    def test_bad_efficiency_rejected(self):
        with pytest.raises(ModelError):
            Network(
                ("A",), (), (),
                (Storage("s", "A", 1.0, 1.0, round_trip_efficiency=1.5),), 1.0
            ).validate()
