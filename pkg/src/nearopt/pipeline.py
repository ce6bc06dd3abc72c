"""The batch workflow: generate, optimize, explore, intersect, allocate,
validate, report.

Every stage writes its artifacts before the next stage starts and loads them
back when they already exist, so runs are resumable and each stage can be
invoked on its own. Scenario-level work (expansion solves, space exploration,
dispatch validation) fans out over a worker pool; all artifact writes happen
in the coordinating thread. Reports carry no timestamps, so a rerun with the
same seed is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import explore as explore_mod
from . import geometry, lp as lpmod, robust, validate as validate_mod
from .config import PipelineConfig, load_costs, load_network
from .model import (
    ExpansionProblem,
    InvestmentVector,
    build_expansion_lp,
    build_joint_expansion_lp,
    build_reduction_map,
    investment_vector,
)
from .scenario import Scenario, generate_scenarios, read_scenario, write_scenario

logger = logging.getLogger(__name__)


class PipelineError(Exception):
    pass


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _read_json(path: Path):
    with open(path) as fh:
        return json.load(fh)


def _pool_map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


class Run:
    """Paths and cached state of one pipeline run."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.network, self.costs = load_network(cfg.network_path)
        if cfg.costs_path is not None:
            self.costs = load_costs(cfg.costs_path)
        self._problems: dict[str, ExpansionProblem] | None = None

    # -- scenarios ---------------------------------------------------------

    def _base_scenario(self) -> Scenario:
        if self.cfg.base_scenario is not None:
            return read_scenario(self.cfg.base_scenario)
        from .demo import demo_base_scenario

        return demo_base_scenario()

    def stage_scenarios(self) -> list[Scenario]:
        base = self._base_scenario()
        ids = [f"{base.id}-{i:02d}" for i in range(self.cfg.n_scenarios)]
        missing = [sid for sid in ids if not (self.cfg.scenario_dir / sid / "meta.json").exists()]
        if missing:
            generated = generate_scenarios(
                base, self.cfg.n_scenarios, self.cfg.seed, self.cfg.perturbation
            )
            for sc in generated:
                if sc.id in missing:
                    write_scenario(sc, self.cfg.scenario_dir / sc.id)
        # always read back from disk so resumed runs see identical data
        return [read_scenario(self.cfg.scenario_dir / sid) for sid in ids]

    # -- per-scenario expansion problems (rebuilt, not persisted) ----------

    def problems(self, scenarios: list[Scenario]) -> dict[str, ExpansionProblem]:
        if self._problems is None:
            self._problems = {
                sc.id: build_expansion_lp(self.network, sc, self.cfg.co2_fraction, self.costs)
                for sc in scenarios
            }
        return self._problems

    def reduction(self, problems: dict[str, ExpansionProblem]) -> lpmod.ReductionMap:
        return build_reduction_map(
            next(iter(problems.values())), self.cfg.reduction_groups, self.cfg.weight_source
        )

    # -- optimize ----------------------------------------------------------

    def stage_optimize(self, scenarios: list[Scenario]) -> dict:
        path = self.out / "optimize" / "optima.json"
        if path.exists():
            return _read_json(path)
        problems = self.problems(scenarios)

        def solve_one(sid: str) -> tuple[str, dict]:
            prob = problems[sid]
            sol = lpmod.solve(prob.lp)
            if not sol.is_optimal:
                raise PipelineError(f"expansion for scenario {sid} ended {sol.status}")
            iv = investment_vector(prob, sol.x)
            return sid, {
                "c_opt": sol.objective,
                "op_cost": prob.operational_cost(sol.x),
                "investments": iv.as_mapping(),
                "investment_costs": dict(zip(iv.elements, iv.costs.tolist())),
            }

        results = dict(_pool_map(solve_one, list(problems), self.cfg.workers))
        _write_json(path, results)
        return results

    # -- explore -----------------------------------------------------------

    def stage_explore(self, scenarios: list[Scenario], optima: dict) -> dict[str, geometry.Polytope]:
        c_opts = {sid: rec["c_opt"] for sid, rec in optima.items()}
        _, bound = robust.uniform_bound(c_opts, self.cfg.eps)
        problems = self.problems(scenarios)
        rmap = self.reduction(problems)
        exp_dir = self.out / "explore"
        sids = [sc.id for sc in scenarios]

        def explore_one(item: tuple[int, str]) -> tuple[str, geometry.Polytope | None]:
            i, sid = item
            ppath = exp_dir / f"{sid}.polytope.json"
            if ppath.exists():
                return sid, geometry.Polytope.read_json(ppath)
            slacked = lpmod.apply_cost_slack(problems[sid].lp, bound)
            cfg = explore_mod.ExploreConfig(
                method=self.cfg.explore.method,
                iterations=self.cfg.explore.iterations,
                theta_deg=self.cfg.explore.theta_deg,
                theta_min_deg=self.cfg.explore.theta_min_deg,
                decay=self.cfg.explore.decay,
                convergence_delta_pct=self.cfg.explore.convergence_delta_pct,
                convergence_window=self.cfg.explore.convergence_window,
                parallel=self.cfg.explore.parallel,
                seed=self.cfg.seed + i,
            )
            state = explore_mod.approximate_space(slacked, rmap, cfg)
            if not state.is_full_dimensional:
                return sid, None
            poly = geometry.convex_hull(np.asarray(state.points), labels=rmap.labels)
            exp_dir.mkdir(parents=True, exist_ok=True)
            state.write_trace(exp_dir / f"{sid}.trace.csv")
            poly.write_json(ppath)
            return sid, poly

        results = dict(_pool_map(explore_one, list(enumerate(sids)), self.cfg.workers))
        flat = [sid for sid, poly in results.items() if poly is None]
        if flat:
            raise robust.EmptyIntersectionError(
                f"near-optimal space of scenario(s) {flat} has no interior at "
                f"eps={self.cfg.eps}; increase eps"
            )
        return {sid: results[sid] for sid in sids}

    # -- intersect ---------------------------------------------------------

    def stage_intersect(self, spaces: dict[str, geometry.Polytope], optima: dict) -> dict:
        ipath = self.out / "intersect" / "intersection.json"
        cpath = self.out / "intersect" / "centre.json"
        if ipath.exists() and cpath.exists():
            return _read_json(cpath)
        c_opts = {sid: rec["c_opt"] for sid, rec in optima.items()}
        c_star, bound = robust.uniform_bound(c_opts, self.cfg.eps)
        inter, ratios = robust.intersect_scenarios(spaces)
        centre, radius = robust.robust_centre(inter)
        max_radius = c_star * self.cfg.eps / 2.0
        vols = {sid: geometry.volume(p) for sid, p in spaces.items()}
        vmax, vmin = max(vols.values()), min(vols.values())
        spread = vmax / vmin if vmin > 0 else float("inf")
        doc = {
            "c_opts": c_opts,
            "c_star": c_star,
            "cost_bound": bound,
            "eps": self.cfg.eps,
            "i_star": robust.most_expensive_scenario(c_opts),
            "centre": centre.tolist(),
            "radius": radius,
            "max_possible_radius": max_radius,
            "radius_ratio": radius / max_radius if max_radius > 0 else float("inf"),
            "volume_ratios": ratios,
            "scenario_volumes": vols,
            "volume_spread": spread,
            "per_dimension_scale": spread ** (1.0 / inter.k),
            "intersection_volume": geometry.volume(inter),
            "dimension_labels": list(inter.labels or []),
        }
        ipath.parent.mkdir(parents=True, exist_ok=True)
        inter.write_json(ipath)
        _write_json(cpath, doc)
        return doc

    def intersection(self) -> geometry.Polytope:
        return geometry.Polytope.read_json(self.out / "intersect" / "intersection.json")

    # -- allocate ----------------------------------------------------------

    def stage_allocate(self, scenarios: list[Scenario], optima: dict, centre_doc: dict) -> dict[str, InvestmentVector]:
        modes = list(self.cfg.allocations)
        alloc_dir = self.out / "allocate"
        out: dict[str, InvestmentVector] = {}
        missing = [m for m in modes if not (alloc_dir / f"{m}.json").exists()]
        if not missing:
            for m in modes:
                doc = _read_json(alloc_dir / f"{m}.json")
                out[m] = InvestmentVector(
                    tuple(doc["elements"]), np.asarray(doc["values"]), np.asarray(doc["costs"])
                )
            return out

        problems = self.problems(scenarios)
        rmap = self.reduction(problems)
        bound = centre_doc["cost_bound"]
        centre = np.asarray(centre_doc["centre"])
        i_star = centre_doc["i_star"]
        slacked = {sid: lpmod.apply_cost_slack(p.lp, bound) for sid, p in problems.items()}

        joint = None
        if "exact" in modes:
            joint_prob = build_joint_expansion_lp(
                self.network, scenarios, self.cfg.co2_fraction, self.costs
            )
            joint = joint_prob.lp
        for mode in modes:
            if mode == "baseline":
                continue
            out[mode] = robust.allocate(
                centre, mode, slacked, rmap, joint=joint, i_star=i_star
            )
        if "baseline" in modes:
            if "exact" not in out:
                raise PipelineError("baseline allocation needs the exact design's capex target")
            rec = optima[i_star]
            iv_star = InvestmentVector(
                tuple(sorted(rec["investments"])),
                np.asarray([rec["investments"][e] for e in sorted(rec["investments"])]),
                np.asarray([rec["investment_costs"][e] for e in sorted(rec["investments"])]),
            )
            out["baseline"] = robust.baseline_design(iv_star, out["exact"].capex())

        alloc_dir.mkdir(parents=True, exist_ok=True)
        for mode, iv in out.items():
            _write_json(
                alloc_dir / f"{mode}.json",
                {
                    "elements": list(iv.elements),
                    "values": iv.values.tolist(),
                    "costs": iv.costs.tolist(),
                    "capex": iv.capex(),
                },
            )
            robust.write_capacity_csv(iv, alloc_dir / f"{mode}.capacities.csv")
        return out

    # -- validate ----------------------------------------------------------

    def stage_validate(
        self, scenarios: list[Scenario], allocations: dict[str, InvestmentVector], centre_doc: dict
    ) -> list[validate_mod.ValidationReport]:
        val_dir = self.out / "validate"
        co2_limit = self.cfg.co2_fraction * self.network.reference_emissions
        if all((val_dir / f"{m}.json").exists() for m in allocations) and (
            val_dir / "summary.csv"
        ).exists():
            reports = []
            for m in allocations:
                doc = _read_json(val_dir / f"{m}.json")
                rows = tuple(
                    validate_mod.ScenarioDispatch(
                        r["scenario"], r["status"], r["shed_mwh"], r["technical_shed_mwh"],
                        r["shed_cost"], r["op_cost"], r["emissions"], r["load_mwh"],
                    )
                    for r in doc["scenarios"]
                )
                reports.append(
                    validate_mod.ValidationReport(
                        doc["allocation"], doc["op_budget"], doc["shed_cost_rate"],
                        doc["co2_limit"], rows,
                    )
                )
            return reports

        if "exact" not in allocations:
            raise PipelineError("validation needs the exact allocation to anchor the budget")
        # operational budget: what the exact design needs in its worst scenario
        probe = validate_mod.stress_test(
            allocations["exact"], self.network, scenarios, op_budget=float("inf"),
            shed_cost=self.cfg.shed_cost, co2_limit=co2_limit, allocation="probe",
            workers=self.cfg.workers,
        )
        budget = max(r.op_cost for r in probe.rows)

        reports = []
        for mode, iv in allocations.items():
            rep = validate_mod.stress_test(
                iv, self.network, scenarios, op_budget=budget, shed_cost=self.cfg.shed_cost,
                co2_limit=co2_limit, allocation=mode, workers=self.cfg.workers,
            )
            reports.append(rep)
        val_dir.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            rep.write_json(val_dir / f"{rep.allocation}.json")
        validate_mod.write_summary_csv(validate_mod.summarize(reports), val_dir / "summary.csv")
        return reports

    # -- report ------------------------------------------------------------

    def stage_report(self, spaces: dict[str, geometry.Polytope]) -> dict:
        rep_dir = self.out / "report"
        rpath = rep_dir / "report.json"
        centre_doc = _read_json(self.out / "intersect" / "centre.json")
        inter = self.intersection()
        rep_dir.mkdir(parents=True, exist_ok=True)

        # pair-plot projection data for every dimension pair, per space
        import csv as csvmod

        with open(rep_dir / "projections.csv", "w", newline="") as fh:
            w = csvmod.writer(fh)
            w.writerow(["space", "dim_i", "dim_j", "vertex", "x", "y"])
            named = dict(spaces)
            named["intersection"] = inter
            labels = inter.labels or tuple(f"dim{i}" for i in range(inter.k))
            for name in sorted(named):
                poly = named[name]
                for i in range(poly.k):
                    for j in range(i + 1, poly.k):
                        proj = geometry.project_pair(poly, (i, j))
                        for v_idx, v in enumerate(proj.vertices):
                            w.writerow(
                                [name, labels[i], labels[j], v_idx, f"{v[0]:.17g}", f"{v[1]:.17g}"]
                            )

        summary_rows = []
        val_dir = self.out / "validate"
        if (val_dir / "summary.csv").exists():
            with open(val_dir / "summary.csv", newline="") as fh:
                summary_rows = list(csvmod.DictReader(fh))
        alloc_dir = self.out / "allocate"
        allocations = {}
        for p in sorted(alloc_dir.glob("*.json")) if alloc_dir.exists() else []:
            doc = _read_json(p)
            allocations[p.stem] = {"capex": doc["capex"]}
        report = {
            "eps": centre_doc["eps"],
            "c_star": centre_doc["c_star"],
            "cost_bound": centre_doc["cost_bound"],
            "i_star": centre_doc["i_star"],
            "centre": centre_doc["centre"],
            "radius": centre_doc["radius"],
            "radius_ratio": centre_doc["radius_ratio"],
            "volume_ratios": centre_doc["volume_ratios"],
            "volume_spread": centre_doc["volume_spread"],
            "per_dimension_scale": centre_doc["per_dimension_scale"],
            "dimension_labels": centre_doc["dimension_labels"],
            "allocations": allocations,
            "validation": summary_rows,
        }
        _write_json(rpath, report)
        self.write_manifest()
        return report

    # -- manifest ----------------------------------------------------------

    def write_manifest(self) -> None:
        entries = {}
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                entries[str(p.relative_to(self.out))] = hashlib.sha256(p.read_bytes()).hexdigest()
        _write_json(self.out / "manifest.json", {"artifacts": entries})


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute every stage in order; artifacts make the run resumable."""
    run = Run(cfg)
    scenarios = run.stage_scenarios()
    optima = run.stage_optimize(scenarios)
    spaces = run.stage_explore(scenarios, optima)
    centre_doc = run.stage_intersect(spaces, optima)
    allocations = run.stage_allocate(scenarios, optima, centre_doc)
    run.stage_validate(scenarios, allocations, centre_doc)
    return run.stage_report(spaces)
