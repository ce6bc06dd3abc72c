"""Cross-scenario logic: uniform cost bound, intersection of reduced spaces,
the robust centre, and the allocations that map it back to a full design.

The uniform bound anchors every scenario's near-optimal space to the same
absolute cost, (1+eps) times the most expensive scenario's optimum. The
Chebyshev centre of the intersected spaces is the candidate robust point;
allocations realise it as per-element capacities:

  exact         joint LP over all scenarios, shared investments
  conservative  single LP for the most expensive scenario
  mean          per-scenario LPs, averaged investment vectors
  baseline      the most expensive scenario's optimum, scaled to a capex target
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import geometry, lp as lpmod
from .model import InvestmentVector

EXACT = "exact"
CONSERVATIVE = "conservative"
MEAN = "mean"
BASELINE = "baseline"


class RobustError(Exception):
    pass


class EmptyIntersectionError(RobustError):
    """The intersected near-optimal spaces have no interior; raise eps."""


class AllocationInfeasibleError(RobustError):
    def __init__(self, mode: str, scenario: str):
        super().__init__(f"allocation '{mode}' infeasible for scenario '{scenario}'")
        self.mode = mode
        self.scenario = scenario


def uniform_bound(c_opts: Mapping[str, float], eps: float) -> tuple[float, float]:
    """(c*, (1+eps) c*) where c* is the highest per-scenario optimal cost."""
    if not c_opts:
        raise RobustError("no per-scenario optima given")
    if eps < 0:
        raise RobustError("eps must be nonnegative")
    c_star = max(c_opts.values())
    return c_star, (1.0 + eps) * c_star


def most_expensive_scenario(c_opts: Mapping[str, float]) -> str:
    """Scenario id attaining c*; ties broken by lowest id for determinism."""
    c_star = max(c_opts.values())
    return min(sid for sid, v in c_opts.items() if v == c_star)


def intersect_scenarios(
    spaces: Mapping[str, geometry.Polytope],
) -> tuple[geometry.Polytope, dict[str, float]]:
    """Intersection polytope plus per-scenario volume ratios vol(int)/vol(A_i)."""
    if not spaces:
        raise RobustError("no scenario spaces given")
    labels = next(iter(spaces.values())).labels
    try:
        inter = geometry.intersect_halfspaces(
            [p.halfspaces() for p in spaces.values()], labels=labels
        )
    except geometry.EmptyPolytopeError as err:
        first = next(iter(spaces))
        raise EmptyIntersectionError(
            f"near-optimal spaces have empty intersection (first certificate from "
            f"scenario set starting at '{first}'): {err}"
        ) from err
    vol_int = geometry.volume(inter)
    ratios = {sid: vol_int / geometry.volume(p) for sid, p in spaces.items()}
    return inter, ratios


def robust_centre(intersection: geometry.Polytope) -> tuple[np.ndarray, float]:
    """Chebyshev centre and radius of the intersection."""
    cheb = geometry.chebyshev(intersection.halfspaces())
    return cheb.centre, cheb.radius


def _solve_fixed(
    slacked: lpmod.LinearProgram,
    rmap: lpmod.ReductionMap,
    y: np.ndarray,
    band_tol: float | None,
    mode: str,
    scenario: str,
) -> InvestmentVector:
    fixed = lpmod.fix_reduced_point(slacked, rmap, y, band_tol)
    sol = lpmod.solve(fixed)
    if sol.status == lpmod.INFEASIBLE:
        raise AllocationInfeasibleError(mode, scenario)
    if not sol.is_optimal:
        raise lpmod.SolverFailure(f"allocation '{mode}' solve ended with status {sol.status}")
    cols, elements = slacked.column_meta.investment_columns()
    return InvestmentVector(elements, sol.x[cols], slacked.c[cols])


def allocate(
    y: np.ndarray,
    mode: str,
    problems: Mapping[str, lpmod.LinearProgram],
    rmap: lpmod.ReductionMap,
    joint: lpmod.LinearProgram | None = None,
    i_star: str | None = None,
    band_tol: float | None = None,
) -> InvestmentVector:
    """Map a reduced point back to per-element capacities.

    `problems` are the per-scenario cost-slacked LPs (original objectives);
    the joint LP is required for the exact mode, the most expensive scenario
    id for the conservative mode.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise RobustError("reduced point must be finite")
    if mode == EXACT:
        if joint is None:
            raise RobustError("exact allocation requires the joint multi-scenario LP")
        return _solve_fixed(joint, rmap, y, band_tol, EXACT, "joint")
    if mode == CONSERVATIVE:
        if i_star is None:
            raise RobustError("conservative allocation requires the most expensive scenario id")
        return _solve_fixed(problems[i_star], rmap, y, band_tol, CONSERVATIVE, i_star)
    if mode == MEAN:
        vectors = [
            _solve_fixed(slacked, rmap, y, band_tol, MEAN, sid)
            for sid, slacked in problems.items()
        ]
        elements = vectors[0].elements
        for v in vectors[1:]:
            if v.elements != elements:
                raise RobustError("scenario LPs disagree on investment elements")
        values = np.mean([v.values for v in vectors], axis=0)
        return InvestmentVector(elements, values, vectors[0].costs)
    raise RobustError(f"unknown allocation mode '{mode}'")


def baseline_design(i_star_solution: InvestmentVector, target_capex: float) -> InvestmentVector:
    """Uniformly scale the most expensive scenario's optimal capacities so
    that their capital cost equals `target_capex` exactly."""
    capex = i_star_solution.capex()
    if capex <= 0:
        raise ValueError("baseline source design has no positive capital cost")
    return i_star_solution.scaled(target_capex / capex)


@dataclass
class RobustRun:
    """Everything one cross-scenario study produces, ready for serialisation."""

    scenario_ids: tuple[str, ...]
    c_opts: dict[str, float]
    eps: float
    c_star: float
    cost_bound: float
    i_star: str
    spaces: dict[str, geometry.Polytope]
    intersection: geometry.Polytope
    centre: np.ndarray
    radius: float
    volume_ratios: dict[str, float]
    allocations: dict[str, InvestmentVector] = field(default_factory=dict)
    reduction: lpmod.ReductionMap | None = None

    def validate(self, band_tol: float | None = None) -> None:
        if abs(self.c_star - max(self.c_opts.values())) > 1e-9 * self.c_star:
            raise RobustError("c* must be the maximum per-scenario optimal cost")
        for sid, p in self.spaces.items():
            if not p.contains(self.centre)[0]:
                raise RobustError(f"robust centre lies outside the space of scenario {sid}")
        tol = band_tol if band_tol is not None else 1e-4 * max(1.0, float(np.max(np.abs(self.centre))))
        for mode, alloc in self.allocations.items():
            if mode == BASELINE:
                continue
            # reduced coordinates of every allocation must sit on the centre
            y = self._reduced(alloc)
            if np.max(np.abs(y - self.centre)) > tol * (1 + 1e-6):
                raise RobustError(f"allocation '{mode}' leaves the reduced band around the centre")

    def _reduced(self, alloc: InvestmentVector) -> np.ndarray:
        if self.reduction is None:
            raise RobustError("run carries no reduction map")
        return lpmod.aggregate(alloc.values, self.reduction)

    def diagnostics(self) -> dict:
        """The size statistics behind the usual reporting figures."""
        vols = {sid: geometry.volume(p) for sid, p in self.spaces.items()}
        vmax, vmin = max(vols.values()), min(vols.values())
        k = self.intersection.k
        spread = vmax / vmin if vmin > 0 else float("inf")
        max_radius = self.c_star * self.eps / 2.0
        return {
            "chebyshev_radius": self.radius,
            "max_possible_radius": max_radius,
            "radius_ratio": self.radius / max_radius if max_radius > 0 else float("inf"),
            "scenario_volumes": vols,
            "volume_spread": spread,
            "per_dimension_scale": spread ** (1.0 / k),
            "intersection_volume": geometry.volume(self.intersection),
            "volume_ratios": dict(self.volume_ratios),
        }

    def to_json_dict(self) -> dict:
        return {
            "scenario_ids": list(self.scenario_ids),
            "eps": self.eps,
            "c_opts": self.c_opts,
            "c_star": self.c_star,
            "cost_bound": self.cost_bound,
            "i_star": self.i_star,
            "centre": self.centre.tolist(),
            "radius": self.radius,
            "dimension_labels": list(self.intersection.labels or []),
            "diagnostics": self.diagnostics(),
            "allocations": {
                mode: {
                    "elements": list(v.elements),
                    "values": v.values.tolist(),
                    "capex": v.capex(),
                }
                for mode, v in self.allocations.items()
            },
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)


def write_capacity_csv(alloc: InvestmentVector, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "new_capacity", "annualised_cost_per_unit", "capex"])
        for e, v, c in zip(alloc.elements, alloc.values, alloc.costs):
            w.writerow([e, f"{v:.17g}", f"{c:.17g}", f"{v * c:.17g}"])
