"""Cost-robust capacity-expansion design from intersected near-optimal spaces.

The package approximates the reduced near-optimal feasible space of each
scenario's expansion problem, intersects the spaces across scenarios, picks
the Chebyshev centre of the intersection as the robust point, maps it back to
a full design through one of several allocations, and stress-tests the result
in dispatch simulation.
"""

from .explore import ExploreConfig, approximate_space
from .geometry import Polytope, chebyshev, convex_hull, intersect_halfspaces, volume
from .lp import LinearProgram, ReductionMap, Solution, solve
from .model import (
    CostAssumptions,
    Network,
    annuity,
    build_dispatch_lp,
    build_expansion_lp,
    build_joint_expansion_lp,
    build_reduction_map,
)
from .robust import allocate, baseline_design, intersect_scenarios, robust_centre, uniform_bound
from .scenario import (
    Calendar,
    LoadRegressionParams,
    Scenario,
    degree_days,
    fit_daily_regression,
    fit_weekly_profile,
    generate_scenarios,
    normalize_hydro,
    synthesize_load,
)
from .validate import stress_test, summarize

__version__ = "0.1.0"

__all__ = [
    "ExploreConfig",
    "approximate_space",
    "Polytope",
    "chebyshev",
    "convex_hull",
    "intersect_halfspaces",
    "volume",
    "LinearProgram",
    "ReductionMap",
    "Solution",
    "solve",
    "CostAssumptions",
    "Network",
    "annuity",
    "build_dispatch_lp",
    "build_expansion_lp",
    "build_joint_expansion_lp",
    "build_reduction_map",
    "allocate",
    "baseline_design",
    "intersect_scenarios",
    "robust_centre",
    "uniform_bound",
    "Calendar",
    "LoadRegressionParams",
    "Scenario",
    "degree_days",
    "fit_daily_regression",
    "fit_weekly_profile",
    "generate_scenarios",
    "normalize_hydro",
    "synthesize_load",
    "stress_test",
    "summarize",
]
