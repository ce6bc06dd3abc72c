"""Iterative approximation of a reduced near-optimal space.

Starting from supports along all +/- cardinal directions, the algorithm
repeatedly picks a new direction, re-objectives the cost-slacked LP to
maximise that direction in the reduced space, and adds the resulting extreme
point to a growing convex hull. Directions come from one of three methods:

  random-uniform            uniform samples on the sphere (seeded)
  facets                    outward normal of the largest-measure hull facet
  maximal-centre-then-facets  normals of facets tangent to the hull's
                            Chebyshev ball, largest dual value first, falling
                            back to the facets method

All methods share an angle filter: a candidate within theta degrees of any
previously used direction is discarded; when no candidate survives, theta
decays by a fixed factor until it falls below a minimum and the run is
declared exhausted.

If the initial supports are affinely dependent (flat reduced space), the
orthogonal complement of their affine span is probed; if the space is
genuinely lower-dimensional, the run continues inside the affine hull.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from . import geometry, lp as lpmod

RANDOM_UNIFORM = "random-uniform"
FACETS = "facets"
MAX_CENTRE = "maximal-centre-then-facets"
_METHODS = (RANDOM_UNIFORM, FACETS, MAX_CENTRE)

_RANDOM_TRIES_PER_THETA = 100
_MAX_CONSECUTIVE_FAILURES = 3


class ExploreError(Exception):
    pass


class InfeasibleProblemError(ExploreError):
    """The cost-slacked LP has no feasible point."""


class DegenerateStateError(ExploreError):
    """The current hull does not span the working dimension."""


@dataclass(frozen=True)
class ExploreConfig:
    method: str = MAX_CENTRE
    iterations: int = 150
    theta_deg: float = 1.0
    theta_min_deg: float = 0.01
    decay: float = 0.8
    convergence_delta_pct: float | None = None
    convergence_window: int = 5
    parallel: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ExploreError(f"unknown direction method '{self.method}'")
        if not 0 < self.theta_min_deg <= self.theta_deg <= 180:
            raise ExploreError("need 0 < theta_min <= theta <= 180")
        if not 0 < self.decay < 1:
            raise ExploreError("decay factor must lie in (0, 1)")
        if self.iterations < 1 or self.parallel < 1:
            raise ExploreError("iterations and parallel width must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    method: str
    direction: np.ndarray
    objective: float  # d . y at the found extreme point
    volume: float
    radius: float
    theta: float
    cost: float  # c . x of the producing solution
    point_index: int


@dataclass(frozen=True)
class AffineFrame:
    """Orthonormal chart of the affine hull of a flat reduced space."""

    origin: np.ndarray
    basis: np.ndarray  # (k, r), columns orthonormal

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    def to_frame(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y) - self.origin) @ self.basis

    def to_original(self, z: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(z) @ self.basis.T


@dataclass
class ExploreState:
    k: int
    config: ExploreConfig
    points: list[np.ndarray] = field(default_factory=list)  # in R^k
    costs: list[float] = field(default_factory=list)
    hull: geometry.Polytope | None = None
    used_directions: list[np.ndarray] = field(default_factory=list)  # working coords
    history: list[IterationRecord] = field(default_factory=list)
    initial_records: list[IterationRecord] = field(default_factory=list)
    theta: float = 0.0
    termination: str = ""
    frame: AffineFrame | None = None
    rng: np.random.Generator = None  # type: ignore[assignment]

    @property
    def working_dim(self) -> int:
        return self.frame.r if self.frame is not None else self.k

    @property
    def is_full_dimensional(self) -> bool:
        return self.frame is None and self.hull is not None

    def working_points(self) -> np.ndarray:
        pts = np.asarray(self.points)
        if self.frame is not None:
            return self.frame.to_frame(pts)
        return pts

    def hull_vertices_original(self) -> np.ndarray:
        if self.hull is None:
            return np.zeros((0, self.k))
        if self.frame is not None:
            return self.frame.to_original(self.hull.vertices)
        return self.hull.vertices

    def lift_direction(self, d: np.ndarray) -> np.ndarray:
        """Working-space direction -> objective direction in R^k."""
        if self.frame is not None:
            return self.frame.basis @ d
        return d

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "method", "direction", "objective", "volume", "radius", "theta", "cost"])
            for rec in self.initial_records + self.history:
                w.writerow(
                    [
                        rec.iteration,
                        rec.method,
                        ";".join(f"{x:.17g}" for x in rec.direction),
                        f"{rec.objective:.17g}",
                        f"{rec.volume:.17g}" if np.isfinite(rec.volume) else "",
                        f"{rec.radius:.17g}" if np.isfinite(rec.radius) else "",
                        f"{rec.theta:.17g}",
                        f"{rec.cost:.17g}",
                    ]
                )

    def trace_hash(self) -> str:
        import io

        buf = io.StringIO()
        w = csv.writer(buf)
        for rec in self.initial_records + self.history:
            w.writerow([rec.iteration, rec.method, ";".join(f"{x:.17g}" for x in rec.direction), f"{rec.objective:.17g}"])
        return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def initial_directions(k: int) -> list[np.ndarray]:
    """The 2k cardinal probes e_1, -e_1, e_2, -e_2, ..."""
    if k < 2:
        raise ExploreError("need at least 2 reduced dimensions")
    out = []
    for i in range(k):
        e = np.zeros(k)
        e[i] = 1.0
        out.append(e.copy())
        out.append(-e)
    return out


def convergence_check(history: list[IterationRecord], delta_pct: float, window: int) -> bool:
    """True iff volume and radius both moved <= delta percent on each of the
    last `window` iterations (each compared to its predecessor)."""
    if len(history) < window + 1:
        return False
    recent = history[-(window + 1):]
    for prev, cur in zip(recent[:-1], recent[1:]):
        for a, b in ((prev.volume, cur.volume), (prev.radius, cur.radius)):
            denom = max(abs(a), 1e-300)
            if abs(b - a) / denom * 100.0 > delta_pct:
                return False
    return True


def _facet_candidates(hull: geometry.Polytope) -> list[np.ndarray]:
    """Facet normals by decreasing measure; ties broken lexicographically."""
    order = sorted(
        range(hull.n_facets), key=lambda i: (-hull.measures[i], tuple(hull.normals[i]))
    )
    return [hull.normals[i] for i in order]


def _tangent_candidates(hull: geometry.Polytope) -> list[np.ndarray]:
    """Normals of facets tangent to the Chebyshev ball, largest dual first."""
    cheb = geometry.chebyshev(hull.halfspaces())
    duals = cheb.duals if cheb.duals is not None else np.zeros(hull.n_facets)
    ids = list(cheb.tangent)
    ids.sort(key=lambda i: (-duals[i], tuple(hull.normals[i])))
    return [hull.normals[i] for i in ids]


def next_direction(state: ExploreState, config: ExploreConfig) -> tuple[np.ndarray, str] | None:
    """The next unit direction to probe, or None when the run is exhausted.

    Decays the state's angle threshold whenever every candidate is filtered.
    """
    if state.hull is None:
        raise DegenerateStateError("no hull to derive directions from")
    dim = state.working_dim
    if geometry.affine_rank(state.hull.vertices) < dim:
        raise DegenerateStateError("hull is not full-dimensional")

    while state.theta >= config.theta_min_deg:
        if config.method == RANDOM_UNIFORM:
            for _ in range(_RANDOM_TRIES_PER_THETA):
                v = state.rng.normal(size=dim)
                norm = np.linalg.norm(v)
                if norm == 0:
                    continue
                d = v / norm
                if geometry.min_angle_to_set(d, state.used_directions) >= state.theta:
                    return d, RANDOM_UNIFORM
        else:
            candidates: list[tuple[np.ndarray, str]] = []
            if config.method == MAX_CENTRE:
                candidates += [(d, "chebyshev-tangent") for d in _tangent_candidates(state.hull)]
            candidates += [(d, FACETS) for d in _facet_candidates(state.hull)]
            for d, src in candidates:
                if geometry.min_angle_to_set(d, state.used_directions) >= state.theta:
                    return d, src
        state.theta *= config.decay
    return None


def _solve_direction(slacked: lpmod.LinearProgram, rmap: lpmod.ReductionMap, d: np.ndarray):
    redirected = lpmod.set_reduced_objective(slacked, rmap, d)
    sol = lpmod.solve(redirected)
    if sol.status == lpmod.INFEASIBLE:
        raise InfeasibleProblemError("cost-slacked LP is infeasible")
    if not sol.is_optimal:
        return None
    x = sol.x
    y = lpmod.aggregate(lpmod.project_investments(x, slacked.column_meta), rmap)
    return y, float(slacked.c @ x)


def _rebuild(state: ExploreState) -> None:
    pts = state.working_points()
    state.hull = geometry.convex_hull(pts)


def _bootstrap_frame(
    state: ExploreState, slacked: lpmod.LinearProgram, rmap: lpmod.ReductionMap
) -> bool:
    """Handle affinely dependent initial points.

    Probes the orthogonal complement of the current affine span; if no new
    extent appears, continues inside the affine hull. Returns False when the
    space is too flat to explore at all (fewer than 2 dimensions).
    """
    pts = np.asarray(state.points)
    scale = max(1.0, float(np.max(np.abs(pts))))
    for _ in range(state.k):
        pts = np.asarray(state.points)
        centered = pts - pts.mean(axis=0)
        u, sv, vt = np.linalg.svd(centered / scale, full_matrices=True)
        rank = int(np.sum(sv > 1e-7))
        if rank == state.k:
            return True
        null_dirs = vt[rank:]
        grew = False
        for nd in null_dirs:
            for sign in (1.0, -1.0):
                res = _solve_direction(slacked, rmap, sign * nd)
                if res is None:
                    continue
                y, cost = res
                state.points.append(y)
                state.costs.append(cost)
            new_pts = np.asarray(state.points)
            new_rank = geometry.affine_rank(new_pts / scale)
            if new_rank > rank:
                grew = True
                break
        if not grew:
            break

    pts = np.asarray(state.points)
    centered = (pts - pts.mean(axis=0)) / scale
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    rank = int(np.sum(sv > 1e-7))
    if rank == state.k:
        return True
    if rank < 2:
        state.termination = "degenerate"
        return False
    frame = AffineFrame(origin=pts.mean(axis=0), basis=vt[:rank].T)
    state.frame = frame
    # re-express already used directions in the frame where they have a shadow
    reexpressed = []
    for d in state.used_directions:
        z = frame.basis.T @ d
        n = np.linalg.norm(z)
        if n > 1e-9:
            reexpressed.append(z / n)
    state.used_directions = reexpressed
    return True


def approximate_space(
    slacked: lpmod.LinearProgram,
    rmap: lpmod.ReductionMap,
    config: ExploreConfig,
    trace_path=None,
) -> ExploreState:
    """Run the approximation loop and return the full exploration state.

    With parallel width P > 1, up to P directional solves are in flight and
    the direction for iteration i is derived from the hull of iteration i-P;
    results are merged in completion order, so determinism holds only for P=1.
    """
    k = rmap.k
    state = ExploreState(k=k, config=config, theta=config.theta_deg)
    state.rng = np.random.default_rng(config.seed)

    for j, d in enumerate(initial_directions(k)):
        res = _solve_direction(slacked, rmap, d)
        if res is None:
            raise ExploreError("solver failed during the initial cardinal probes")
        y, cost = res
        state.points.append(y)
        state.costs.append(cost)
        state.used_directions.append(d)
        state.initial_records.append(
            IterationRecord(
                iteration=-(2 * k) + j,
                method="initial",
                direction=d,
                objective=float(d @ y),
                volume=math.nan,
                radius=math.nan,
                theta=state.theta,
                cost=cost,
                point_index=len(state.points) - 1,
            )
        )

    if geometry.affine_rank(np.asarray(state.points)) < k:
        if not _bootstrap_frame(state, slacked, rmap):
            return state
    _rebuild(state)

    failures = 0

    def handle_result(it: int, d: np.ndarray, src: str, theta_at: float, res) -> bool:
        """Merge one directional solve; returns False to abort."""
        nonlocal failures
        if res is None:
            failures += 1
            if failures >= _MAX_CONSECUTIVE_FAILURES:
                state.termination = "solver-failure"
                return False
            return True
        failures = 0
        y, cost = res
        state.points.append(y)
        state.costs.append(cost)
        _rebuild(state)
        cheb = geometry.chebyshev(state.hull.halfspaces())
        z = state.frame.to_frame(y) if state.frame is not None else y
        state.history.append(
            IterationRecord(
                iteration=it,
                method=src,
                direction=d,
                objective=float(d @ z),
                volume=geometry.volume(state.hull),
                radius=cheb.radius,
                theta=theta_at,
                cost=cost,
                point_index=len(state.points) - 1,
            )
        )
        if config.convergence_delta_pct is not None and convergence_check(
            state.history, config.convergence_delta_pct, config.convergence_window
        ):
            state.termination = "converged"
            return False
        return True

    if config.parallel == 1:
        for it in range(1, config.iterations + 1):
            nxt = next_direction(state, config)
            if nxt is None:
                state.termination = "exhausted"
                break
            d, src = nxt
            state.used_directions.append(d)
            res = _solve_direction(slacked, rmap, state.lift_direction(d))
            if not handle_result(it, d, src, state.theta, res):
                break
        else:
            state.termination = state.termination or "budget"
    else:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            inflight: dict = {}
            submitted = 0
            aborted = False
            while True:
                while not aborted and submitted < config.iterations and len(inflight) < config.parallel:
                    nxt = next_direction(state, config)
                    if nxt is None:
                        state.termination = "exhausted"
                        aborted = True
                        break
                    d, src = nxt
                    state.used_directions.append(d)
                    submitted += 1
                    fut = pool.submit(_solve_direction, slacked, rmap, state.lift_direction(d))
                    inflight[fut] = (submitted, d, src, state.theta)
                if not inflight:
                    break
                done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
                for fut in done:
                    it, d, src, theta_at = inflight.pop(fut)
                    if not handle_result(it, d, src, theta_at, fut.result()):
                        aborted = True
            state.termination = state.termination or "budget"

    if not state.termination:
        state.termination = "budget"
    if trace_path is not None:
        state.write_trace(trace_path)
    return state
