"""Computational geometry for low-dimensional reduced cost spaces (k = 2..7ish).

Convex hulls are delegated to qhull (scipy.spatial); everything the method
needs on top is implemented here: merged facets with (k-1)-measures, volume by
simplicial decomposition, the Chebyshev-centre LP, halfspace intersection with
vertex enumeration by polar duality, pairwise projections and angle
bookkeeping for direction filtering.

Coordinates are EUR-denominated and can span 1e9..1e11, so hull computations
run on points rescaled to the unit box and results are mapped back; stated
tolerances refer to the scaled coordinates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import lp as lpmod

VERTEX_DEDUP_TOL = 1e-9  # scaled coordinates
CONTAINMENT_RTOL = 1e-7


class GeometryError(Exception):
    pass


class DegenerateHullError(GeometryError):
    """Input points do not span the full dimension; carries the affine rank."""

    def __init__(self, message: str, affine_rank: int):
        super().__init__(message)
        self.affine_rank = affine_rank


class EmptyPolytopeError(GeometryError):
    """Halfspace system has no interior (empty, or zero-volume)."""


class UnboundedPolytopeError(GeometryError):
    """Halfspace system admits recession directions."""


@dataclass(frozen=True)
class Polytope:
    """Bounded convex polytope with both vertex and halfspace descriptions.

    Facets are merged (not the qhull triangulation): ``normals`` are unit
    outward normals, ``offsets`` the b in a . x <= b, ``measures`` the
    (k-1)-dimensional Lebesgue measure of each facet. ``simplices`` retain a
    triangulation of the boundary for volume computation.
    """

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    measures: np.ndarray
    incidence: tuple[np.ndarray, ...]
    provenance: str = "from-points"
    labels: tuple[str, ...] | None = None
    simplices: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def k(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_facets(self) -> int:
        return self.normals.shape[0]

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        return self.normals, self.offsets

    @property
    def coord_scale(self) -> float:
        """Magnitude of the coordinates; the reference for membership tolerances."""
        return max(1.0, float(np.max(np.abs(self.vertices))))

    def contains(self, points: np.ndarray, rtol: float = CONTAINMENT_RTOL) -> np.ndarray:
        """Row-wise membership test; tolerance is relative to the coordinate scale."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        slack = self.offsets + rtol * np.maximum(self.coord_scale, np.abs(self.offsets))
        return np.all(pts @ self.normals.T <= slack[None, :], axis=1)

    def max_violation(self, point: np.ndarray) -> float:
        """Largest halfspace violation, relative to the coordinate scale."""
        r = (self.normals @ np.asarray(point, dtype=float)) - self.offsets
        return float(np.max(r / np.maximum(self.coord_scale, np.abs(self.offsets))))

    @property
    def is_degenerate(self) -> bool:
        return volume(self) <= 0.0

    def to_json_dict(self) -> dict:
        return {
            "dimension": self.k,
            "labels": list(self.labels) if self.labels else None,
            "vertices": self.vertices.tolist(),
            "facets": [
                {
                    "normal": self.normals[i].tolist(),
                    "offset": float(self.offsets[i]),
                    "measure": float(self.measures[i]),
                }
                for i in range(self.n_facets)
            ],
            "provenance": self.provenance,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)

    def write_vertices_csv(self, path) -> None:
        labels = self.labels or tuple(f"dim{i}" for i in range(self.k))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(labels)
            for v in self.vertices:
                w.writerow([f"{x:.17g}" for x in v])

    @staticmethod
    def from_json_dict(doc: dict) -> "Polytope":
        labels = tuple(doc["labels"]) if doc.get("labels") else None
        p = convex_hull(np.asarray(doc["vertices"], dtype=float), labels=labels)
        if doc.get("provenance") == "from-halfspaces":
            object.__setattr__(p, "provenance", "from-halfspaces")
        return p

    @staticmethod
    def read_json(path) -> "Polytope":
        with open(path) as fh:
            return Polytope.from_json_dict(json.load(fh))


def affine_rank(points: np.ndarray, rtol: float = 1e-8) -> int:
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] <= 1:
        return 0
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return int(np.sum(sv > rtol * max(sv[0], 1e-300)))


def _dedup_scaled(scaled: np.ndarray) -> np.ndarray:
    """Indices of representatives after merging points within the dedup tolerance."""
    order = np.lexsort(scaled.T[::-1])
    keep = [order[0]]
    for idx in order[1:]:
        if np.max(np.abs(scaled[idx] - scaled[keep[-1]])) > VERTEX_DEDUP_TOL:
            keep.append(idx)
    return np.sort(np.array(keep, dtype=np.int64))


def _simplex_measure(verts: np.ndarray) -> float:
    """(m-1)-dimensional measure of a simplex with m vertices in R^k."""
    edges = verts[1:] - verts[0]
    gram = edges @ edges.T
    det = np.linalg.det(gram)
    if det <= 0:
        return 0.0
    return math.sqrt(det) / math.factorial(edges.shape[0])


def convex_hull(points: np.ndarray, labels: tuple[str, ...] | None = None) -> Polytope:
    """Hull of the input points, with merged facets and their measures.

    Raises DegenerateHullError (carrying the affine rank) when the points do
    not span the full dimension; recovery policy belongs to the caller.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = pts.shape[1]
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    # rank is judged on box-scaled points: axes carry different units on purpose
    safe_span = np.where(span > 0, span, 1.0)
    rank = affine_rank((pts - lo) / safe_span)
    if pts.shape[0] < k + 1:
        raise DegenerateHullError(
            f"need at least {k + 1} points in R^{k}, got {pts.shape[0]}", min(rank, pts.shape[0] - 1)
        )
    if np.any(span <= 0) or rank < k:
        raise DegenerateHullError(f"points span only {rank} of {k} dimensions", rank)
    scaled = (pts - lo) / span
    scaled = scaled[_dedup_scaled(scaled)]
    try:
        hull = ConvexHull(scaled)
    except QhullError as err:  # rank check should catch this first
        raise DegenerateHullError(f"qhull failed: {err}", rank) from err

    # re-index hull vertices, sorted lexicographically for determinism
    vert_scaled = scaled[hull.vertices]
    order = np.lexsort(vert_scaled.T[::-1])
    old_to_new = {int(hull.vertices[o]): i for i, o in enumerate(order)}
    vertices = vert_scaled[order] * span + lo

    # merge coplanar qhull simplices into facets via their shared equations
    eq_keys = np.round(hull.equations, 9)
    groups: dict[bytes, list[int]] = {}
    for i in range(len(hull.simplices)):
        groups.setdefault(eq_keys[i].tobytes(), []).append(i)

    normals, offsets, measures, incidence = [], [], [], []
    simplices_new = []
    for simplex_ids in groups.values():
        eq = hull.equations[simplex_ids[0]]
        a_scaled, b_scaled = eq[:-1], -eq[-1]
        a = a_scaled / span
        b = b_scaled + a @ lo
        norm = np.linalg.norm(a)
        normals.append(a / norm)
        offsets.append(b / norm)
        vset: set[int] = set()
        measure = 0.0
        for si in simplex_ids:
            tri = [old_to_new[int(v)] for v in hull.simplices[si]]
            vset.update(tri)
            simplices_new.append(tri)
            measure += _simplex_measure(vertices[tri])
        measures.append(measure)
        incidence.append(np.array(sorted(vset), dtype=np.int64))

    # containment invariant, checked where qhull worked (scaled coordinates)
    scaled_eqs = hull.equations[[ids[0] for ids in groups.values()]]
    resid = vert_scaled[order] @ scaled_eqs[:, :-1].T + scaled_eqs[:, -1][None, :]
    worst = float(np.max(resid / np.maximum(1.0, np.abs(scaled_eqs[:, -1]))[None, :]))
    if worst > CONTAINMENT_RTOL:
        raise GeometryError(f"hull facets violate containment invariant ({worst:.2e})")

    facet_order = np.lexsort(
        np.vstack([np.asarray(offsets)[None, :], np.asarray(normals).T[::-1]])
    )
    return Polytope(
        vertices=vertices,
        normals=np.asarray(normals)[facet_order],
        offsets=np.asarray(offsets)[facet_order],
        measures=np.asarray(measures)[facet_order],
        incidence=tuple(incidence[i] for i in facet_order),
        provenance="from-points",
        labels=labels,
        simplices=np.asarray(simplices_new, dtype=np.int64),
    )


def volume(p: Polytope) -> float:
    """Volume by simplicial decomposition from an interior reference point."""
    ref = p.vertices.mean(axis=0)
    k = p.k
    total = 0.0
    for tri in p.simplices:
        mat = p.vertices[tri] - ref
        total += abs(np.linalg.det(mat))
    return total / math.factorial(k)


@dataclass(frozen=True)
class ChebyshevResult:
    centre: np.ndarray
    radius: float
    tangent: np.ndarray  # facet/row ids active at the optimum
    duals: np.ndarray  # dual value per constraint row of the radius LP

    def ball_inside(self, normals: np.ndarray, offsets: np.ndarray, rtol: float = 1e-6) -> bool:
        lhs = normals @ self.centre + self.radius * np.linalg.norm(normals, axis=1)
        return bool(np.all(lhs <= offsets + rtol * np.maximum(1.0, np.abs(offsets))))


def chebyshev(halfspaces: list[tuple[np.ndarray, float]] | tuple[np.ndarray, np.ndarray]) -> ChebyshevResult:
    """Centre and radius of the largest inscribed ball, via the radius LP.

    max r  s.t.  a_j . y + r ||a_j|| <= b_j, r >= 0
    """
    if isinstance(halfspaces, tuple) and len(halfspaces) == 2 and np.asarray(halfspaces[0]).ndim == 2:
        normals = np.asarray(halfspaces[0], dtype=float)
        offsets = np.asarray(halfspaces[1], dtype=float)
    else:
        if len(halfspaces) == 0:
            raise GeometryError("empty halfspace list")
        normals = np.asarray([a for a, _ in halfspaces], dtype=float)
        offsets = np.asarray([b for _, b in halfspaces], dtype=float)
    m, k = normals.shape

    # uniform (isotropic) conditioning only: anisotropic scaling would move the centre
    scale = max(1.0, float(np.max(np.abs(offsets))))
    row_norms = np.linalg.norm(normals, axis=1)
    if np.any(row_norms == 0):
        raise GeometryError("zero normal vector in halfspace system")

    rows = np.repeat(np.arange(m, dtype=np.int64), k + 1)
    cols = np.tile(np.arange(k + 1, dtype=np.int64), m)
    vals = np.hstack([normals, row_norms[:, None]]).ravel()
    c = np.zeros(k + 1)
    c[k] = -1.0
    radius_lp = lpmod.LinearProgram(
        c=c,
        a_ub=lpmod.Triplets(rows, cols, vals, m),
        b_ub=offsets / scale,
        a_eq=lpmod.Triplets.empty(),
        b_eq=np.zeros(0),
        lower=np.concatenate([np.full(k, -np.inf), [0.0]]),
        upper=np.full(k + 1, np.inf),
    )
    sol = lpmod.solve(radius_lp)
    if sol.status == lpmod.INFEASIBLE:
        raise EmptyPolytopeError("halfspace system is infeasible")
    if sol.status == lpmod.UNBOUNDED:
        raise UnboundedPolytopeError("inscribed radius is unbounded")
    if not sol.is_optimal:
        raise lpmod.SolverFailure(f"radius LP ended with status {sol.status}")
    centre = sol.x[:k] * scale
    radius = float(sol.x[k]) * scale
    lhs = normals @ centre + radius * row_norms
    resid = (offsets - lhs) / np.maximum(1.0, np.abs(offsets))
    tangent = np.flatnonzero(resid <= 1e-7)
    return ChebyshevResult(centre, radius, tangent, sol.duals_ineq)


def intersect_halfspaces(
    systems: list[tuple[np.ndarray, np.ndarray]], labels: tuple[str, ...] | None = None
) -> Polytope:
    """Intersection of halfspace systems, with vertices enumerated by polar duality.

    Raises EmptyPolytopeError when the combined system has no interior — the
    caller's signal that the cost slack is too small.
    """
    if not systems:
        raise GeometryError("need at least one halfspace system")
    normals = np.vstack([np.asarray(a, dtype=float) for a, _ in systems])
    offsets = np.concatenate([np.asarray(b, dtype=float) for _, b in systems])
    k = normals.shape[1]

    cheb = chebyshev((normals, offsets))
    scale = max(1.0, float(np.max(np.abs(offsets))))
    if cheb.radius <= 1e-9 * scale:
        raise EmptyPolytopeError(
            "intersection has empty interior (Chebyshev radius "
            f"{cheb.radius:.3e}); increase the cost slack"
        )

    # polar dual around the interior point: halfspace a.x <= b  ->  point a/(b - a.y0)
    b_shift = offsets - normals @ cheb.centre
    dual_pts = normals / b_shift[:, None]
    try:
        dual_hull = convex_hull(dual_pts)
    except DegenerateHullError as err:
        raise UnboundedPolytopeError(
            f"halfspace system admits recession directions (dual rank {err.affine_rank})"
        ) from err

    # each dual facet u.z <= w maps back to the primal vertex u/w + y0
    if np.any(dual_hull.offsets <= 0):
        raise UnboundedPolytopeError("dual hull does not enclose the origin; system unbounded")
    verts = dual_hull.normals / dual_hull.offsets[:, None] + cheb.centre
    p = convex_hull(verts, labels=labels)
    object.__setattr__(p, "provenance", "from-halfspaces")
    return p


def project_pair(p: Polytope, dims: tuple[int, int]) -> Polytope:
    """2-D hull of the vertices projected onto the coordinate pair."""
    i, j = dims
    if i == j or not (0 <= i < p.k and 0 <= j < p.k):
        raise GeometryError(f"invalid projection pair {dims} for dimension {p.k}")
    labels = None
    if p.labels:
        labels = (p.labels[i], p.labels[j])
    return convex_hull(p.vertices[:, [i, j]], labels=labels)


def min_angle_to_set(d: np.ndarray, used: list[np.ndarray] | np.ndarray) -> float:
    """Smallest angle (degrees) between d and any vector in `used`; inf if empty."""
    used_arr = np.atleast_2d(np.asarray(used, dtype=float)) if len(used) else None
    if used_arr is None or used_arr.size == 0:
        return math.inf
    dots = np.clip(used_arr @ np.asarray(d, dtype=float), -1.0, 1.0)
    return float(np.degrees(np.arccos(np.max(dots))))
