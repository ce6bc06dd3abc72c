"""Canonical linear programs and the surgeries used to explore near-optimal spaces.

Everything downstream works on one LP form:

    min c . x   s.t.   A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper

Columns carry optional metadata (element id, investment/operational role,
technology group, time step) so that the projection onto investment variables
and the weighted group aggregation into a low-dimensional cost space can be
expressed without knowing anything about the energy model that produced the LP.

The solver is backed by HiGHS via scipy; inequality-row duals are part of the
result because the direction-generation logic downstream needs them.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

INVESTMENT = "investment"
OPERATIONAL = "operational"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"


class LinearProgramError(Exception):
    """Invalid LP construction or usage."""


class SolverFailure(LinearProgramError):
    """The backend terminated without a trustworthy status."""


@dataclass(frozen=True)
class ColumnInfo:
    """Metadata for one LP column."""

    element: str
    role: str
    group: str = ""
    step: int | None = None


class VariableIndex:
    """Maps LP columns to model elements, roles and technology groups.

    Investment columns carry no time step; the investment subvector is
    ordered by element id so that solutions from different scenarios of the
    same network line up entry by entry.
    """

    def __init__(self, columns: list[ColumnInfo] | tuple[ColumnInfo, ...]):
        self.columns = tuple(columns)
        inv = [(c.element, i) for i, c in enumerate(self.columns) if c.role == INVESTMENT]
        for col in self.columns:
            if col.role == INVESTMENT and col.step is not None:
                raise LinearProgramError(f"investment column {col.element} carries a time step")
        elements = [e for e, _ in inv]
        if len(set(elements)) != len(elements):
            raise LinearProgramError("duplicate investment element ids in variable index")
        inv.sort(key=lambda pair: pair[0])
        self._inv_elements = tuple(e for e, _ in inv)
        self._inv_columns = np.array([i for _, i in inv], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.columns)

    def investment_columns(self) -> tuple[np.ndarray, tuple[str, ...]]:
        """Full-LP column indices of investment variables, ordered by element id."""
        return self._inv_columns, self._inv_elements

    @property
    def n_investment(self) -> int:
        return len(self._inv_elements)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Triplets:
    """Sparse rows in coordinate form."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n_rows: int

    @staticmethod
    def empty() -> "Triplets":
        return Triplets(
            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), 0
        )

    def matrix(self, n_cols: int) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.n_rows, n_cols)
        )


@dataclass(frozen=True)
class LinearProgram:
    """Immutable LP in the canonical min form.

    ``column_meta`` is the hook through which the reduction operations find
    investment columns; it may be None for LPs that never leave this module.
    """

    c: np.ndarray
    a_ub: Triplets
    b_ub: np.ndarray
    a_eq: Triplets
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    column_meta: VariableIndex | None = None

    def __post_init__(self):
        object.__setattr__(self, "c", _readonly(np.asarray(self.c, dtype=float)))
        object.__setattr__(self, "b_ub", _readonly(np.asarray(self.b_ub, dtype=float)))
        object.__setattr__(self, "b_eq", _readonly(np.asarray(self.b_eq, dtype=float)))
        object.__setattr__(self, "lower", _readonly(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", _readonly(np.asarray(self.upper, dtype=float)))
        n = self.n_cols
        if not np.all(np.isfinite(self.c)):
            raise LinearProgramError("objective contains NaN/Inf")
        for trip, b, kind in ((self.a_ub, self.b_ub, "ub"), (self.a_eq, self.b_eq, "eq")):
            if len(b) != trip.n_rows:
                raise LinearProgramError(f"{kind}: rhs length does not match row count")
            if not np.all(np.isfinite(trip.vals)):
                raise LinearProgramError(f"{kind}: matrix contains NaN/Inf")
            if not np.all(np.isfinite(b)):
                raise LinearProgramError(f"{kind}: rhs contains NaN/Inf")
            if trip.rows.size and (trip.rows.min() < 0 or trip.rows.max() >= trip.n_rows):
                raise LinearProgramError(f"{kind}: row index out of range")
            if trip.cols.size and (trip.cols.min() < 0 or trip.cols.max() >= n):
                raise LinearProgramError(f"{kind}: column index out of range")
        if len(self.lower) != n or len(self.upper) != n:
            raise LinearProgramError("bound vectors do not match column count")
        if np.any(self.lower > self.upper):
            raise LinearProgramError("lower bound exceeds upper bound")
        if self.column_meta is not None and len(self.column_meta) != n:
            raise LinearProgramError("column metadata does not match column count")

    @property
    def n_cols(self) -> int:
        return len(self.c)

    def with_objective(self, c: np.ndarray) -> "LinearProgram":
        return replace(self, c=np.asarray(c, dtype=float))

    def with_extra_ub_rows(self, rows_cols_vals, b_extra) -> "LinearProgram":
        """Append inequality rows given as (row_offset, col, val) triplets."""
        rr, cc, vv = rows_cols_vals
        trip = Triplets(
            np.concatenate([self.a_ub.rows, np.asarray(rr, dtype=np.int64) + self.a_ub.n_rows]),
            np.concatenate([self.a_ub.cols, np.asarray(cc, dtype=np.int64)]),
            np.concatenate([self.a_ub.vals, np.asarray(vv, dtype=float)]),
            self.a_ub.n_rows + len(b_extra),
        )
        return replace(self, a_ub=trip, b_ub=np.concatenate([self.b_ub, b_extra]))


@dataclass(frozen=True)
class SolveTolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-7


@dataclass(frozen=True)
class Solution:
    status: str
    x: np.ndarray | None
    objective: float | None
    duals_ineq: np.ndarray | None
    duals_eq: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


_STATUS_MAP = {0: OPTIMAL, 1: FAILED, 2: INFEASIBLE, 3: UNBOUNDED, 4: FAILED}


def solve(lp: LinearProgram, tolerances: SolveTolerances | None = None) -> Solution:
    """Solve the LP, returning status, primal point, objective and duals.

    A numerically suspect answer is reported as status ``failed`` rather than
    returned as if it were optimal.
    """
    tol = tolerances or SolveTolerances()
    n = lp.n_cols
    bounds = np.column_stack([lp.lower, lp.upper])
    res = linprog(
        lp.c,
        A_ub=lp.a_ub.matrix(n) if lp.a_ub.n_rows else None,
        b_ub=lp.b_ub if lp.a_ub.n_rows else None,
        A_eq=lp.a_eq.matrix(n) if lp.a_eq.n_rows else None,
        b_eq=lp.b_eq if lp.a_eq.n_rows else None,
        bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": tol.feasibility,
            "dual_feasibility_tolerance": tol.optimality,
        },
    )
    status = _STATUS_MAP.get(res.status, FAILED)
    if status != OPTIMAL:
        return Solution(status, None, None, None)

    x = np.asarray(res.x)
    # defensive residual check; HiGHS tolerances are not a hard guarantee
    if lp.a_ub.n_rows:
        resid = lp.a_ub.matrix(n) @ x - lp.b_ub
        scale = np.maximum(1.0, np.abs(lp.b_ub))
        if np.any(resid > 1e3 * tol.feasibility * scale):
            logger.warning("primal residual %.3e beyond tolerance", float(np.max(resid / scale)))
            return Solution(FAILED, None, None, None)
    duals_ineq = None
    duals_eq = None
    if lp.a_ub.n_rows:
        duals_ineq = -np.asarray(res.ineqlin.marginals)  # >= 0 for binding <= rows
    if lp.a_eq.n_rows:
        duals_eq = -np.asarray(res.eqlin.marginals)
    return Solution(OPTIMAL, x, float(res.fun), duals_ineq, duals_eq)


def project_investments(x: np.ndarray, index: VariableIndex) -> np.ndarray:
    """Drop operational entries; result is ordered by element id."""
    cols, _ = index.investment_columns()
    x = np.asarray(x)
    if x.shape[0] != len(index):
        raise LinearProgramError("solution vector does not match variable index")
    return x[cols]


@dataclass(frozen=True)
class ReductionMap:
    """Weighted aggregation of investment variables into k cost dimensions.

    ``groups`` hold indices into the investment vector (the output space of
    :func:`project_investments`); ``weights`` are the positive per-variable
    coefficients, normally annualised capital costs so every dimension is
    denominated in EUR/a.
    """

    labels: tuple[str, ...]
    groups: tuple[np.ndarray, ...] = field(repr=False)
    weights: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(np.asarray(g, dtype=np.int64) for g in self.groups))
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float) for w in self.weights))
        if self.k < 2:
            raise LinearProgramError("reduction map needs at least 2 dimensions")
        if len(self.labels) != self.k or len(self.weights) != self.k:
            raise LinearProgramError("labels/groups/weights length mismatch")
        seen: set[int] = set()
        for g, w in zip(self.groups, self.weights):
            if len(g) != len(w):
                raise LinearProgramError("group/weight length mismatch")
            if len(g) == 0:
                raise LinearProgramError("empty reduction group")
            if np.any(w <= 0):
                raise LinearProgramError("reduction weights must be positive")
            overlap = seen.intersection(g.tolist())
            if overlap:
                raise LinearProgramError(f"reduction groups overlap on columns {sorted(overlap)}")
            seen.update(g.tolist())

    @property
    def k(self) -> int:
        return len(self.groups)


def aggregate(x_inv: np.ndarray, rmap: ReductionMap) -> np.ndarray:
    """y_i = sum_{j in T_i} c_j x_j; investment columns outside all groups are ignored."""
    x_inv = np.asarray(x_inv, dtype=float)
    for g in rmap.groups:
        if g.size and g.max() >= x_inv.shape[0]:
            raise LinearProgramError("reduction map indexes beyond the investment vector")
    return np.array([float(w @ x_inv[g]) for g, w in zip(rmap.groups, rmap.weights)])


def apply_cost_slack(lp: LinearProgram, cost_bound: float) -> LinearProgram:
    """Add the near-optimality row c . x <= cost_bound; objective untouched."""
    if not np.isfinite(cost_bound):
        raise LinearProgramError("cost bound must be finite")
    nz = np.flatnonzero(lp.c)
    rows = np.zeros(len(nz), dtype=np.int64)
    return lp.with_extra_ub_rows((rows, nz, lp.c[nz]), np.array([float(cost_bound)]))


def _full_group_columns(lp: LinearProgram, rmap: ReductionMap) -> list[np.ndarray]:
    if lp.column_meta is None:
        raise LinearProgramError("LP carries no column metadata; cannot resolve investment columns")
    inv_cols, _ = lp.column_meta.investment_columns()
    for g in rmap.groups:
        if g.size and g.max() >= len(inv_cols):
            raise LinearProgramError("reduction map does not fit this LP's investment space")
    return [inv_cols[g] for g in rmap.groups]


def set_reduced_objective(lp: LinearProgram, rmap: ReductionMap, d: np.ndarray) -> LinearProgram:
    """Replace the objective by -d . sigma(pi(x)), so minimising maximises d . y."""
    d = np.asarray(d, dtype=float)
    if d.shape != (rmap.k,):
        raise LinearProgramError("direction dimension does not match reduction map")
    if not np.linalg.norm(d) > 0:
        raise LinearProgramError("zero direction")
    c_new = np.zeros(lp.n_cols)
    for d_i, cols, w in zip(d, _full_group_columns(lp, rmap), rmap.weights):
        c_new[cols] -= d_i * w
    return lp.with_objective(c_new)


def fix_reduced_point(
    lp: LinearProgram, rmap: ReductionMap, y: np.ndarray, tolerance: float | None = None
) -> LinearProgram:
    """Pin sigma(pi(x)) to y via a +/- tolerance band (2k inequality rows).

    Exact equalities on aggregated costs are numerically brittle, hence the
    band; the default is 1e-4 relative to the largest coordinate.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (rmap.k,) or not np.all(np.isfinite(y)):
        raise LinearProgramError("reduced point must be finite and k-dimensional")
    tol = tolerance if tolerance is not None else 1e-4 * max(1.0, float(np.max(np.abs(y))))
    cols_per_group = _full_group_columns(lp, rmap)
    rr: list[np.ndarray] = []
    cc: list[np.ndarray] = []
    vv: list[np.ndarray] = []
    b: list[float] = []
    row = 0
    for y_i, cols, w in zip(y, cols_per_group, rmap.weights):
        rr.append(np.full(len(cols), row, dtype=np.int64))
        cc.append(cols)
        vv.append(w)
        b.append(y_i + tol)
        row += 1
        rr.append(np.full(len(cols), row, dtype=np.int64))
        cc.append(cols)
        vv.append(-w)
        b.append(-(y_i - tol))
        row += 1
    return lp.with_extra_ub_rows(
        (np.concatenate(rr), np.concatenate(cc), np.concatenate(vv)), np.array(b)
    )


def write_lp_file(lp: LinearProgram, path) -> None:
    """Export in the textual LP format for cross-checking with external solvers."""
    buf = io.StringIO()
    buf.write("Minimize\n obj:")
    for j in np.flatnonzero(lp.c):
        buf.write(f" {lp.c[j]:+.17g} x{j}")
    if not np.any(lp.c):
        buf.write(" 0 x0")
    buf.write("\nSubject To\n")
    for kind, trip, rhs, op in (("c", lp.a_ub, lp.b_ub, "<="), ("e", lp.a_eq, lp.b_eq, "=")):
        if trip.n_rows == 0:
            continue
        mat = trip.matrix(lp.n_cols)
        for i in range(trip.n_rows):
            start, end = mat.indptr[i], mat.indptr[i + 1]
            terms = " ".join(
                f"{v:+.17g} x{j}" for j, v in zip(mat.indices[start:end], mat.data[start:end])
            )
            buf.write(f" {kind}{i}: {terms or '0 x0'} {op} {rhs[i]:.17g}\n")
    buf.write("Bounds\n")
    for j in range(lp.n_cols):
        lo, hi = lp.lower[j], lp.upper[j]
        lo_s = "-inf" if np.isneginf(lo) else f"{lo:.17g}"
        hi_s = "+inf" if np.isposinf(hi) else f"{hi:.17g}"
        buf.write(f" {lo_s} <= x{j} <= {hi_s}\n")
    buf.write("End\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
