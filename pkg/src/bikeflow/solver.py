"""Exact optimization core.

LP relaxations are solved by a two-phase revised simplex that keeps
variable bounds implicit (they never become rows): nonbasic variables
rest at a bound, entering variables may simply flip bounds, and the
ratio test accounts for both bound directions.  Pricing is Dantzig's
rule; after a run of degenerate pivots the pivot selection permanently
switches to Bland's rule for the rest of the phase, which guarantees
termination.  The basis inverse is maintained by product-form updates
and refactorized periodically to contain drift.

Integer variables are handled by branch and bound with best-bound node
selection.  The branching variable is the integer column whose
fractional part lies closest to one half (ties to the lowest column
index); the down child (floor) is created before the up child.  All tie
breaking is by index, so repeated runs produce identical trees.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import BikeflowError, NumericalError
from .milp import MilpProblem

logger = logging.getLogger("bikeflow.solver")

FEAS_TOL = 1e-7      # primal row residual accepted as feasible
BOUND_TOL = 1e-9     # column bound violation accepted
INT_TOL = 1e-6       # integrality tolerance
PIVOT_TOL = 1e-9
COST_TOL = 1e-9      # reduced-cost threshold for entering candidates
PRUNE_TOL = 1e-9
REFRESH_EVERY = 128  # pivots between basis refactorizations
STALL_LIMIT = 80     # degenerate pivots before Bland's rule takes over
LOG_EVERY = 1000

_BASIC, _AT_LB, _AT_UB = 0, 1, 2


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL = "numerical"


class MilpStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    LIMIT_REACHED = "limit_reached"


@dataclass
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray]
    duals: Optional[np.ndarray]
    objective: float
    iterations: int


@dataclass
class MilpSolution:
    status: MilpStatus
    x: Optional[np.ndarray]
    objective: float  # nan without an incumbent
    bound: float
    gap: float
    node_count: int

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective": None if math.isnan(self.objective) else self.objective,
            "bound": None if math.isnan(self.bound) else self.bound,
            "gap": None if math.isnan(self.gap) else self.gap,
            "nodes": self.node_count,
        }


@dataclass(frozen=True)
class SolveLimits:
    time_seconds: float = 1800.0
    max_nodes: int = 1_000_000
    rel_gap: float = 1e-6


class _Simplex:
    """Bounded-variable revised simplex over Ax = b, lb <= x <= ub.

    The sparse matrix covers structural and slack columns only; the m
    phase-one artificial columns are signed unit vectors handled
    analytically, so branch-and-bound nodes can share one matrix.
    """

    def __init__(self, A: sp.csc_matrix, AT: sp.csr_matrix, b: np.ndarray,
                 c: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> None:
        self.m, n = A.shape
        if np.any(~np.isfinite(lb)):
            raise BikeflowError("all lower bounds must be finite")
        self.A = A
        self.AT = AT
        self.b = b.astype(float)
        self.n_struct = n
        self.n_all = n + self.m
        # Structural part starts at its lower bounds; artificials absorb
        # the residual with a matching sign.
        x0 = lb.copy()
        resid = self.b - A @ x0 if n else self.b.copy()
        self.signs = np.where(resid >= 0, 1.0, -1.0)
        self.c = np.concatenate([c, np.zeros(self.m)])
        self.lb = np.concatenate([lb, np.zeros(self.m)])
        self.ub = np.concatenate([ub, np.full(self.m, np.inf)])
        self.x = np.concatenate([x0, np.abs(resid)])
        self.vstat = np.full(self.n_all, _AT_LB, dtype=np.int8)
        self.basis = np.arange(n, self.n_all)
        self.vstat[self.basis] = _BASIC
        self.Binv = np.diag(self.signs)
        self.iterations = 0
        self._pivots_since_refresh = 0
        self._colbuf = np.zeros(self.m)

    # -- basis maintenance ---------------------------------------------------

    def _col(self, j: int) -> np.ndarray:
        """Dense column j into a shared buffer (valid until the next call)."""
        buf = self._colbuf
        buf[:] = 0.0
        if j < self.n_struct:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            buf[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        else:
            buf[j - self.n_struct] = self.signs[j - self.n_struct]
        return buf

    def _dense_basis(self) -> np.ndarray:
        dense = np.zeros((self.m, self.m))
        for pos, j in enumerate(self.basis):
            if j < self.n_struct:
                lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
                dense[self.A.indices[lo:hi], pos] = self.A.data[lo:hi]
            else:
                dense[j - self.n_struct, pos] = self.signs[j - self.n_struct]
        return dense

    def _residual_for_basis(self) -> np.ndarray:
        xn = self.x.copy()
        xn[self.basis] = 0.0
        resid = self.b - self.A @ xn[: self.n_struct]
        resid -= self.signs * xn[self.n_struct:]
        return resid

    def _refresh(self) -> bool:
        try:
            binv = np.linalg.inv(self._dense_basis())
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(binv)):
            return False
        self.Binv = binv
        self.x[self.basis] = self.Binv @ self._residual_for_basis()
        self._pivots_since_refresh = 0
        return True

    def _update_binv(self, alpha: np.ndarray, r: int) -> None:
        piv = alpha[r]
        new_row = self.Binv[r] / piv
        self.Binv -= alpha[:, None] * new_row[None, :]
        self.Binv[r] = new_row
        self._pivots_since_refresh += 1

    # -- core loop -------------------------------------------------------------

    def optimize(self, g: np.ndarray, max_iter: int) -> str:
        """Maximize g over the current basis; returns a status string."""
        bland = False
        stall = 0
        movable = (self.ub - self.lb) > 1e-12
        for _ in range(max_iter):
            self.iterations += 1
            if self._pivots_since_refresh >= REFRESH_EVERY:
                if not self._refresh():
                    return "numerical"
            y = g[self.basis] @ self.Binv
            z = np.empty(self.n_all)
            z[: self.n_struct] = g[: self.n_struct] - self.AT @ y
            z[self.n_struct:] = g[self.n_struct:] - self.signs * y
            nonbasic = self.vstat != _BASIC
            cand = nonbasic & movable & (
                ((self.vstat == _AT_LB) & (z > COST_TOL))
                | ((self.vstat == _AT_UB) & (z < -COST_TOL))
            )
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "optimal"
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[int(np.argmax(np.abs(z[idx])))])
            direction = 1.0 if self.vstat[j] == _AT_LB else -1.0
            alpha = self.Binv @ self._col(j)
            ad = alpha * direction
            xB = self.x[self.basis]
            steps = np.full(self.m, np.inf)
            down = ad > PIVOT_TOL
            if down.any():
                steps[down] = (xB[down] - self.lb[self.basis[down]]) / ad[down]
            up = ad < -PIVOT_TOL
            if up.any():
                steps[up] = (self.ub[self.basis[up]] - xB[up]) / (-ad[up])
            np.maximum(steps, 0.0, out=steps)
            min_step = float(steps.min()) if steps.size else np.inf
            flip = self.ub[j] - self.lb[j]
            if not np.isfinite(min(min_step, flip)):
                return "unbounded"
            if flip < min_step - 1e-12:
                # Entering variable runs to its other bound; basis unchanged.
                delta = flip
                self.x[j] += direction * delta
                self.x[self.basis] = xB - ad * delta
                self.vstat[j] = _AT_UB if direction > 0 else _AT_LB
            else:
                delta = min_step
                ties = np.flatnonzero(steps <= min_step + 1e-10 * (1.0 + min_step))
                if bland:
                    r = int(ties[int(np.argmin(self.basis[ties]))])
                else:
                    weights = np.abs(alpha[ties])
                    strong = ties[weights >= weights.max() - 1e-12]
                    r = int(strong[int(np.argmin(self.basis[strong]))])
                leave = int(self.basis[r])
                self.x[j] += direction * delta
                self.x[self.basis] = xB - ad * delta
                if ad[r] > 0:
                    self.x[leave] = self.lb[leave]
                    self.vstat[leave] = _AT_LB
                else:
                    self.x[leave] = self.ub[leave]
                    self.vstat[leave] = _AT_UB
                self.vstat[j] = _BASIC
                if abs(alpha[r]) < PIVOT_TOL:
                    return "numerical"
                self._update_binv(alpha, r)
                self.basis[r] = j
            if delta <= 1e-12:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
            else:
                stall = 0
        return "numerical"

    # -- phases ---------------------------------------------------------------

    def run(self, max_iter: int) -> str:
        scale = max(1.0, float(np.abs(self.b).sum()))
        phase1 = np.concatenate([np.zeros(self.n_struct), -np.ones(self.m)])
        status = self.optimize(phase1, max_iter)
        if status != "optimal":
            return status if status != "unbounded" else "numerical"
        if self.x[self.n_struct:].sum() > 1e-7 * scale:
            return "infeasible"
        self._expel_artificials()
        self.ub[self.n_struct:] = 0.0
        if not self._refresh():
            return "numerical"
        return self.optimize(self.c, max_iter)

    def _expel_artificials(self) -> None:
        """Pivot zero-valued basic artificials out where possible.

        A row that admits no structural pivot is linearly dependent; its
        artificial stays basic but locked at zero.
        """
        for r in range(self.m):
            if self.basis[r] < self.n_struct:
                continue
            row = self.AT @ self.Binv[r]
            for j in range(self.n_struct):
                if self.vstat[j] != _BASIC and abs(row[j]) > 1e-7:
                    alpha = self.Binv @ self._col(j)
                    leave = int(self.basis[r])
                    self._update_binv(alpha, r)
                    self.basis[r] = j
                    self.vstat[j] = _BASIC
                    self.vstat[leave] = _AT_LB
                    self.x[leave] = 0.0
                    break

    def duals(self) -> np.ndarray:
        return self.c[self.basis] @ self.Binv


def _build_standard(problem: MilpProblem) -> tuple[sp.csc_matrix, np.ndarray, np.ndarray, int]:
    """Equality standard form: slack columns absorb the <= rows."""
    matrix = problem.matrix()
    le_rows = [r for r, s in enumerate(problem.row_sense) if s == "L"]
    blocks = [matrix.tocsc()]
    if le_rows:
        slack = sp.csc_matrix(
            (np.ones(len(le_rows)), (le_rows, np.arange(len(le_rows)))),
            shape=(problem.num_rows, len(le_rows)),
        )
        blocks.append(slack)
    A = sp.hstack(blocks, format="csc") if problem.num_cols or le_rows else sp.csc_matrix(
        (problem.num_rows, 0)
    )
    c = np.concatenate([problem.obj, np.zeros(len(le_rows))])
    return A, c, problem.rhs.astype(float), len(le_rows)


class _LpEngine:
    """Reusable standard form so branch-and-bound nodes share structure."""

    def __init__(self, problem: MilpProblem) -> None:
        self.problem = problem
        self.A, self.c, self.b, self.n_slack = _build_standard(problem)
        self.AT = self.A.T.tocsr()
        self.max_iter = max(20_000, 60 * (problem.num_rows + problem.num_cols))

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> LpSolution:
        problem = self.problem
        if np.any(lb > ub + 1e-12):
            return LpSolution(LpStatus.INFEASIBLE, None, None, math.nan, 0)
        full_lb = np.concatenate([lb, np.zeros(self.n_slack)])
        full_ub = np.concatenate([ub, np.full(self.n_slack, np.inf)])
        simplex = _Simplex(self.A, self.AT, self.b, self.c, full_lb, full_ub)
        status = simplex.run(self.max_iter)
        if status == "infeasible":
            return LpSolution(LpStatus.INFEASIBLE, None, None, math.nan, simplex.iterations)
        if status == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, None, None, math.inf, simplex.iterations)
        if status != "optimal":
            return LpSolution(LpStatus.NUMERICAL, None, None, math.nan, simplex.iterations)
        x = simplex.x[: problem.num_cols]
        if not self._certify(x, lb, ub):
            return LpSolution(LpStatus.NUMERICAL, None, None, math.nan, simplex.iterations)
        objective = float(problem.obj @ x) + problem.obj_offset
        return LpSolution(LpStatus.OPTIMAL, x, simplex.duals(), objective, simplex.iterations)

    def _certify(self, x: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> bool:
        """Never return a wrong answer: check rows and bounds explicitly."""
        if np.any(x < lb - BOUND_TOL) or np.any(x > ub + BOUND_TOL):
            return False
        if self.problem.num_rows == 0:
            return True
        lhs = self.problem.matrix() @ x
        for r, sense in enumerate(self.problem.row_sense):
            if sense == "E":
                if abs(lhs[r] - self.problem.rhs[r]) > FEAS_TOL:
                    return False
            elif lhs[r] - self.problem.rhs[r] > FEAS_TOL:
                return False
        return True


def solve_lp(
    problem: MilpProblem,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
) -> LpSolution:
    """Solve the LP relaxation (integrality ignored) to proven optimality."""
    engine = _LpEngine(problem)
    return engine.solve(
        problem.lb if lb is None else np.asarray(lb, dtype=float),
        problem.ub if ub is None else np.asarray(ub, dtype=float),
    )


def _is_integral(x: np.ndarray, int_cols: np.ndarray) -> bool:
    if int_cols.size == 0:
        return True
    vals = x[int_cols]
    return bool(np.max(np.abs(vals - np.round(vals))) <= INT_TOL)


def _branch_col(x: np.ndarray, int_cols: np.ndarray) -> int:
    vals = x[int_cols]
    dist_int = np.abs(vals - np.round(vals))
    cand = int_cols[dist_int > INT_TOL]
    frac = x[cand] - np.floor(x[cand])
    return int(cand[int(np.argmin(np.abs(frac - 0.5)))])


def _gap(bound: float, incumbent: float) -> float:
    if math.isinf(incumbent):
        return math.inf
    return max(0.0, bound - incumbent) / max(1.0, abs(incumbent))


def solve_milp(
    problem: MilpProblem,
    limits: Optional[SolveLimits] = None,
    incumbent_callback: Optional[Callable[[np.ndarray, float], None]] = None,
    node_callback: Optional[Callable[[int, float, float], None]] = None,
) -> MilpSolution:
    """Branch and bound over the integer-masked columns.

    ``incumbent_callback(x, objective)`` fires on every new incumbent;
    ``node_callback(nodes_processed, best_bound, incumbent_obj)`` fires
    once per node pop, with the global bound at that moment.
    """
    limits = limits or SolveLimits()
    start = time.monotonic()
    engine = _LpEngine(problem)
    int_cols = np.flatnonzero(problem.integrality)

    root = engine.solve(problem.lb.copy(), problem.ub.copy())
    node_count = 1
    if root.status == LpStatus.INFEASIBLE:
        return MilpSolution(MilpStatus.INFEASIBLE, None, math.nan, math.nan, math.nan, node_count)
    if root.status == LpStatus.UNBOUNDED:
        raise BikeflowError("relaxation is unbounded; the model is malformed")
    if root.status == LpStatus.NUMERICAL:
        raise NumericalError("LP core failed on the root relaxation")

    incumbent_x: Optional[np.ndarray] = None
    incumbent_obj = -math.inf

    def accept(x: np.ndarray) -> None:
        nonlocal incumbent_x, incumbent_obj
        incumbent_x = x.copy()
        incumbent_obj = problem.objective_value(incumbent_x)
        if incumbent_callback is not None:
            incumbent_callback(incumbent_x, incumbent_obj)

    if _is_integral(root.x, int_cols):
        accept(root.x)
        return MilpSolution(
            MilpStatus.OPTIMAL, incumbent_x, incumbent_obj, root.objective, 0.0, node_count
        )

    heap: list[tuple[float, int]] = []
    store: dict[int, tuple[dict, dict, float, np.ndarray]] = {}
    next_id = 0
    heapq.heappush(heap, (-root.objective, next_id))
    store[next_id] = ({}, {}, root.objective, root.x)
    next_id += 1

    processed = 0
    status: Optional[MilpStatus] = None
    while heap:
        top_bound = -heap[0][0]
        bound_now = max(top_bound, incumbent_obj)
        if incumbent_x is not None:
            gap_now = _gap(bound_now, incumbent_obj)
            if gap_now <= limits.rel_gap:
                status = MilpStatus.OPTIMAL if gap_now <= 1e-12 else MilpStatus.FEASIBLE
                break
        if node_count >= limits.max_nodes or time.monotonic() - start > limits.time_seconds:
            status = MilpStatus.LIMIT_REACHED
            break

        _, nid = heapq.heappop(heap)
        lb_over, ub_over, bound, x = store.pop(nid)
        processed += 1
        if node_callback is not None:
            node_callback(processed, max(bound, incumbent_obj), incumbent_obj)
        if bound <= incumbent_obj + PRUNE_TOL:
            # Best-bound order: nothing left can beat the incumbent.
            break

        col = _branch_col(x, int_cols)
        floor_v = math.floor(x[col] + INT_TOL)
        for child_lb, child_ub in (
            (None, float(floor_v)),
            (float(floor_v) + 1.0, None),
        ):
            new_lb = dict(lb_over)
            new_ub = dict(ub_over)
            if child_lb is not None:
                new_lb[col] = max(child_lb, new_lb.get(col, problem.lb[col]))
            if child_ub is not None:
                new_ub[col] = min(child_ub, new_ub.get(col, problem.ub[col]))
            lb_arr = problem.lb.copy()
            ub_arr = problem.ub.copy()
            for c, v in new_lb.items():
                lb_arr[c] = v
            for c, v in new_ub.items():
                ub_arr[c] = v
            if lb_arr[col] > ub_arr[col]:
                continue
            lp = engine.solve(lb_arr, ub_arr)
            node_count += 1
            if node_count % LOG_EVERY == 0:
                logger.info(
                    "nodes=%d incumbent=%s bound=%.9g gap=%.3g",
                    node_count,
                    "none" if incumbent_x is None else f"{incumbent_obj:.9g}",
                    max(top_bound, incumbent_obj),
                    _gap(max(top_bound, incumbent_obj), incumbent_obj),
                )
            if lp.status == LpStatus.INFEASIBLE:
                continue
            if lp.status == LpStatus.NUMERICAL:
                raise NumericalError("LP core failed inside branch and bound")
            if lp.status == LpStatus.UNBOUNDED:
                raise BikeflowError("bounded node relaxation reported unbounded")
            if lp.objective <= incumbent_obj + PRUNE_TOL:
                continue
            if _is_integral(lp.x, int_cols):
                accept(lp.x)
            else:
                # A child can never truly beat its parent's relaxation;
                # clamping keeps the best-bound sequence monotone under
                # floating-point noise.
                child_bound = min(lp.objective, bound)
                heapq.heappush(heap, (-child_bound, next_id))
                store[next_id] = (new_lb, new_ub, child_bound, lp.x)
                next_id += 1

    if status is None:
        status = MilpStatus.OPTIMAL if incumbent_x is not None else MilpStatus.INFEASIBLE

    if heap and status != MilpStatus.INFEASIBLE:
        final_bound = max(-heap[0][0], incumbent_obj)
    else:
        final_bound = incumbent_obj if incumbent_x is not None else math.nan
    final_gap = (
        _gap(final_bound, incumbent_obj) if incumbent_x is not None else math.nan
    )
    objective = incumbent_obj if incumbent_x is not None else math.nan
    result = MilpSolution(status, incumbent_x, objective, final_bound, final_gap, node_count)
    logger.info(
        "finished status=%s objective=%s bound=%s gap=%s nodes=%d",
        status.value,
        f"{objective:.9g}" if incumbent_x is not None else "none",
        f"{final_bound:.9g}" if not math.isnan(final_bound) else "none",
        f"{final_gap:.3g}" if not math.isnan(final_gap) else "none",
        node_count,
    )
    return result


def lp_bound_check(problem: MilpProblem, limits: Optional[SolveLimits] = None) -> bool:
    """Relaxation dominance: LP optimum >= MILP optimum - 1e-6 (maximization)."""
    lp = solve_lp(problem)
    milp = solve_milp(problem, limits)
    if lp.status == LpStatus.INFEASIBLE and milp.status == MilpStatus.INFEASIBLE:
        return True
    if lp.status != LpStatus.OPTIMAL or milp.x is None:
        raise BikeflowError("bound check needs both solves to finish")
    return lp.objective >= milp.objective - 1e-6
