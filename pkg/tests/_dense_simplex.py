"""Independent dense tableau simplex used as a second-implementation oracle.

Deliberately naive: full tableau, two phases, Bland's rule throughout.
Shares no code with the production LP core.  Solves

    max  c @ x
    s.t. A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0

and a converter maps a bounded-variable problem onto that form by
shifting each variable to its lower bound and emitting finite upper
bounds as inequality rows.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def dense_lp_max(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, max_iter=20000):
    """Returns (status, objective, x) with status in {optimal, infeasible, unbounded}."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    rows = []
    rhs = []
    n_slack = 0
    if A_ub is not None and len(A_ub):
        n_slack = len(A_ub)
    if A_eq is not None and len(A_eq):
        for row, b in zip(np.asarray(A_eq, dtype=float), np.asarray(b_eq, dtype=float)):
            rows.append(np.concatenate([row, np.zeros(n_slack)]))
            rhs.append(float(b))
    if n_slack:
        for k, (row, b) in enumerate(
            zip(np.asarray(A_ub, dtype=float), np.asarray(b_ub, dtype=float))
        ):
            slack = np.zeros(n_slack)
            slack[k] = 1.0
            rows.append(np.concatenate([row, slack]))
            rhs.append(float(b))
    if not rows:
        # Only x >= 0 and slack-free: optimum is 0 unless some c > 0.
        if np.any(c > _EPS):
            return "unbounded", np.inf, None
        return "optimal", 0.0, np.zeros(n)
    A = np.vstack(rows)
    b = np.asarray(rhs, dtype=float)
    m, width = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Tableau with artificials: columns [x | slacks | artificials | rhs].
    tab = np.zeros((m + 1, width + m + 1))
    tab[:m, :width] = A
    tab[:m, width:width + m] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(width, width + m))

    def pivot(row, col):
        tab[row] /= tab[row, col]
        for r in range(m + 1):
            if r != row and abs(tab[r, col]) > 0:
                tab[r] -= tab[r, col] * tab[row]
        basis[row] = col

    def run_phase(cost, allowed):
        tab[m, :] = 0.0
        tab[m, :len(cost)] = -cost  # minimize -cost == maximize cost
        for r in range(m):
            if abs(tab[m, basis[r]]) > 0:
                tab[m] -= tab[m, basis[r]] * tab[r]
        for _ in range(max_iter):
            col = -1
            for j in allowed:  # Bland: first improving index
                if j not in basis and tab[m, j] < -_EPS:
                    col = j
                    break
            if col < 0:
                return "optimal"
            best, row = np.inf, -1
            for r in range(m):
                if tab[r, col] > _EPS:
                    ratio = tab[r, -1] / tab[r, col]
                    if ratio < best - _EPS or (
                        abs(ratio - best) <= _EPS and (row < 0 or basis[r] < basis[row])
                    ):
                        best, row = ratio, r
            if row < 0:
                return "unbounded"
            pivot(row, col)
        raise RuntimeError("dense simplex exceeded its iteration budget")

    art_cost = np.zeros(width + m)
    art_cost[width:] = -1.0
    status = run_phase(art_cost, range(width + m))
    if status != "optimal":
        raise RuntimeError("phase one cannot be unbounded")
    if -tab[m, -1] > 1e-7:
        return "infeasible", np.nan, None
    for r in range(m):  # expel residual artificials where possible
        if basis[r] >= width:
            for j in range(width):
                if abs(tab[r, j]) > 1e-7:
                    pivot(r, j)
                    break

    cost = np.zeros(width + m)
    cost[:n] = c
    status = run_phase(cost, range(width))
    if status == "unbounded":
        return "unbounded", np.inf, None
    x = np.zeros(width + m)
    for r in range(m):
        x[basis[r]] = tab[r, -1]
    return "optimal", float(c @ x[:n]), x[:n]


def solve_problem_dense(problem):
    """Bounded-variable problem -> shifted standard form -> dense solve.

    Returns (status, objective) where the objective includes the
    problem's constant offset, comparable to solve_lp's report.
    """
    lb, ub = problem.lb, problem.ub
    if np.any(lb > ub + 1e-12):
        return "infeasible", np.nan
    matrix = problem.matrix().toarray() if problem.num_rows else np.zeros((0, problem.num_cols))
    shift = matrix @ lb if problem.num_rows else np.zeros(0)
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for r, sense in enumerate(problem.row_sense):
        if sense == "E":
            A_eq.append(matrix[r])
            b_eq.append(problem.rhs[r] - shift[r])
        else:
            A_ub.append(matrix[r])
            b_ub.append(problem.rhs[r] - shift[r])
    for j in range(problem.num_cols):
        if np.isfinite(ub[j]):
            row = np.zeros(problem.num_cols)
            row[j] = 1.0
            A_ub.append(row)
            b_ub.append(ub[j] - lb[j])
    status, value, _ = dense_lp_max(
        problem.obj,
        A_eq=np.asarray(A_eq) if A_eq else None,
        b_eq=np.asarray(b_eq) if b_eq else None,
        A_ub=np.asarray(A_ub) if A_ub else None,
        b_ub=np.asarray(b_ub) if b_ub else None,
    )
    if status != "optimal":
        return status, np.nan
    return status, value + float(problem.obj @ lb) + problem.obj_offset
