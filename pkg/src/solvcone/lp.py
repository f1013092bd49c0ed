"""Dense two-phase simplex with Bland's anti-cycling rule.

Small problems only (tens of variables and rows).  The solver works on a
full tableau and is deliberately simple: every pivot touches the whole
tableau, which is cheap at this size and keeps the numerics transparent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9
PIVOT_TOL = 1e-9


class LPError(RuntimeError):
    """Numerical breakdown of the simplex (iteration budget, singular basis)."""


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    fun: float
    duals: np.ndarray | None  # one multiplier per (ub rows, eq rows)
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _run(T: np.ndarray, basis: list[int], ncols: int, max_iter: int, it: int) -> tuple[str, int]:
    """Minimise the objective held in the last tableau row over columns < ncols."""
    m = T.shape[0] - 1
    while True:
        if it >= max_iter:
            raise LPError(f"simplex did not terminate within {max_iter} pivots")
        neg = np.flatnonzero(T[-1, :ncols] < -TOL)
        if neg.size == 0:
            return "optimal", it
        entering = int(neg[0])
        column = T[:m, entering]
        # relative pivot tolerance guards against pivoting on round-off
        pos = np.flatnonzero(column > PIVOT_TOL * max(1.0, float(np.abs(column).max())))
        if pos.size == 0:
            return "unbounded", it
        ratios = np.maximum(T[pos, -1], 0.0) / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, best)]
        leaving = int(ties[np.argmin(np.asarray(basis)[ties])])
        _pivot(T, leaving, entering)
        basis[leaving] = entering
        it += 1


def linprog(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    free=(),
    max_iter: int = 5000,
) -> LPResult:
    """Minimise ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x == b_eq``.

    Variables are nonnegative except those listed in ``free``, which are
    split into positive and negative parts internally.  Returned duals are
    the multipliers ``y`` of the original rows (ub rows first) such that
    ``c - A^T y`` is the reduced-cost vector; for an infeasible problem they
    are the phase-one multipliers, which form a Farkas-type certificate.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape != (b_ub.size, n) or A_eq.shape != (b_eq.size, n):
        raise ValueError("constraint shapes do not match the objective")

    free = sorted(set(int(j) for j in free))
    # column layout: x (n) | negative parts of free vars | slacks for ub rows
    neg = np.zeros((n, len(free)))
    for k, j in enumerate(free):
        neg[j, k] = -1.0
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    A = np.zeros((m, n + len(free) + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n : n + len(free)] = A_ub @ neg
    A[:m_ub, n + len(free) :] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    A[m_ub:, n : n + len(free)] = A_eq @ neg
    b = np.concatenate([b_ub, b_eq])
    cost = np.concatenate([c, c @ neg, np.zeros(m_ub)])
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    nvar = A.shape[1]

    # phase one: artificial identity on every row
    T = np.zeros((m + 1, nvar + m + 1))
    T[:m, :nvar] = A
    T[:m, nvar : nvar + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :nvar] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nvar, nvar + m))
    status, it = _run(T, basis, nvar + m, max_iter, 0)
    if status != "optimal":
        raise LPError("phase one reported an unbounded ray")
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > TOL * scale:
        y = _duals(A, np.concatenate([np.zeros(nvar), np.ones(m)]), basis, nvar, m, sign, artificial=True)
        return LPResult("infeasible", None, np.inf, y, it)

    # drive artificials out of the basis; rows that cannot be cleared are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= nvar:
            row = np.abs(T[i, :nvar])
            j = int(np.argmax(row))
            if row[j] > 1e-9:
                _pivot(T, i, j)
                basis[i] = j
            else:
                keep[i] = False
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, nvar + 1))
    T2[:-1, :nvar] = T[rows, :nvar]
    T2[:-1, -1] = T[rows, -1]
    basis2 = [basis[i] for i in rows]
    T2[-1, :nvar] = cost
    for i, j in enumerate(basis2):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[i]
    status, it = _run(T2, basis2, nvar, max_iter, it)
    if status == "unbounded":
        return LPResult("unbounded", None, -np.inf, None, it)
    z = np.zeros(nvar)
    for i, j in enumerate(basis2):
        z[j] = T2[i, -1]
    # re-solve the final basis against the original rows to shed accumulated round-off
    try:
        zb = np.linalg.solve(A[np.ix_(rows, basis2)], b[rows])
        if np.all(zb >= -TOL):
            z[:] = 0.0
            z[basis2] = np.maximum(zb, 0.0)
    except np.linalg.LinAlgError:
        pass
    x = z[:n] + neg @ z[n : n + len(free)]
    y = _duals_from_rows(A, cost, basis2, rows, m, sign)
    return LPResult("optimal", x, float(c @ x), y, it)


def _duals(A, cost, basis, nvar, m, sign, artificial=False):
    full = np.hstack([A, np.eye(m)]) if artificial else A
    B = full[:, basis]
    try:
        y = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(B.T, cost[basis], rcond=None)[0]
    return y * sign


def _duals_from_rows(A, cost, basis, rows, m, sign):
    B = A[np.ix_(rows, basis)]
    y = np.zeros(m)
    try:
        y[rows] = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        y[rows] = np.linalg.lstsq(B.T, cost[basis], rcond=None)[0]
    return y * sign
