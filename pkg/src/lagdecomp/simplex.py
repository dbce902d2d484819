"""Dense two-phase tableau simplex with Bland's rule.

Solves ``min c.x + offset  s.t.  A_ub x <= b_ub,  A_eq x = b_eq`` over free
variables (split as ``x = x+ - x-``). The tableau is periodically rebuilt from
the basis with a fresh factorization, and the reported solution is recomputed
from the final basis, so accumulated pivot error does not reach the answer.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"


class LpSolution(NamedTuple):
    value: float
    x: np.ndarray | None
    status: str
    pivots: int = 0


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int], tol: float):
        self.A = A  # constraint matrix in standard form (rows, cols), b >= 0
        self.b = b
        self.basis = list(basis)
        self.tol = tol
        self.pivots = 0
        self.rebuild()

    def rebuild(self):
        B = self.A[:, self.basis]
        self.T = np.linalg.solve(B, np.column_stack([self.A, self.b]))

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = np.linalg.solve(self.A[:, self.basis].T, cost[self.basis])
        return cost - self.A.T @ y

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.pivots += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_pivots: int, refresh: int = 50) -> str:
        """Bland's rule: lowest-index improving column, lowest-index basic variable on ratio ties."""
        since = 0
        while True:
            if self.pivots >= max_pivots:
                return ITERATION_LIMIT
            cb = cost[self.basis]
            d = cost - cb @ self.T[:, :-1]
            cand = np.flatnonzero((d < -self.tol) & allowed)
            if cand.size == 0:
                # confirm with exact reduced costs from a fresh factorization
                self.rebuild()
                since = 0
                d = self.reduced_costs(cost)
                cand = np.flatnonzero((d < -self.tol) & allowed)
                if cand.size == 0:
                    return OPTIMAL
            j = int(cand[0])
            col = self.T[:, j]
            rhs = self.T[:, -1]
            pos = col > self.tol
            if not pos.any():
                return UNBOUNDED
            ratios = np.full(col.shape, np.inf)
            ratios[pos] = np.maximum(rhs[pos], 0.0) / col[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + self.tol * max(1.0, abs(rmin)))
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
            since += 1
            if since >= refresh:
                self.rebuild()
                since = 0


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, offset=0.0, tol=1e-9, max_pivots=200000) -> LpSolution:
    c = np.asarray(c, dtype=np.float64)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, dtype=np.float64).reshape(-1, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=np.float64).ravel()
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=np.float64).reshape(-1, nv)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: x+ (nv), x- (nv), slacks (m_ub), artificials (m)
    ncol = 2 * nv + m_ub
    A = np.zeros((m, ncol + m))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:2 * nv] = -A_ub
    A[:m_ub, 2 * nv:ncol] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    A[m_ub:, nv:2 * nv] = -A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)
    basis = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis.append(2 * nv + i)
        else:
            A[i, ncol + i] = 1.0
            basis.append(ncol + i)
    total_cols = ncol + m

    tab = _Tableau(A, b, basis, tol)
    allowed = np.ones(total_cols, dtype=bool)
    art = np.zeros(total_cols)
    art[ncol:] = 1.0
    if any(j >= ncol for j in basis):
        status = tab.run(art, allowed, max_pivots)
        if status == ITERATION_LIMIT:
            return LpSolution(np.nan, None, status, tab.pivots)
        tab.rebuild()
        if tab.T[:, -1] @ art[tab.basis] > max(tol, 1e-7 * (1.0 + np.abs(b).max(initial=0.0))):
            return LpSolution(np.inf, None, INFEASIBLE, tab.pivots)
        _drive_out_artificials(tab, ncol)
    allowed[ncol:] = False
    cost = np.zeros(total_cols)
    cost[:nv] = c
    cost[nv:2 * nv] = -c
    status = tab.run(cost, allowed, max_pivots)
    if status == UNBOUNDED:
        return LpSolution(-np.inf, None, UNBOUNDED, tab.pivots)
    if status == ITERATION_LIMIT:
        return LpSolution(np.nan, None, status, tab.pivots)
    tab.rebuild()
    full = np.zeros(total_cols)
    full[tab.basis] = tab.T[:, -1]
    x = full[:nv] - full[nv:2 * nv]
    return LpSolution(float(c @ x + offset), x, OPTIMAL, tab.pivots)


def _drive_out_artificials(tab: _Tableau, ncol: int):
    keep = []
    for r in range(len(tab.basis)):
        if tab.basis[r] < ncol:
            keep.append(r)
            continue
        row = tab.T[r, :ncol]
        nz = np.flatnonzero(np.abs(row) > 1e-9)
        if nz.size:
            tab.pivot(r, int(nz[0]))
            keep.append(r)
    if len(keep) < len(tab.basis):
        # redundant equality rows: drop them
        tab.A = tab.A[keep]
        tab.b = tab.b[keep]
        tab.basis = [tab.basis[r] for r in keep]
    tab.rebuild()
