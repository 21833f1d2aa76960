"""Dense two-phase primal simplex on a full tableau.

Solves ``min c @ x + c0`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
and ``x >= 0``.  Upper bounds on variables must be supplied as rows.

Entering variables are picked by Dantzig's rule; after a run of degenerate
pivots the solver switches to Bland's rule, which cannot cycle.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-11
HARRIS_TOL = 1e-10
SAFE_PIVOT = 1e-7
COST_TOL = 1e-9
FEAS_TOL = 1e-8
BREAKDOWN_TOL = 1e-6
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 40


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class CycleDetected(RuntimeError):
    pass


class NumericalBreakdown(ArithmeticError):
    pass


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    c0: float = 0.0

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class SimplexResult:
    status: Status
    x: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    basis: list[int] = field(default_factory=list)


class _Tableau:
    """Full tableau over standard-form data ``A x = b``; the last row holds
    reduced costs for ``cost`` and the last column the basic values."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list[int]):
        self.A = A
        self.b = b
        self.basis = basis
        self.cost = np.zeros(A.shape[1])
        self.iterations = 0
        self.M = np.zeros((A.shape[0] + 1, A.shape[1] + 1))
        self.refactor()

    def set_cost(self, cost: np.ndarray) -> None:
        self.cost = cost
        self.refactor()

    def refactor(self) -> None:
        """Rebuild the tableau from the original data and the current basis."""
        A, b = self.A, self.b
        B = A[:, self.basis]
        try:
            body = np.linalg.solve(B, np.column_stack([A, b]))
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("basis matrix became singular") from exc
        M = self.M
        M[:-1] = body
        cb = self.cost[self.basis]
        M[-1, :-1] = self.cost - cb @ body[:, :-1]
        M[-1, -1] = -cb @ body[:, -1]
        # basic columns are exact unit vectors
        M[:-1, self.basis] = np.eye(len(self.basis))
        M[-1, self.basis] = 0.0

    def pivot(self, row: int, col: int) -> None:
        M = self.M
        piv = M[row, col]
        if abs(piv) < PIVOT_TOL:
            raise NumericalBreakdown(f"pivot element {piv:.3g} below tolerance")
        M[row] /= piv
        colv = M[:, col].copy()
        colv[row] = 0.0
        M -= np.outer(colv, M[row])
        M[:, col] = 0.0
        M[row, col] = 1.0
        self.basis[row] = col
        self.iterations += 1
        if self.iterations % REFACTOR_EVERY == 0:
            self.refactor()

    def _leaving_row(self, col: int, bland: bool) -> int | None:
        M = self.M
        colv = M[:-1, col]
        rows = np.flatnonzero(colv > PIVOT_TOL)
        if rows.size == 0:
            return None
        rhs = np.maximum(M[rows, -1], 0.0)
        if bland:
            ratios = rhs / colv[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, best)]
            return int(min(ties, key=lambda r: self.basis[r]))
        # Harris two-pass test: allow a tiny infeasibility to pick a larger pivot
        step = np.min((rhs + HARRIS_TOL) / colv[rows])
        ok = rows[rhs / colv[rows] <= step]
        return int(ok[np.argmax(colv[ok])])

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        """Minimize the current cost over the columns flagged in ``allowed``."""
        degenerate = 0
        refreshed = False
        for _ in range(max_iter):
            M = self.M
            cost = M[-1, :-1]
            candidates = np.flatnonzero(allowed & (cost < -COST_TOL))
            if candidates.size == 0:
                if refreshed:
                    return Status.OPTIMAL
                # confirm optimality on a freshly factored tableau
                self.refactor()
                refreshed = True
                continue
            refreshed = False
            bland = degenerate >= DEGENERATE_STREAK
            if bland:
                order = candidates[:1]
            else:
                order = candidates[np.argsort(cost[candidates], kind="stable")]
            choice = None
            for col in order[:8]:
                row = self._leaving_row(int(col), bland)
                if row is None:
                    return Status.UNBOUNDED
                if choice is None or abs(M[row, col]) > abs(M[choice[0], choice[1]]):
                    choice = (row, int(col))
                if abs(M[row, col]) >= SAFE_PIVOT:
                    choice = (row, int(col))
                    break
            row, col = choice
            degenerate = degenerate + 1 if M[row, -1] <= FEAS_TOL else 0
            self.pivot(row, col)
        raise CycleDetected(f"no convergence after {max_iter} pivots")


def _scale_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if A.shape[0] == 0:
        return A, b
    s = np.max(np.abs(A), axis=1)
    s[s == 0] = 1.0
    return A / s[:, None], b / s


def solve(lp: LinearProgram, max_iter: int = 50_000) -> SimplexResult:
    c = np.asarray(lp.c, dtype=float)
    n = c.size
    A_ub = np.asarray(lp.A_ub, dtype=float).reshape(-1, n)
    b_ub = np.asarray(lp.b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if lp.A_eq is None else np.asarray(lp.A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if lp.b_eq is None else np.asarray(lp.b_eq, dtype=float).ravel()
    # equilibrate rows; G-derived rows can span many orders of magnitude
    A_ub, b_ub = _scale_rows(A_ub, b_ub)
    A_eq, b_eq = _scale_rows(A_eq, b_eq)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # standard form: [A_ub I; A_eq 0] [x; s] = b with every row flipped to b >= 0
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    needs_art = [i for i in range(m) if i >= m_ub or neg[i]]
    n_std = n + m_ub
    n_art = len(needs_art)
    A_full = np.zeros((m, n_std + n_art))
    A_full[:, :n_std] = A
    basis = [n + i if i < m_ub else -1 for i in range(m)]
    for j, i in enumerate(needs_art):
        A_full[i, n_std + j] = 1.0
        basis[i] = n_std + j
    tab = _Tableau(A_full, b, basis)

    if needs_art:
        # phase 1: minimize the sum of artificials
        cost = np.zeros(n_std + n_art)
        cost[n_std:] = 1.0
        tab.set_cost(cost)
        tab.run(np.ones(n_std + n_art, dtype=bool), max_iter)
        if -tab.M[-1, -1] > FEAS_TOL:
            return SimplexResult(Status.INFEASIBLE, iterations=tab.iterations)
        # drive remaining (zero-level) artificials out of the basis; rows
        # where that is impossible are redundant and dropped
        keep = []
        for r in range(m):
            if tab.basis[r] >= n_std:
                row = tab.M[r, :n_std]
                cols = np.flatnonzero(np.abs(row) > 1e-9)
                if cols.size:
                    tab.pivot(r, int(cols[np.argmax(np.abs(row[cols]))]))
                    keep.append(r)
            else:
                keep.append(r)
        phase1_iters = tab.iterations
        tab = _Tableau(A[keep], b[keep], [tab.basis[r] for r in keep])
        tab.iterations = phase1_iters
    cost = np.zeros(n_std)
    cost[:n] = c
    tab.set_cost(cost)
    status = tab.run(np.ones(n_std, dtype=bool), max_iter)
    if status is Status.UNBOUNDED:
        return SimplexResult(status, iterations=tab.iterations)

    xs = np.zeros(n_std)
    xs[tab.basis] = tab.M[:-1, -1]
    xs[np.abs(xs) < 1e-13] = 0.0
    x = xs[:n]
    # small negatives are round-off and surface through max_violation
    if np.any(xs < -BREAKDOWN_TOL):
        raise NumericalBreakdown(f"vertex has negative component {xs.min():.3g}")
    x = np.clip(x, 0.0, None)
    return SimplexResult(Status.OPTIMAL, x, float(c @ x + lp.c0), tab.iterations, list(tab.basis))


def max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint violation of ``x`` (0 when feasible)."""
    v = [0.0, float(max(0.0, -np.min(x, initial=0.0)))]
    if np.size(lp.b_ub):
        v.append(float(np.max(np.asarray(lp.A_ub) @ x - lp.b_ub, initial=0.0)))
    if lp.A_eq is not None and np.size(lp.b_eq):
        v.append(float(np.max(np.abs(np.asarray(lp.A_eq) @ x - lp.b_eq))))
    return max(v)
