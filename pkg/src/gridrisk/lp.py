"""Dense bounded-variable revised simplex.

Solves ``min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper``
with a two-phase method. Pricing is Dantzig's largest reduced cost; after a
run of degenerate pivots the solver switches to Bland's smallest-index rule
until the objective moves again, which rules out cycling. The basis inverse
is kept explicitly with product-form updates and refactorized periodically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class LpProblem:
    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.a_eq, self.b_eq = _rows(self.a_eq, self.b_eq, n, "equality")
        self.a_ub, self.b_ub = _rows(self.a_ub, self.b_ub, n, "inequality")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.size


def _rows(a, b, n, what):
    if a is None:
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape[1] != n or a.shape[0] != b.size:
        raise ValueError(f"{what} block has shape {a.shape} with rhs {b.size}, expected (*, {n})")
    return a, b


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    farkas: np.ndarray | None = None  # row multipliers proving infeasibility
    ray: np.ndarray | None = None  # improving direction when unbounded
    basis: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, a, b, cost, lower, upper, basis, state, x, tol, max_iter):
        self.a, self.b = a, b
        self.cost, self.lower, self.upper = cost, lower, upper
        self.basis = basis
        self.state = state
        self.x = x
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        self.binv = np.linalg.inv(self.a[:, self.basis])
        nonbasic = self.state != _BASIC
        rhs = self.b - self.a[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.binv @ rhs

    def duals(self) -> np.ndarray:
        return self.cost[self.basis] @ self.binv

    def run(self) -> tuple[str, np.ndarray | None]:
        """Iterate to optimality. Returns (status, ray)."""
        bland = False
        degenerate_run = 0
        since_refactor = 0
        tol = self.tol
        n = self.cost.size
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT, None
            y = self.duals()
            d = self.cost - y @ self.a
            st = self.state
            movable = self.lower < self.upper
            up_ok = (((st == _AT_LOWER) | (st == _FREE)) & (d < -tol)) & movable
            dn_ok = (((st == _AT_UPPER) | (st == _FREE)) & (d > tol)) & movable
            cand = up_ok | dn_ok
            if not cand.any():
                return OPTIMAL, None
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if up_ok[q] else -1.0

            alpha = self.binv @ self.a[:, q]
            rate = direction * alpha  # basic vars move by -rate * step
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            step = self.upper[q] - self.lower[q]
            leave = -1
            leave_to_upper = False
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = rate > tol
                inc = rate < -tol
                ratios = np.full(len(self.basis), np.inf)
                ratios[dec] = (xb[dec] - lb[dec]) / rate[dec]
                ratios[inc] = (ub[inc] - xb[inc]) / (-rate[inc])
            ratios = np.maximum(ratios, 0.0)
            best = ratios.min() if ratios.size else np.inf
            if best < step:
                ties = np.flatnonzero(ratios <= best + tol)
                if bland:
                    leave = int(ties[np.argmin(np.asarray(self.basis)[ties])])
                else:
                    leave = int(ties[np.argmax(np.abs(alpha[ties]))])
                step = ratios[leave]
                leave_to_upper = bool(inc[leave])
            if not np.isfinite(step):
                ray = np.zeros(n)
                ray[q] = direction
                ray[self.basis] = -rate
                return UNBOUNDED, ray

            self.iterations += 1
            if step <= tol:
                degenerate_run += 1
                if degenerate_run > 50:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            self.x[q] += direction * step
            self.x[self.basis] = xb - rate * step
            if leave < 0:
                # bound flip: entering variable crosses its whole range
                self.state[q] = _AT_UPPER if direction > 0 else _AT_LOWER
                continue
            out = self.basis[leave]
            self.x[out] = self.upper[out] if leave_to_upper else self.lower[out]
            self.state[out] = _AT_UPPER if leave_to_upper else _AT_LOWER
            self.state[q] = _BASIC
            self.basis[leave] = q
            piv = alpha[leave]
            row = self.binv[leave] / piv
            self.binv -= np.outer(alpha, row)
            self.binv[leave] = row
            since_refactor += 1
            if since_refactor >= 100:
                self.refactor()
                since_refactor = 0


def solve_lp(problem: LpProblem, tol: float = 1e-9, max_iter: int = 50_000) -> LpSolution:
    p = problem
    n = p.n_vars
    m_eq, m_ub = p.a_eq.shape[0], p.a_ub.shape[0]
    m = m_eq + m_ub

    # standard form with slacks: [A_eq 0; A_ub I] [x; s] = b
    a = np.zeros((m, n + m_ub))
    a[:m_eq, :n] = p.a_eq
    a[m_eq:, :n] = p.a_ub
    a[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([p.b_eq, p.b_ub])
    lower = np.concatenate([p.lower, np.zeros(m_ub)])
    upper = np.concatenate([p.upper, np.full(m_ub, np.inf)])
    cost = np.concatenate([p.c, np.zeros(m_ub)])
    ntot = n + m_ub

    state = np.where(np.isfinite(lower), _AT_LOWER, np.where(np.isfinite(upper), _AT_UPPER, _FREE))
    x = np.where(state == _AT_LOWER, lower, np.where(state == _AT_UPPER, upper, 0.0))

    # crash basis: a singleton column per row whose implied value fits its bounds
    basis: list[int] = []
    artificial_rows: list[int] = []
    nnz = np.count_nonzero(a, axis=0)
    for i in range(m):
        chosen = -1
        for j in np.flatnonzero((nnz == 1) & (a[i] != 0)):
            if state[j] == _BASIC:
                continue
            resid = b[i] - a[i] @ x + a[i, j] * x[j]
            val = resid / a[i, j]
            if lower[j] - tol <= val <= upper[j] + tol:
                chosen = int(j)
                x[j] = min(max(val, lower[j]), upper[j])
                break
        if chosen >= 0:
            state[chosen] = _BASIC
            basis.append(chosen)
        else:
            basis.append(-1)
            artificial_rows.append(i)

    n_art = len(artificial_rows)
    if n_art:
        resid = b - a @ x
        art = np.zeros((m, n_art))
        for k, i in enumerate(artificial_rows):
            art[i, k] = 1.0 if resid[i] >= 0 else -1.0
            basis[i] = ntot + k
        a = np.hstack([a, art])
        lower = np.concatenate([lower, np.zeros(n_art)])
        upper = np.concatenate([upper, np.full(n_art, np.inf)])
        x = np.concatenate([x, np.abs(resid[artificial_rows])])
        state = np.concatenate([state, np.full(n_art, _BASIC)])
        phase1_cost = np.concatenate([np.zeros(ntot), np.ones(n_art)])
        tab = _Tableau(a, b, phase1_cost, lower, upper, basis, state, x, tol, max_iter)
        status, _ = tab.run()
        if status == ITERATION_LIMIT:
            return LpSolution(ITERATION_LIMIT, iterations=tab.iterations)
        infeas = float(tab.x[ntot:].sum())
        if infeas > 1e-7 * max(1.0, np.abs(b).max()):
            return LpSolution(INFEASIBLE, farkas=tab.duals(), iterations=tab.iterations)
        # artificials are pinned at zero for phase 2
        tab.upper[ntot:] = 0.0
        tab.x[ntot:] = np.where(tab.state[ntot:] == _BASIC, tab.x[ntot:], 0.0)
        tab.state[ntot:] = np.where(tab.state[ntot:] == _BASIC, _BASIC, _AT_LOWER)
        tab.cost = np.concatenate([cost, np.zeros(n_art)])
    else:
        tab = _Tableau(a, b, cost, lower, upper, basis, state, x, tol, max_iter)

    status, ray = tab.run()
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, ray=ray[:n], iterations=tab.iterations)
    if status == ITERATION_LIMIT:
        return LpSolution(ITERATION_LIMIT, iterations=tab.iterations)
    tab.refactor()
    y = tab.duals()
    d = tab.cost - y @ tab.a
    xs = tab.x[:n].copy()
    return LpSolution(
        OPTIMAL,
        x=xs,
        objective=float(p.c @ xs),
        duals_eq=y[:m_eq],
        duals_ub=y[m_eq:],
        reduced_costs=d[:n],
        iterations=tab.iterations,
        basis=list(tab.basis),
    )
