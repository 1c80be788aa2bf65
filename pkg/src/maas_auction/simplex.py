"""Dense two-phase simplex with Bland's anti-cycling rule.

Small and exact enough for the bundle LPs (five modes, four rows) and for
cross-checking the offline relaxations on toy instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .market import DomainError

TOL = 1e-9
PIVOT_TOL = 1e-11


@dataclass
class StandardLP:
    """optimize c.x  s.t.  A x (<=|>=|=) b,  lb <= x <= ub."""
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    maximize: bool = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.b), 0))
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m:
            raise DomainError("dimension mismatch between A, b and senses")
        if any(s not in ("<=", ">=", "=") for s in self.senses):
            raise DomainError("senses must be '<=', '>=' or '='")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise DomainError("bound vectors must match the number of variables")
        if np.any(self.lb > self.ub):
            raise DomainError("lower bound exceeds upper bound")
        if np.any(np.isinf(self.lb) & (self.lb > 0)) or np.any(np.isinf(self.ub) & (self.ub < 0)):
            raise DomainError("invalid infinite bound")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None  # d(objective)/d(b_i) for each original row
    iterations: int = 0
    basis: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _internalize(lp: StandardLP):
    """Rewrite bounds so every internal variable is >= 0: x = x0 + T y."""
    n = lp.c.size
    cols = []  # (original index, sign)
    x0 = np.zeros(n)
    extra_rows = []  # (internal col, upper bound)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    T = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    return x0, T, extra_rows


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    piv = tab[row]
    others = np.nonzero(np.abs(tab[:, col]) > 0)[0]
    for i in others:
        if i != row:
            tab[i] -= tab[i, col] * piv


def _run_phase(tab, basis, cost, allowed, max_iter, iters):
    """Bland's rule on the tableau; returns (status, iterations)."""
    m = tab.shape[0]
    while True:
        if iters >= max_iter:
            raise RuntimeError("simplex iteration limit reached")
        cb = cost[basis]
        reduced = cost - cb @ tab[:, :-1]
        entering = -1
        for j in np.nonzero(allowed & (reduced < -TOL))[0]:
            entering = int(j)
            break
        if entering < 0:
            return "optimal", iters
        column = tab[:, entering]
        best_row, best_ratio = -1, np.inf
        for i in range(m):
            if column[i] > PIVOT_TOL:
                ratio = tab[i, -1] / column[i]
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[best_row]
                ):
                    best_row, best_ratio = i, ratio
        if best_row < 0:
            return "unbounded", iters
        _pivot(tab, best_row, entering)
        basis[best_row] = entering
        iters += 1


def solve_lp(lp: StandardLP, max_iter: int = 100_000) -> LPResult:
    """Solve a general-form LP with the two-phase simplex method."""
    x0, T, extra_rows = _internalize(lp)
    n_int = T.shape[1]
    A = lp.A @ T
    b = lp.b - lp.A @ x0
    senses = list(lp.senses)
    n_orig_rows = A.shape[0]
    if extra_rows:
        rows = np.zeros((len(extra_rows), n_int))
        for r, (k, hi) in enumerate(extra_rows):
            rows[r, k] = 1.0
        A = np.vstack([A, rows])
        b = np.concatenate([b, [hi for _, hi in extra_rows]])
        senses += ["<="] * len(extra_rows)
    c_int = T.T @ lp.c
    c_min = -c_int if lp.maximize else c_int

    m = A.shape[0]
    if m == 0:
        # only bounds: optimal at y = 0 unless some cost improves without limit
        if np.any(c_min < -TOL):
            return LPResult("unbounded")
        x = x0.copy()
        return LPResult("optimal", x, float(lp.c @ x), np.zeros(0), 0)

    # standardize rows to b >= 0
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    senses = [
        s if sg > 0 else {"<=": ">=", ">=": "<=", "=": "="}[s] for s, sg in zip(senses, sign)
    ]
    n_slack = sum(1 for s in senses if s != "=")
    n_art = sum(1 for s in senses if s != "<=")
    N = n_int + n_slack + n_art
    tab = np.zeros((m, N + 1))
    tab[:, :n_int] = A
    tab[:, -1] = b
    basis = [0] * m
    k_slack, k_art = n_int, n_int + n_slack
    art_cols = []
    for i, s in enumerate(senses):
        if s == "<=":
            tab[i, k_slack] = 1.0
            basis[i] = k_slack
            k_slack += 1
        else:
            if s == ">=":
                tab[i, k_slack] = -1.0
                k_slack += 1
            tab[i, k_art] = 1.0
            basis[i] = k_art
            art_cols.append(k_art)
            k_art += 1
    is_art = np.zeros(N, dtype=bool)
    is_art[art_cols] = True
    iters = 0

    # phase 1
    if art_cols:
        cost1 = is_art.astype(float)
        status, iters = _run_phase(tab, basis, cost1, np.ones(N, dtype=bool), max_iter, iters)
        infeas = float(cost1[basis] @ tab[:, -1])
        if infeas > TOL * max(1.0, float(np.abs(b).max())):
            return LPResult("infeasible", iterations=iters)
        # drive artificial variables out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if is_art[basis[i]]:
                cand = np.nonzero((~is_art) & (np.abs(tab[i, :-1]) > 1e-9))[0]
                if cand.size:
                    _pivot(tab, i, int(cand[0]))
                    basis[i] = int(cand[0])
                else:
                    keep[i] = False
        row_map = np.nonzero(keep)[0]
        tab = tab[keep]
        basis = [basis[i] for i in row_map]
    else:
        row_map = np.arange(m)

    # phase 2
    cost2 = np.zeros(N)
    cost2[:n_int] = c_min
    status, iters = _run_phase(tab, basis, cost2, ~is_art, max_iter, iters)
    if status == "unbounded":
        return LPResult("unbounded", iterations=iters)

    # recompute the basic solution from the original data for accuracy
    full = np.zeros((m, N))
    full[:, :n_int] = A
    k_slack, k_art = n_int, n_int + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            full[i, k_slack] = 1.0
            k_slack += 1
        else:
            if s == ">=":
                full[i, k_slack] = -1.0
                k_slack += 1
            full[i, k_art] = 1.0
            k_art += 1
    B = full[np.ix_(row_map, basis)]
    try:
        xb = np.linalg.solve(B, b[row_map])
        w = np.linalg.solve(B.T, cost2[basis])
    except np.linalg.LinAlgError:
        xb = tab[:, -1].copy()
        w = np.zeros(len(basis))
    xb = np.where(np.abs(xb) < 1e-13, 0.0, xb)
    y_all = np.zeros(N)
    y_all[basis] = xb
    y = np.maximum(y_all[:n_int], 0.0)
    x = x0 + T @ y
    duals_std = np.zeros(m)
    duals_std[row_map] = w
    duals = duals_std * sign
    if lp.maximize:
        duals = -duals
    obj = float(lp.c @ x)
    return LPResult("optimal", x, obj, duals[:n_orig_rows], iters, list(basis))
