"""Offline compact model: one column per feasible (user, bid, service slot).

The LP relaxation gives per-slot dual prices q(t) and per-user utilities u_i.
The integer version is solved by a depth-first branch-and-bound written here;
the LP relaxations underneath use HiGHS (through scipy) by default, or the
in-repo simplex for small instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .bundles import BundleObjective, feasible_bundle, price_gate
from .market import Bundle, DomainError, ModeCatalog, UserRequest, clip_window, slots_needed
from .simplex import StandardLP, solve_lp

INT_TOL = 1e-7


class InternalError(RuntimeError):
    """A result that contradicts optimality or a cross-check."""


@dataclass(frozen=True)
class CompactColumn:
    user_id: int
    bid_id: int
    slot: int  # service (departure) slot
    resources: float
    price: float
    start: int  # first slot the column occupies
    end: int  # last slot, inclusive
    bundle: Bundle | None = None

    @property
    def unit_price(self) -> float:
        return self.price / self.resources

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.user_id, self.bid_id, self.slot)


def service_slots(user: UserRequest, horizon: int, rule: str = "flex", slack: int = 0) -> range:
    """Slots a user may be served in.

    flex: [O_i, O_i + slack]; literal: [order slot, O_i].
    """
    if rule == "flex":
        return range(user.departure_slot, min(user.departure_slot + slack, horizon - 1) + 1)
    if rule == "literal":
        return range(user.placed_at, user.departure_slot + 1)
    raise DomainError(f"unknown departure rule {rule!r}")


def build_columns(users: Sequence[UserRequest], catalog: ModeCatalog, horizon: int,
                  mechanism: str = "payg", price_mode: str = "none",
                  slot_prices: Sequence[float] | None = None, departure_rule: str = "flex",
                  slack: int = 0, objective=BundleObjective.MIN_INCONVENIENCE,
                  slot_minutes: float = 1.0) -> list[CompactColumn]:
    """Every (user, bid, slot) whose bundle constraints and price gate are satisfiable."""
    if price_mode not in ("none", "posted"):
        raise DomainError(f"unknown price mode {price_mode!r}")
    if price_mode == "posted" and slot_prices is None:
        raise DomainError("posted price mode needs slot prices")
    cols = []
    for user in users:
        for bid in user.bids:
            bundle = feasible_bundle(user, bid, catalog, objective)
            if bundle is None:
                continue
            res = user.resources(bid)
            length = slots_needed(bundle, slot_minutes) if mechanism == "payg" else user.package_length
            for t in service_slots(user, horizon, departure_rule, slack):
                if price_mode == "posted" and not price_gate(bid.price, res, slot_prices[t]):
                    continue
                start, end = clip_window(t, max(length, 1), horizon)
                cols.append(CompactColumn(user.user_id, bid.bid_id, t, res, bid.price, start, end, bundle))
    return cols


@dataclass
class OfflineSolution:
    columns: list[CompactColumn]
    x: np.ndarray
    objective: float
    capacities: np.ndarray
    status: str = "optimal"
    integral: bool = False
    proven_optimal: bool = True
    nodes: int = 0
    q: np.ndarray | None = None  # per-slot dual prices (LP only)
    u: dict[int, float] = field(default_factory=dict)  # per-user utilities (LP only)
    dual_objective: float | None = None
    prices: np.ndarray | None = None  # repaired unit prices per slot
    repair_log: list[dict] = field(default_factory=list)

    @property
    def duality_gap(self) -> float | None:
        if self.dual_objective is None:
            return None
        return abs(self.objective - self.dual_objective) / max(1.0, abs(self.objective))

    def selected(self, tol: float = 1e-9) -> list[tuple[CompactColumn, float]]:
        return [(c, float(v)) for c, v in zip(self.columns, self.x) if v > tol]

    def loads(self) -> np.ndarray:
        out = np.zeros(self.capacities.size)
        for c, v in self.selected():
            out[c.start:c.end + 1] += c.resources * v
        return out

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "integral": self.integral,
            "proven_optimal": self.proven_optimal,
            "nodes": self.nodes,
            "dual_objective": self.dual_objective,
            "q": None if self.q is None else [float(v) for v in self.q],
            "u": {str(k): v for k, v in sorted(self.u.items())},
            "prices": None if self.prices is None else [float(v) for v in self.prices],
            "selected": [
                {"user_id": c.user_id, "bid_id": c.bid_id, "slot": c.slot, "value": v,
                 "resources": c.resources, "price": c.price, "window": [c.start, c.end]}
                for c, v in self.selected()
            ],
            "repair_log": self.repair_log,
        }


def slot_bands(columns: Sequence[CompactColumn],
               band: tuple[float, float] | None = None) -> dict[int, tuple[float, float]]:
    """(b_min, b_max) per service slot: the fixed band, or the unit bids of the slot's columns."""
    out: dict[int, tuple[float, float]] = {}
    for c in columns:
        if band is not None:
            out[c.slot] = band
            continue
        lo, hi = out.get(c.slot, (math.inf, -math.inf))
        out[c.slot] = (min(lo, c.unit_price), max(hi, c.unit_price))
    return out


def price_rows(columns: Sequence[CompactColumn], capacities, capacity: float,
               band: tuple[float, float] | None = None):
    """Linear rows enforcing b >= Q * p_t for every chosen column, p_t linear in slot-t load.

    With L_t the resources of columns served at t, choosing column c needs
    L_t <= k_c = C * (b_c / Q_c - b_min) / b_max. Since L_t <= A_t the big-M
    form  L_t + (A_t - k_c) x_c <= A_t  is exact for binary x. Columns whose
    unit bid is below b_min are returned as `banned`.
    """
    capacities = np.asarray(capacities, dtype=float)
    bands = slot_bands(columns, band)
    by_slot: dict[int, list[int]] = {}
    for j, c in enumerate(columns):
        by_slot.setdefault(c.slot, []).append(j)
    rows, cols, vals, rhs, banned = [], [], [], [], []
    r = 0
    for j, c in enumerate(columns):
        lo, hi = bands[c.slot]
        if c.unit_price < lo - 1e-12:
            banned.append(j)
            continue
        if hi <= 0:
            continue
        kappa = capacity * (c.unit_price - lo) / hi
        big_m = capacities[c.slot]
        if kappa >= big_m:
            continue
        for k in by_slot[c.slot]:
            coef = columns[k].resources + (big_m - kappa if k == j else 0.0)
            rows.append(r)
            cols.append(k)
            vals.append(coef)
        rhs.append(big_m)
        r += 1
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, len(columns)))
    return A, np.array(rhs, dtype=float), banned


def _model(columns: Sequence[CompactColumn], capacities: np.ndarray):
    """Sparse constraint matrix: slot capacity rows, then one row per user."""
    users = sorted({c.user_id for c in columns})
    uidx = {u: i for i, u in enumerate(users)}
    n_slots = capacities.size
    rows, cols, vals = [], [], []
    for j, c in enumerate(columns):
        for t in range(c.start, c.end + 1):
            rows.append(t)
            cols.append(j)
            vals.append(c.resources)
        rows.append(n_slots + uidx[c.user_id])
        cols.append(j)
        vals.append(1.0)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n_slots + len(users), len(columns)))
    rhs = np.concatenate([capacities, np.ones(len(users))])
    prices = np.array([c.price for c in columns])
    return A, rhs, prices, users


class _Relaxation:
    """LP relaxation of the compact model with per-column bounds."""

    def __init__(self, columns, capacities, backend="highs", extra=None):
        if backend not in ("highs", "simplex"):
            raise DomainError(f"unknown LP backend {backend!r}")
        self.columns = list(columns)
        self.capacities = np.asarray(capacities, dtype=float)
        self.A, self.rhs, self.prices, self.users = _model(self.columns, self.capacities)
        self.n_base_rows = self.A.shape[0]
        if extra is not None and extra[0].shape[0]:
            self.A = sparse.vstack([self.A, extra[0]]).tocsr()
            self.rhs = np.concatenate([self.rhs, extra[1]])
        self.backend = backend

    def solve(self, lb=None, ub=None):
        """Returns (status, x, objective, row duals)."""
        n = len(self.columns)
        lb = np.zeros(n) if lb is None else lb
        ub = np.ones(n) if ub is None else ub
        if self.backend == "highs":
            res = linprog(-self.prices, A_ub=self.A, b_ub=self.rhs, bounds=np.column_stack([lb, ub]),
                          method="highs")
            if res.status == 2:
                return "infeasible", None, None, None
            if res.status != 0:
                raise InternalError(f"LP solver failed: {res.message}")
            return "optimal", res.x, -res.fun, -res.ineqlin.marginals
        lp = StandardLP(self.prices, self.A.toarray(), self.rhs, ("<=",) * self.A.shape[0],
                        lb=lb, ub=ub, maximize=True)
        res = solve_lp(lp)
        if res.status != "optimal":
            return res.status, None, None, None
        return "optimal", res.x, res.objective, res.duals


def _empty_solution(columns, capacities) -> OfflineSolution:
    return OfflineSolution(list(columns), np.zeros(len(columns)), 0.0, np.asarray(capacities, float),
                           integral=True, q=np.zeros(len(capacities)), dual_objective=0.0)


def dual_utilities(columns: Sequence[CompactColumn], q: np.ndarray) -> dict[int, float]:
    """u_i = max(0, max over the user's columns of b - Q * sum of q over the footprint)."""
    out: dict[int, float] = {}
    for c in columns:
        surplus = c.price - c.resources * float(q[c.start:c.end + 1].sum())
        out[c.user_id] = max(out.get(c.user_id, 0.0), surplus)
    return out


def solve_offline_lp(columns: Sequence[CompactColumn], capacities, backend: str = "highs",
                     check_duals: bool = True) -> OfflineSolution:
    """LP relaxation with dual prices and user utilities."""
    capacities = np.asarray(capacities, dtype=float)
    if np.any(capacities < 0):
        raise DomainError("capacities must be nonnegative")
    if not columns:
        return _empty_solution(columns, capacities)
    relax = _Relaxation(columns, capacities, backend)
    n = len(columns)
    # x <= 1 is implied by the user rows, so the bound is inactive
    status, x, obj, duals = relax.solve(np.zeros(n), np.full(n, np.inf))
    if status != "optimal":
        raise InternalError(f"offline LP is {status}; the zero allocation is always feasible")
    n_slots = capacities.size
    q = np.maximum(duals[:n_slots], 0.0)
    u_solver = {u: max(float(v), 0.0) for u, v in zip(relax.users, duals[n_slots:])}
    u = dual_utilities(columns, q)
    if check_duals:
        for uid, val in u.items():
            scale = max(1.0, max(c.price for c in columns if c.user_id == uid))
            if abs(val - u_solver[uid]) > 1e-7 * scale:
                raise InternalError(f"utility cross-check failed for user {uid}: {val} vs {u_solver[uid]}")
    dual_obj = float(capacities @ q) + math.fsum(u_solver.values())
    integral = bool(np.all(np.minimum(np.abs(x), np.abs(1 - x)) < INT_TOL))
    return OfflineSolution(list(columns), x, float(obj), capacities, integral=integral, q=q,
                           u=u, dual_objective=dual_obj)


def greedy_incumbent(columns: Sequence[CompactColumn], A, rhs: np.ndarray,
                     banned: Sequence[int] = ()) -> tuple[float, np.ndarray]:
    """Best of two greedy passes (by price, by unit price) as a starting incumbent."""
    A = sparse.csc_matrix(A)
    skip = set(banned)
    best_val, best_x = 0.0, np.zeros(len(columns))
    for key in (lambda j: (-columns[j].price, j), lambda j: (-columns[j].unit_price, j)):
        used = np.zeros(A.shape[0])
        x = np.zeros(len(columns))
        for j in sorted(range(len(columns)), key=key):
            if j in skip:
                continue
            col = A[:, j].toarray().ravel()
            if np.all(used + col <= rhs + 1e-9):
                used += col
                x[j] = 1.0
        val = math.fsum(columns[j].price for j in np.nonzero(x)[0])
        if val > best_val:
            best_val, best_x = val, x
    return best_val, best_x


def _round_down(x: np.ndarray) -> np.ndarray:
    return (x > 1 - INT_TOL).astype(float)


def solve_offline_ip(columns: Sequence[CompactColumn], capacities, node_limit: int = 1_000_000,
                     backend: str = "highs", price_capacity: float | None = None,
                     band: tuple[float, float] | None = None) -> OfflineSolution:
    """Depth-first branch-and-bound on the most fractional column.

    Ties on fractionality go to the larger bid price. When the node limit is
    hit the incumbent is returned with proven_optimal = False. Passing
    `price_capacity` (the system capacity C) adds the load-dependent price
    gate of every chosen column as linear rows (see price_rows).
    """
    capacities = np.asarray(capacities, dtype=float)
    if not columns:
        return _empty_solution(columns, capacities)
    columns = list(columns)
    extra, banned = None, []
    if price_capacity is not None:
        A_p, b_p, banned = price_rows(columns, capacities, price_capacity, band)
        extra = (A_p, b_p)
    relax = _Relaxation(columns, capacities, backend, extra)
    n = len(columns)
    prices = relax.prices
    inc_val, inc_x = greedy_incumbent(columns, relax.A, relax.rhs, banned)
    root_ub = np.ones(n)
    root_ub[banned] = 0.0
    stack = [(np.zeros(n), root_ub)]
    nodes = 0
    proven = True
    while stack:
        if nodes >= node_limit:
            proven = False
            break
        lb, ub = stack.pop()
        nodes += 1
        status, x, bound, _ = relax.solve(lb, ub)
        if status != "optimal":
            continue
        if bound <= inc_val + 1e-9 * max(1.0, abs(inc_val)):
            continue
        dist = np.minimum(x, 1.0 - x)
        frac = np.nonzero(dist > INT_TOL)[0]
        if frac.size == 0:
            xi = np.round(x)
            val = float(prices @ xi)
            if val > inc_val:
                inc_val, inc_x = val, xi
            continue
        xr = _round_down(x)
        val = float(prices @ xr)
        if val > inc_val:
            inc_val, inc_x = val, xr
        j = int(max(frac, key=lambda k: (round(dist[k], 12), prices[k], -k)))
        lo_lb, lo_ub = lb.copy(), ub.copy()
        lo_ub[j] = 0.0
        hi_lb, hi_ub = lb.copy(), ub.copy()
        hi_lb[j] = 1.0
        stack.append((lo_lb, lo_ub))
        stack.append((hi_lb, hi_ub))
    x = inc_x
    obj = math.fsum(prices[j] for j in np.nonzero(x > 0.5)[0])
    return OfflineSolution(columns, x, obj, capacities, status="optimal" if proven else "node_limit",
                           integral=True, proven_optimal=proven, nodes=nodes)


def endogenous_price_repair(solution: OfflineSolution, capacity: float,
                            base_load: np.ndarray | None = None,
                            band: tuple[float, float] | None = None,
                            max_iter: int | None = None) -> OfflineSolution:
    """Drop accepted columns priced out by the linear load price until nothing changes.

    p_t = b_max / C * z_t + b_min with z_t the resources allocated to columns
    served at slot t (plus `base_load`, zero by default). b_min/b_max come from
    `band` or from the candidate columns at slot t. One column, the lowest unit
    bid among the violators, is removed per iteration.
    """
    cols = solution.columns
    n_slots = solution.capacities.size
    base = np.zeros(n_slots) if base_load is None else np.asarray(base_load, dtype=float)
    bounds: dict[int, tuple[float, float]] = {}
    for c in cols:
        lo, hi = bounds.get(c.slot, (math.inf, -math.inf))
        bounds[c.slot] = (min(lo, c.unit_price), max(hi, c.unit_price))
    x = solution.x.copy()
    log: list[dict] = []
    limit = len(cols) + 1 if max_iter is None else max_iter
    prices = np.zeros(n_slots)
    status = solution.status
    for it in range(limit + 1):
        load = base.copy()
        for j in np.nonzero(x > 1e-9)[0]:
            load[cols[j].slot] += cols[j].resources * x[j]
        load = np.minimum(load, capacity)
        for t in range(n_slots):
            if band is not None:
                lo, hi = band
            elif t in bounds:
                lo, hi = bounds[t]
            else:
                lo, hi = 0.0, 0.0
            prices[t] = hi / capacity * load[t] + lo
        bad = [j for j in np.nonzero(x > 1e-9)[0]
               if not price_gate(cols[j].price, cols[j].resources, prices[cols[j].slot])]
        if not bad:
            break
        if it == limit:
            status = "repair_cap"  # last iterate, still violating
            break
        j = min(bad, key=lambda k: (cols[k].unit_price, cols[k].user_id, cols[k].bid_id))
        log.append({"iteration": it, "user_id": cols[j].user_id, "bid_id": cols[j].bid_id,
                    "slot": cols[j].slot, "unit_bid": cols[j].unit_price,
                    "price": float(prices[cols[j].slot])})
        x[j] = 0.0
    obj = math.fsum(cols[j].price * x[j] for j in np.nonzero(x > 0)[0])
    return replace(solution, x=x, objective=obj, prices=prices.copy(), repair_log=log, status=status,
                   q=solution.q if not log else None, u=solution.u if not log else {},
                   dual_objective=solution.dual_objective if not log else None)
