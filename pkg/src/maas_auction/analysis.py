"""Competitive ratios, welfare ratios and mechanism audits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .bundles import BundleObjective, feasible_bundle
from .demand import DemandConfig, generate
from .market import SYDNEY_MODES, BidItem, CapacityLedger, DomainError, ModeCatalog, Scenario, UserRequest
from .offline import CompactColumn, InternalError, build_columns, solve_offline_ip, solve_offline_lp
from .online import CRITICAL, SlotOutcome, auction_step
from .pricing import PriceKind, alpha_from_ratio

DEFAULT_FACTORS = tuple(float(f) for f in np.linspace(0.5, 1.5, 21))


def _outcomes(trace) -> list[SlotOutcome]:
    if hasattr(trace, "outcomes"):
        return list(trace.outcomes)
    return list(trace)


@dataclass
class RatioReport:
    mechanism: str
    theta: float
    theta_raw: float
    welfare_ratio: float | None
    ratios: list[float]
    alphas: list[float]
    online_welfare: float | None = None
    offline_welfare: float | None = None

    @property
    def gap(self) -> float | None:
        if self.welfare_ratio is None:
            return None
        return self.welfare_ratio - self.theta

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gap"] = self.gap
        return d


def _priced(trace) -> list[SlotOutcome]:
    priced = [o for o in _outcomes(trace) if o.priced]
    if not priced:
        raise DomainError("trace has no priced slot")
    return priced


def theta_payg(ratios: Sequence[float]) -> float:
    """(1 - R_max)(1 - 1/alpha) with alpha taken at R_max, before clamping."""
    r = max(ratios)
    if not math.isfinite(r):
        return 0.0
    alpha = alpha_from_ratio(r)
    return (1.0 - r) * (1.0 - 1.0 / alpha)


def theta_paap(ratios: Sequence[float]) -> float:
    """1 - 1/alpha with alpha = min over slots, i.e. taken at the largest slot ratio."""
    r = max(ratios)
    if not math.isfinite(r):
        return 0.0
    return 1.0 - 1.0 / alpha_from_ratio(r)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def competitive_ratio_payg(trace) -> float:
    return _clamp(theta_payg([o.ratio for o in _priced(trace)]))


def competitive_ratio_paap(trace) -> float:
    return _clamp(theta_paap([o.ratio for o in _priced(trace)]))


def competitive_ratio(trace, mechanism: str) -> float:
    if mechanism == "payg":
        return competitive_ratio_payg(trace)
    if mechanism == "paap":
        return competitive_ratio_paap(trace)
    raise DomainError(f"unknown mechanism {mechanism!r}")


def welfare_ratio(online: float, offline: float, tol: float = 1e-9) -> float:
    """online / offline with 1 for the empty instance."""
    if offline <= tol * max(1.0, abs(online)):
        if online <= tol:
            return 1.0
        raise InternalError(f"online welfare {online} beats an offline optimum of {offline}")
    return online / offline


def ratio_report(trace, mechanism: str, offline_welfare: float | None = None) -> RatioReport:
    priced = _priced(trace)
    ratios = [o.ratio for o in priced]
    raw = theta_payg(ratios) if mechanism == "payg" else theta_paap(ratios)
    online = math.fsum(o.welfare for o in _outcomes(trace))
    wr = None if offline_welfare is None else welfare_ratio(online, offline_welfare)
    return RatioReport(mechanism, _clamp(raw), raw, wr, ratios,
                       [o.alpha if o.alpha is not None else math.nan for o in priced],
                       online, offline_welfare)


def offline_optimum(scenario: Scenario, node_limit: int = 1_000_000):
    """The comparison oracle: integer optimum for PAYG, LP optimum for PAAP."""
    cols = build_columns(scenario.users, scenario.catalog, scenario.horizon, scenario.mechanism,
                         slot_minutes=scenario.slot_minutes)
    caps = np.full(scenario.horizon, scenario.capacity)
    if scenario.mechanism == "payg":
        return solve_offline_ip(cols, caps, node_limit)
    return solve_offline_lp(cols, caps)


# ---------------------------------------------------------------- identities and feasibility

def primal_dual_identity_check(trace) -> tuple[float, int]:
    """Largest |dP - (1 - 1/alpha) dD| over every dual update, and the number of updates."""
    worst, n = 0.0, 0
    for o in _outcomes(trace):
        for s in o.steps:
            worst = max(worst, s.residual)
            n += 1
    return worst, n


def capacity_residual(outcome: SlotOutcome) -> float:
    """How far the slot's reservations exceed the capacity it started with (0 if they fit)."""
    used = math.fsum(a.reserved for a in outcome.allocations)
    return max(0.0, used - outcome.available)


def ledger_residual(allocations: Iterable, capacity: float, horizon: int) -> float:
    """Recompute per-slot loads from allocations and report the worst overshoot of capacity."""
    loads = [[] for _ in range(horizon)]
    for a in allocations:
        for t in range(a.window[0], a.window[1] + 1):
            loads[t].append(a.reserved)
    return max([0.0] + [math.fsum(ld) - capacity for ld in loads])


def algorithm_utilities(outcome: SlotOutcome) -> dict[int, float]:
    """u_i implied by the dual updates: max over the user's updates of b - Q_ij q_before, floored at 0."""
    u: dict[int, float] = {}
    for s in outcome.steps:
        u[s.user_id] = max(u.get(s.user_id, 0.0), s.price - s.resources * s.q_before)
    return u


def dual_feasibility_residual(outcome: SlotOutcome, users: Sequence[UserRequest], catalog: ModeCatalog,
                              objective=BundleObjective.MIN_INCONVENIENCE) -> float:
    """max over auctioned bids with a bundle of b - (Q q_final + u), floored at 0.

    Users cut by the critical index never enter the auction and are skipped.
    """
    if not outcome.priced or not math.isfinite(outcome.ratio):
        return 0.0
    q = outcome.q_final
    u = algorithm_utilities(outcome)
    price = outcome.posted_price or 0.0
    worst = 0.0
    for user in users:
        if outcome.rejected.get(user.user_id) == CRITICAL:
            continue
        for bid in user.bids:
            if feasible_bundle(user, bid, catalog, objective, price) is None:
                continue
            slack = user.resources(bid) * q + u.get(user.user_id, 0.0) - bid.price
            worst = max(worst, -slack / max(1.0, bid.price))
    return worst


# ---------------------------------------------------------------- incentive compatibility

TABLE2 = {
    # case: (misreport accepted, truthful accepted, comparison of misreport to truthful utility)
    1: (True, False, "<"),
    2: (False, False, "="),
    3: (True, True, "="),
    4: (False, False, "="),
    5: (False, True, "<"),
    6: (True, True, "="),
}


def table2_case(v: float, p: float, b_hat: float) -> int | None:
    """Which of the six strict orderings of (v, p, b_hat) holds; None on ties."""
    if len({v, p, b_hat}) < 3:
        return None
    if v < p < b_hat:
        return 1
    if v < b_hat < p:
        return 2
    if p < v < b_hat:
        return 3
    if b_hat < v < p:
        return 4
    if b_hat < p < v:
        return 5
    return 6  # p < b_hat < v


def _single_user(resources: float, price: float) -> UserRequest:
    # D = T = Q gives Q = D^2 / T; a taxi-only trip fits in the generous delay budget
    d = float(resources)
    return UserRequest(1, d, 0, 10.0 * d, 1e9, (BidItem(1, d, price),))


def single_bid_utility(v: float, b: float, payment: float, resources: float = 1.0,
                       catalog: ModeCatalog = SYDNEY_MODES) -> tuple[bool, float]:
    """Run a one-user PAYG slot posting unit price payment/Q and return (accepted, utility at v)."""
    unit = payment / resources
    user = _single_user(resources, b)
    ledger = CapacityLedger(10.0 * resources, 1)
    out = auction_step(ledger, 0, [user], catalog, "payg", PriceKind.LINEAR, (unit, unit))
    if not out.allocations:
        return False, 0.0
    a = out.allocations[0]
    return True, v - a.payment


@dataclass
class Table2Row:
    case: int
    v: float
    p: float
    b_hat: float
    misreport_accepted: bool
    truthful_accepted: bool
    misreport_utility: float
    truthful_utility: float
    expected: tuple
    matches: bool


def table2_audit(points: Iterable[tuple[float, float, float]] | None = None) -> list[Table2Row]:
    """Simulate each (v, p, b_hat) and compare with the table's prediction."""
    if points is None:
        points = [(3.0, 5.0, 7.0), (3.0, 5.0, 4.0), (5.0, 3.0, 7.0),
                  (4.0, 5.0, 3.0), (5.0, 4.0, 3.0), (7.0, 3.0, 5.0)]
    rows = []
    for v, p, b_hat in points:
        case = table2_case(v, p, b_hat)
        if case is None:
            continue
        acc_hat, u_hat = single_bid_utility(v, b_hat, p)
        acc, u = single_bid_utility(v, v, p)
        exp = TABLE2[case]
        cmp = "<" if u_hat < u - 1e-12 else (">" if u_hat > u + 1e-12 else "=")
        ok = (acc_hat, acc, cmp) == exp
        rows.append(Table2Row(case, v, p, b_hat, acc_hat, acc, u_hat, u, exp, ok))
    return rows


@dataclass
class ICViolation:
    user_id: int
    deviation: float  # multiplicative factor (PAYG) or additive shift (PAAP)
    truthful_utility: float
    misreport_utility: float
    cause: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ICReport:
    mechanism: str
    checks: int = 0
    violations: list[ICViolation] = field(default_factory=list)
    eps: float = 1e-9

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: "ICReport") -> None:
        self.checks += other.checks
        self.violations.extend(other.violations)

    def causes(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.cause] = out.get(v.cause, 0) + 1
        return out

    def to_dict(self) -> dict:
        return {"mechanism": self.mechanism, "checks": self.checks, "ok": self.ok,
                "violations": len(self.violations), "causes": self.causes(),
                "examples": [v.to_dict() for v in self.violations[:10]]}


def _payg_utility(out: SlotOutcome, uid: int, truth: dict[int, float]) -> tuple[float, int | None]:
    for a in out.allocations:
        if a.user_id == uid:
            return truth[a.bid_id] - a.payment, a.bid_id
    return 0.0, None


def _cause(truthful, misreport, truthful_bid, misreport_bid) -> str:
    if truthful_bid is None:
        return "won_when_truthful_lost"
    if misreport_bid != truthful_bid:
        return "switched_bid"
    return "lower_payment"


def ic_audit_payg(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], catalog: ModeCatalog,
                  target: int, factors: Sequence[float] = DEFAULT_FACTORS, kind=PriceKind.EXPONENTIAL,
                  band: tuple[float, float] | None = None,
                  objective=BundleObjective.MIN_INCONVENIENCE, eps: float = 1e-9) -> ICReport:
    """Scale the target's bids by each factor, rerun the slot on a ledger copy, compare utilities.

    Utility is v - payment for the served bid under the posted-price payment, 0 if unserved.
    """
    user = next(u for u in users if u.user_id == target)
    truth = {b.bid_id: b.price for b in user.bids}
    base = auction_step(ledger.copy(), t, users, catalog, "payg", kind, band, objective)
    u0, bid0 = _payg_utility(base, target, truth)
    rep = ICReport("payg", eps=eps)
    for f in factors:
        if f == 1.0:
            continue
        liar = user.with_bids(BidItem(b.bid_id, b.requested_time, b.price * f) for b in user.bids)
        field_ = [liar if u.user_id == target else u for u in users]
        out = auction_step(ledger.copy(), t, field_, catalog, "payg", kind, band, objective)
        u1, bid1 = _payg_utility(out, target, truth)
        rep.checks += 1
        if u1 > u0 + eps:
            rep.violations.append(ICViolation(target, float(f), u0, u1, _cause(u0, u1, bid0, bid1)))
    return rep


def paap_lp_utility(columns: Sequence[CompactColumn], capacities, target: int,
                    truth: dict[int, float], deltas: dict[int, float] | float = 0.0) -> float:
    """Re-solve the LP with the target's bids shifted and price its share at the dual price.

    Utility = sum over the target's columns of x * (v - Q * sum of q over the footprint).
    """
    shifted = []
    for c in columns:
        if c.user_id == target:
            d = deltas.get(c.bid_id, 0.0) if isinstance(deltas, dict) else deltas
            c = replace(c, price=max(c.price + d, 0.0))
        shifted.append(c)
    sol = solve_offline_lp(shifted, capacities, check_duals=False)
    q = sol.q if sol.q is not None else np.zeros(len(capacities))
    total = 0.0
    for c, x in sol.selected():
        if c.user_id != target:
            continue
        pay = c.resources * math.fsum(q[c.start:c.end + 1])
        total += x * (truth[c.bid_id] - pay)
    return total


def ic_audit_paap(columns: Sequence[CompactColumn], capacities, target: int,
                  deltas: Sequence[float], eps: float = 1e-9) -> ICReport:
    """Additive shifts of every target bid; flags any shift whose utility beats truth by > eps."""
    truth = {c.bid_id: c.price for c in columns if c.user_id == target}
    rep = ICReport("paap", eps=eps)
    if not truth:
        return rep
    u0 = paap_lp_utility(columns, capacities, target, truth)
    for d in deltas:
        if d == 0:
            continue
        u1 = paap_lp_utility(columns, capacities, target, truth, float(d))
        rep.checks += 1
        if u1 > u0 + eps:
            rep.violations.append(ICViolation(target, float(d), u0, u1,
                                              "overbid" if d > 0 else "underbid"))
    return rep


# ---------------------------------------------------------------- randomized drivers

def random_slot(rng: np.random.Generator, mechanism: str = "payg", capacity: float | None = None,
                max_users: int = 8, max_bids: int = 3, tight: bool = False) -> Scenario:
    """A one-slot generator scenario with 1..max_users users.

    tight=True sets the capacity to a random 30-90% of the summed largest requests,
    so users actually compete.
    """
    seed = int(rng.integers(2**31))
    n = int(rng.integers(1, max_users + 1))
    cap = capacity or float(rng.choice([20.0, 50.0, 100.0]))
    common = dict(horizon=1, capacity=cap, bands=[(0, 1, float(n), 0.0)], bid_count_range=(1, max_bids))
    if mechanism == "payg":
        cfg = DemandConfig.payg(**common)
    else:
        cfg = DemandConfig.paap(**common, distance_range=(1.0, 18.0), weekend_factor_range=(1.0, 1.0))
    sc = generate(cfg, seed)
    if tight:
        sc.capacity = float(rng.uniform(0.3, 0.9)) * math.fsum(u.max_resources() for u in sc.users)
    return sc


def ic_trials_payg(trials: int, seed: int = 0, factors: Sequence[float] = DEFAULT_FACTORS,
                   kind=PriceKind.EXPONENTIAL) -> ICReport:
    rng = np.random.default_rng(seed)
    rep = ICReport("payg")
    for _ in range(trials):
        sc = random_slot(rng, "payg", tight=True)
        target = int(rng.choice([u.user_id for u in sc.users]))
        ledger = CapacityLedger(sc.capacity, sc.horizon)
        rep.merge(ic_audit_payg(ledger, 0, sc.users, sc.catalog, target, factors, kind, sc.price_band))
    return rep


def ic_trials_paap(trials: int, seed: int = 0, deltas: Sequence[float] | None = None) -> ICReport:
    rng = np.random.default_rng(seed)
    rep = ICReport("paap")
    for _ in range(trials):
        sc = random_slot(rng, "paap", tight=True)
        target = int(rng.choice([u.user_id for u in sc.users]))
        cols = build_columns(sc.users, sc.catalog, sc.horizon, "paap")
        grid = deltas
        if grid is None:
            top = max((c.price for c in cols if c.user_id == target), default=1.0)
            grid = [top * (f - 1.0) for f in DEFAULT_FACTORS]
        rep.merge(ic_audit_paap(cols, np.full(sc.horizon, sc.capacity), target, grid))
    return rep


@dataclass
class MechanismAudit:
    slots: int = 0
    updates: int = 0
    identity_residual: float = 0.0
    capacity_residual: float = 0.0
    dual_residual: float = 0.0
    negative_q_slots: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def audit_slots(trials: int, seed: int = 0, mechanism: str = "payg", max_users: int = 100,
                kind=PriceKind.EXPONENTIAL) -> MechanismAudit:
    """Random one-slot auctions: identity, capacity and dual-feasibility residuals."""
    rng = np.random.default_rng(seed)
    rep = MechanismAudit()
    for _ in range(trials):
        sc = random_slot(rng, mechanism, max_users=max_users)
        ledger = CapacityLedger(sc.capacity, sc.horizon)
        out = auction_step(ledger, 0, sc.users, sc.catalog, mechanism, kind, sc.price_band)
        res, n = primal_dual_identity_check([out])
        rep.slots += 1
        rep.updates += n
        rep.identity_residual = max(rep.identity_residual, res)
        rep.capacity_residual = max(rep.capacity_residual, capacity_residual(out))
        rep.dual_residual = max(rep.dual_residual, dual_feasibility_residual(out, sc.users, sc.catalog))
        rep.negative_q_slots += int(out.negative_q)
    return rep

