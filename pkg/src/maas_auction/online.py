"""Per-slot online primal-dual mechanisms (pay-as-you-go and pay-as-a-package)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .bundles import BundleObjective, feasible_bundle
from .market import (EPS, Allocation, CapacityLedger, DomainError, ModeCatalog, ReservationError,
                     UserRequest, clip_window, slots_needed)
from .pricing import PriceKind, PriceParams, alpha_from_ratio, slot_price_bounds, unit_price

# rejection reasons
CRITICAL = "critical_index"
DUAL_GATE = "dual_price"
INFEASIBLE = "infeasible"
CAPACITY = "capacity"


@dataclass
class DualStep:
    """One dual-price update, kept so the primal-dual identity can be re-checked."""
    user_id: int
    bid_id: int
    price: float
    resources: float
    ratio_resources: float  # max-resource (PAYG) or min-resource (PAAP) of the user
    available: float
    alpha: float
    q_before: float
    q_after: float
    fraction: float = 1.0
    raw_fraction: float = 1.0
    accepted: bool = False

    @property
    def primal_delta(self) -> float:
        return self.price * self.fraction

    @property
    def dual_delta(self) -> float:
        utility = self.price - self.ratio_resources * self.q_before
        return self.available * (self.q_after - self.q_before) + utility

    @property
    def residual(self) -> float:
        return abs(self.primal_delta - (1.0 - 1.0 / self.alpha) * self.dual_delta)


@dataclass
class SlotOutcome:
    slot: int
    mechanism: str
    available: float
    participants: list[int] = field(default_factory=list)
    allocations: list[Allocation] = field(default_factory=list)
    rejected: dict[int, str] = field(default_factory=dict)
    steps: list[DualStep] = field(default_factory=list)
    q_trace: list[float] = field(default_factory=list)
    ratio: float | None = None
    alpha: float | None = None
    posted_price: float | None = None
    b_min: float | None = None
    b_max: float | None = None
    negative_q: bool = False

    @property
    def q_final(self) -> float:
        return self.q_trace[-1] if self.q_trace else 0.0

    @property
    def welfare(self) -> float:
        return math.fsum(a.welfare for a in self.allocations)

    @property
    def accepted_users(self) -> list[int]:
        return sorted({a.user_id for a in self.allocations if a.fraction > 0})

    @property
    def priced(self) -> bool:
        return self.ratio is not None

    def dual_payments(self) -> dict[tuple[int, int], float]:
        """Payments q(t) * Q * x, the rule used inside the rolling-horizon loop."""
        q = self.q_final
        return {(a.user_id, a.bid_id): q * a.resources * a.fraction for a in self.allocations}

    def to_record(self) -> dict:
        return {
            "event": "slot",
            "slot": self.slot,
            "mechanism": self.mechanism,
            "available": self.available,
            "ratio": self.ratio,
            "alpha": self.alpha,
            "posted_price": self.posted_price,
            "b_min": self.b_min,
            "b_max": self.b_max,
            "q_trace": self.q_trace,
            "negative_q": self.negative_q,
            "welfare": self.welfare,
            "participants": self.participants,
            "allocations": [a.to_dict() for a in self.allocations],
            "rejected": {str(k): v for k, v in sorted(self.rejected.items())},
        }


def _user_order(users: Sequence[UserRequest]) -> list[UserRequest]:
    return sorted(users, key=lambda u: (-u.best_unit_price(), u.user_id))


def _bid_order(user: UserRequest):
    return sorted(user.bids, key=lambda b: (-user.unit_price(b), b.bid_id))


def critical_index(max_resources: Sequence[float], available: float) -> int:
    """1-based k with sum_{<k} <= A < sum_{<=k}; users 1..k-1 participate.

    Returns len + 1 when everybody fits.
    """
    total = 0.0
    for k, q in enumerate(max_resources, start=1):
        total += q
        if total > available:
            return k
    return len(max_resources) + 1


def _degenerate(outcome: SlotOutcome, users: Sequence[UserRequest]) -> SlotOutcome:
    for u in users:
        outcome.rejected[u.user_id] = CAPACITY
    outcome.ratio = math.inf
    return outcome


def run_payg_slot(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], catalog: ModeCatalog,
                  posted_price: float = 0.0, objective=BundleObjective.MIN_INCONVENIENCE,
                  slot_minutes: float = 1.0) -> SlotOutcome:
    """Binary-acceptance primal-dual auction for one slot. Reserves on `ledger`."""
    avail = ledger.available_at(t)
    out = SlotOutcome(t, "payg", avail, participants=sorted(u.user_id for u in users))
    if not users:
        return out
    if avail <= EPS:
        return _degenerate(out, users)
    order = _user_order(users)
    qbar = [u.max_resources() for u in order]
    ratio = max(qbar) / avail
    alpha = alpha_from_ratio(ratio)
    out.ratio, out.alpha = ratio, alpha
    k = critical_index(qbar, avail)
    for u in order[k - 1:]:
        out.rejected[u.user_id] = CRITICAL

    q = 0.0
    for user, qmax in zip(order[:k - 1], qbar[:k - 1]):
        passed = []
        saw_gate = False
        for bid in _bid_order(user):
            unit = user.unit_price(bid)
            if q > unit:
                continue
            saw_gate = True
            bundle = feasible_bundle(user, bid, catalog, objective, posted_price)
            if bundle is None:
                continue
            q_new = q * (1.0 + qmax / avail) + bid.price / ((alpha - 1.0) * avail)
            step = DualStep(user.user_id, bid.bid_id, bid.price, user.resources(bid), qmax, avail,
                            alpha, q, q_new)
            out.steps.append(step)
            passed.append((bid, bundle, step))
            q = q_new
            out.q_trace.append(q)
        if not passed:
            out.rejected[user.user_id] = INFEASIBLE if saw_gate else DUAL_GATE
            continue
        # winner maximizes b - Qmax * q at the current dual price; first in order on ties
        bid, bundle, step = max(passed, key=lambda p: p[0].price - qmax * q)
        res = user.resources(bid)
        window = clip_window(user.departure_slot, slots_needed(bundle, slot_minutes), ledger.horizon)
        try:
            ledger.reserve(window[0], window[1], res)
        except ReservationError:
            out.rejected[user.user_id] = CAPACITY
            continue
        step.accepted = True
        out.allocations.append(Allocation(user.user_id, bid.bid_id, t, 1.0, res, bid.price,
                                          res * posted_price, window, bundle))
    return out


def paap_fraction(user: UserRequest, bid, basis: Sequence | None = None) -> float:
    """Raw package fraction b_j * sum(Q) / (Q_j * sum(b)) before clamping.

    The sums run over `basis` (default: all of the user's bids).
    """
    basis = user.bids if basis is None else basis
    sum_q = math.fsum(user.resources(b) for b in basis)
    sum_b = math.fsum(b.price for b in basis)
    return bid.price * sum_q / (user.resources(bid) * sum_b)


def run_paap_slot(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], catalog: ModeCatalog,
                  posted_price: float = 0.0, objective=BundleObjective.MIN_INCONVENIENCE,
                  fraction_basis: str = "feasible") -> SlotOutcome:
    """Fractional-acceptance primal-dual auction for package requests at one slot.

    fraction_basis "feasible" normalizes the package fraction over the bids that
    have a bundle at the posted price; "all" sums over every bid of the user.
    """
    if fraction_basis not in ("feasible", "all"):
        raise DomainError(f"unknown fraction basis {fraction_basis!r}")
    avail = ledger.available_at(t)
    out = SlotOutcome(t, "paap", avail, participants=sorted(u.user_id for u in users))
    if not users:
        return out
    if avail <= EPS:
        return _degenerate(out, users)
    order = _user_order(users)
    ratio = min(u.min_resources() for u in order) / avail
    alpha = alpha_from_ratio(ratio)
    out.ratio, out.alpha = ratio, alpha

    q = 0.0
    for user in order:
        qmin = user.min_resources()
        bundles = {b.bid_id: feasible_bundle(user, b, catalog, objective, posted_price) for b in user.bids}
        basis = None
        if fraction_basis == "feasible":
            basis = [b for b in user.bids if bundles[b.bid_id] is not None]
        picked = []
        saw_gate = False
        for bid in _bid_order(user):
            unit = user.unit_price(bid)
            if q > unit:
                continue
            saw_gate = True
            bundle = bundles[bid.bid_id]
            if bundle is None:
                continue
            raw = paap_fraction(user, bid, basis)
            x = min(1.0, raw)
            q_new = (q * (1.0 + qmin / avail) + bid.price * x / ((alpha - 1.0) * avail)
                     - (1.0 - x) * bid.price / avail)
            step = DualStep(user.user_id, bid.bid_id, bid.price, user.resources(bid), qmin, avail,
                            alpha, q, q_new, x, raw)
            out.steps.append(step)
            picked.append([bid, bundle, step, x])
            q = q_new
            out.q_trace.append(q)
            if q < 0:
                out.negative_q = True
        if not picked:
            out.rejected[user.user_id] = INFEASIBLE if saw_gate else DUAL_GATE
            continue
        # keep the package a convex combination of bids, then fit the remaining capacity
        total = math.fsum(p[3] for p in picked)
        if total > 1.0:
            for p in picked:
                p[3] /= total
        window = clip_window(user.departure_slot, user.package_length, ledger.horizon)
        amount = math.fsum(user.resources(p[0]) * p[3] for p in picked)
        room = ledger.min_available(*window)
        if room <= EPS:
            out.rejected[user.user_id] = CAPACITY
            continue
        if amount > room:
            scale = room / amount
            for p in picked:
                p[3] *= scale
            amount = math.fsum(user.resources(p[0]) * p[3] for p in picked)
        ledger.reserve(window[0], window[1], min(amount, room))
        for bid, bundle, step, x in picked:
            if x <= 0:
                continue
            step.accepted = True
            res = user.resources(bid)
            out.allocations.append(Allocation(user.user_id, bid.bid_id, t, x, res, bid.price,
                                              res * posted_price * x, window, bundle, step.raw_fraction))
    return out


def slot_price(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], mechanism: str,
               kind=PriceKind.EXPONENTIAL, band: tuple[float, float] | None = None):
    """Posted unit price for slot t from the load at t-1. Returns (price, b_min, b_max)."""
    b_min, b_max = band if band is not None else slot_price_bounds(users)
    load = 0.0 if t == 0 else ledger.capacity - ledger.available_at(t - 1)
    kind = PriceKind(kind)
    alpha = None
    if kind is PriceKind.EXPONENTIAL:
        avail = ledger.available_at(t)
        if avail > EPS:
            if mechanism == "payg":
                ratio = max(u.max_resources() for u in users) / avail
            else:
                ratio = min(u.min_resources() for u in users) / avail
            alpha = alpha_from_ratio(ratio)
        if alpha is None or alpha <= 1.0 + 1e-12:
            alpha = math.e  # degenerate slot; nobody can be served anyway
    params = PriceParams(ledger.capacity, b_min, b_max, kind, alpha)
    return unit_price(load, params), b_min, b_max


def auction_step(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], catalog: ModeCatalog,
                 mechanism: str = "payg", kind=PriceKind.EXPONENTIAL,
                 band: tuple[float, float] | None = None,
                 objective=BundleObjective.MIN_INCONVENIENCE, slot_minutes: float = 1.0,
                 fraction_basis: str = "feasible") -> SlotOutcome:
    """Price the slot, run the mechanism, charge Q * p_t for what is served."""
    if mechanism not in ("payg", "paap"):
        raise DomainError(f"unknown mechanism {mechanism!r}")
    if not users:
        return SlotOutcome(t, mechanism, ledger.available_at(t))
    price, b_min, b_max = slot_price(ledger, t, users, mechanism, kind, band)
    if mechanism == "payg":
        out = run_payg_slot(ledger, t, users, catalog, price, objective, slot_minutes)
    else:
        out = run_paap_slot(ledger, t, users, catalog, price, objective, fraction_basis)
    out.posted_price, out.b_min, out.b_max = price, b_min, b_max
    return out
