"""Rolling-horizon driver: online per-slot auctions or windowed offline solves."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bundles import BundleObjective
from .market import Allocation, CapacityLedger, DomainError, ReservationError, Scenario, UserRequest
from .offline import (InternalError, OfflineSolution, build_columns, endogenous_price_repair,
                      solve_offline_ip, solve_offline_lp)
from .online import SlotOutcome, auction_step, slot_price
from .pricing import PriceKind

SOLVERS = ("online_algorithm", "online_milp", "offline_milp")
NOT_SELECTED = "not_selected"


@dataclass(frozen=True)
class HorizonConfig:
    step: int = 1
    window: int = 1
    mechanism: str = "payg"
    solver: str = "online_algorithm"
    price_kind: PriceKind = PriceKind.EXPONENTIAL
    objective: BundleObjective = BundleObjective.MIN_INCONVENIENCE
    node_limit: int = 1_000_000
    lp_backend: str = "highs"
    # how windowed offline solves honour the load-dependent price:
    # exact = price rows inside the integer model, repair = drop violators afterwards
    offline_pricing: str = "exact"
    paap_fraction_basis: str = "feasible"

    def __post_init__(self):
        if self.step < 1 or self.window < 1:
            raise DomainError("step and window must be >= 1")
        if self.mechanism not in ("payg", "paap"):
            raise DomainError(f"unknown mechanism {self.mechanism!r}")
        if self.solver not in SOLVERS:
            raise DomainError(f"unknown solver {self.solver!r}")
        if self.step == 1 and self.solver == "offline_milp":
            raise DomainError("a one-slot step runs an online solver")
        if self.step > 1 and self.solver != "offline_milp":
            raise DomainError("a multi-slot step needs the offline solver")
        if self.offline_pricing not in ("exact", "repair", "none"):
            raise DomainError(f"unknown offline pricing {self.offline_pricing!r}")
        if self.paap_fraction_basis not in ("feasible", "all"):
            raise DomainError(f"unknown fraction basis {self.paap_fraction_basis!r}")

    def check_horizon(self, horizon: int) -> None:
        if self.step > horizon:
            raise DomainError(f"step {self.step} exceeds the horizon {horizon}")

    @classmethod
    def sha(cls, horizon: int, mechanism: str = "payg", **kw) -> "HorizonConfig":
        """Single solve over the whole horizon with full knowledge."""
        return cls(step=horizon, window=horizon, mechanism=mechanism, solver="offline_milp", **kw)

    def label(self) -> str:
        if self.solver == "offline_milp":
            return f"offline(step={self.step},window={self.window})"
        return f"{self.solver}(window={self.window})"

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "window": self.window,
            "mechanism": self.mechanism,
            "solver": self.solver,
            "price_function": PriceKind(self.price_kind).value,
            "objective": BundleObjective(self.objective).value,
            "node_limit": self.node_limit,
            "lp_backend": self.lp_backend,
            "offline_pricing": self.offline_pricing,
            "paap_fraction_basis": self.paap_fraction_basis,
        }


def window_users(users: Sequence[UserRequest], t: int, window: int,
                 decided: set[int] | frozenset = frozenset()) -> list[UserRequest]:
    """Users already placed whose departure lies in [t, t + window] and who are still open."""
    return sorted(
        (u for u in users
         if u.user_id not in decided and u.placed_at <= t and t <= u.departure_slot <= t + window),
        key=lambda u: u.user_id,
    )


def block_users(users: Sequence[UserRequest], start: int, end: int, window: int,
                decided: set[int]) -> list[UserRequest]:
    """Users known by the end of [start, end] departing in [start, end + window]."""
    return sorted(
        (u for u in users
         if u.user_id not in decided and u.placed_at <= end and start <= u.departure_slot <= end + window),
        key=lambda u: u.user_id,
    )


@dataclass
class BlockRecord:
    start: int
    end: int
    users: list[int]
    objective: float = 0.0
    proven_optimal: bool = True
    nodes: int = 0
    repair_log: list[dict] = field(default_factory=list)
    prices: list[float] | None = None
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "event": "block",
            "start": self.start,
            "end": self.end,
            "users": self.users,
            "objective": self.objective,
            "proven_optimal": self.proven_optimal,
            "nodes": self.nodes,
            "repair_log": self.repair_log,
            "prices": self.prices,
            "error": self.error,
        }


@dataclass
class AuctionTrace:
    config: HorizonConfig
    capacity: float
    horizon: int
    outcomes: list[SlotOutcome] = field(default_factory=list)
    blocks: list[BlockRecord] = field(default_factory=list)
    allocations: list[Allocation] = field(default_factory=list)
    participants: dict[int, set[int]] = field(default_factory=dict)  # service slot -> users
    posted_prices: list[float | None] = field(default_factory=list)
    availability: np.ndarray | None = None
    dual_payments: dict[tuple[int, int], float] = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def welfare(self) -> float:
        return math.fsum(a.welfare for a in self.allocations)

    def welfare_series(self) -> list[float]:
        out = [0.0] * self.horizon
        for a in self.allocations:
            out[a.window[0]] += a.welfare
        return out

    def acceptance_series(self) -> list[float | None]:
        accepted: dict[int, set[int]] = {}
        for a in self.allocations:
            if a.fraction > 0:
                accepted.setdefault(a.window[0], set()).add(a.user_id)
        out: list[float | None] = []
        for t in range(self.horizon):
            n = len(self.participants.get(t, ()))
            out.append(None if n == 0 else len(accepted.get(t, ())) / n)
        return out

    def acceptance_ratio(self) -> float | None:
        """Accepted users over participating users across the whole run."""
        total = sum(len(v) for v in self.participants.values())
        if total == 0:
            return None
        accepted = {a.user_id for a in self.allocations if a.fraction > 0}
        return len(accepted) / total

    def events(self):
        for o in self.outcomes:
            yield o.to_record()
        for b in self.blocks:
            yield b.to_record()


def _note_participants(trace: AuctionTrace, users: Sequence[UserRequest]) -> None:
    for u in users:
        trace.participants.setdefault(u.departure_slot, set()).add(u.user_id)


def solve_slot_exact(ledger: CapacityLedger, t: int, users: Sequence[UserRequest], scenario: Scenario,
                     config: HorizonConfig) -> SlotOutcome:
    """Exact per-slot allocation (integer for PAYG, LP for PAAP) at the posted price."""
    out = SlotOutcome(t, config.mechanism, ledger.available_at(t),
                      participants=sorted(u.user_id for u in users))
    if not users:
        return out
    price, b_min, b_max = slot_price(ledger, t, users, config.mechanism, config.price_kind,
                                     scenario.price_band)
    out.posted_price, out.b_min, out.b_max = price, b_min, b_max
    cols = build_columns(users, scenario.catalog, ledger.horizon, config.mechanism, "posted",
                         [price] * ledger.horizon, objective=config.objective,
                         slot_minutes=scenario.slot_minutes)
    caps = ledger.available
    if config.mechanism == "payg":
        sol = solve_offline_ip(cols, caps, config.node_limit, config.lp_backend)
    else:
        sol = solve_offline_lp(cols, caps, config.lp_backend, check_duals=False)
    _commit(ledger, sol, out.allocations, t, [price] * ledger.horizon)
    served = {a.user_id for a in out.allocations}
    for u in users:
        if u.user_id not in served:
            out.rejected[u.user_id] = NOT_SELECTED
    return out


def _commit(ledger: CapacityLedger, sol: OfflineSolution, sink: list[Allocation], t: int,
            prices: Sequence[float]) -> None:
    for c, v in sol.selected():
        amount = c.resources * v
        try:
            ledger.reserve(c.start, c.end, amount)
        except ReservationError:
            # a tolerance-level overshoot from the LP; shrink to what is left
            room = ledger.min_available(c.start, c.end)
            if room <= 0:
                continue
            v = room / c.resources
            amount = room
            ledger.reserve(c.start, c.end, amount)
        sink.append(Allocation(c.user_id, c.bid_id, t, v, c.resources, c.price,
                               c.resources * prices[c.slot] * v, (c.start, c.end), c.bundle))


def run_rha(config: HorizonConfig, scenario: Scenario) -> AuctionTrace:
    """Run one rolling-horizon configuration over the scenario."""
    config.check_horizon(scenario.horizon)
    if config.mechanism != scenario.mechanism:
        raise DomainError("config and scenario mechanisms differ")
    ledger = CapacityLedger(scenario.capacity, scenario.horizon)
    trace = AuctionTrace(config, scenario.capacity, scenario.horizon,
                         posted_prices=[None] * scenario.horizon)
    users = sorted(scenario.users, key=lambda u: u.user_id)
    decided: set[int] = set()
    t0 = time.perf_counter()
    if config.step == 1:
        for t in range(scenario.horizon):
            current = window_users(users, t, config.window, decided)
            _note_participants(trace, current)
            if config.solver == "online_algorithm":
                out = auction_step(ledger, t, current, scenario.catalog, config.mechanism,
                                   config.price_kind, scenario.price_band, config.objective,
                                   scenario.slot_minutes, config.paap_fraction_basis)
            else:
                out = solve_slot_exact(ledger, t, current, scenario, config)
            trace.outcomes.append(out)
            trace.posted_prices[t] = out.posted_price
            trace.allocations.extend(out.allocations)
            trace.dual_payments.update(out.dual_payments())
            decided.update(a.user_id for a in out.allocations)
            # users whose departure slot is now are final either way
            decided.update(u.user_id for u in current if u.departure_slot <= t)
    else:
        for start in range(0, scenario.horizon, config.step):
            end = min(start + config.step, scenario.horizon) - 1
            current = block_users(users, start, end, config.window, decided)
            _note_participants(trace, current)
            rec = BlockRecord(start, end, [u.user_id for u in current])
            try:
                _offline_block(ledger, current, scenario, config, trace, rec, start)
            except (InternalError, RuntimeError) as exc:
                rec.error = str(exc)
            trace.blocks.append(rec)
            decided.update(a.user_id for a in trace.allocations)
            decided.update(u.user_id for u in current if u.departure_slot <= end)
    trace.runtime = time.perf_counter() - t0
    trace.availability = ledger.available
    return trace


def _offline_block(ledger, users, scenario, config, trace, rec, start) -> None:
    if not users:
        return
    caps = ledger.available
    cols = build_columns(users, scenario.catalog, scenario.horizon, config.mechanism, "none",
                         objective=config.objective, slot_minutes=scenario.slot_minutes)
    if config.mechanism == "payg":
        exact = config.offline_pricing == "exact"
        sol = solve_offline_ip(cols, caps, config.node_limit, config.lp_backend,
                               scenario.capacity if exact else None, scenario.price_band)
    else:
        # fractional packages: the price gate is not convex, so it is repaired afterwards
        sol = solve_offline_lp(cols, caps, config.lp_backend, check_duals=False)
    rec.proven_optimal, rec.nodes = sol.proven_optimal, sol.nodes
    if config.offline_pricing != "none":
        sol = endogenous_price_repair(sol, scenario.capacity, band=scenario.price_band)
        rec.repair_log = sol.repair_log
        rec.prices = [float(p) for p in sol.prices]
        slots = {c.slot for c, _ in sol.selected()} | {u.departure_slot for u in users}
        for t in slots:
            trace.posted_prices[t] = float(sol.prices[t])
        prices = sol.prices
    else:
        prices = np.zeros(scenario.horizon)
    rec.objective = sol.objective
    before = len(trace.allocations)
    _commit(ledger, sol, trace.allocations, start, prices)
    for a in trace.allocations[before:]:
        trace.dual_payments[(a.user_id, a.bid_id)] = a.payment


def run_summary(trace: AuctionTrace, seed: int | None = None) -> dict:
    """Deterministic per-run summary (runtime is reported separately)."""
    acc = trace.acceptance_series()
    return {
        "total_welfare": trace.welfare,
        "acceptance_ratio": trace.acceptance_ratio(),
        "accepted_users": len({a.user_id for a in trace.allocations if a.fraction > 0}),
        "participating_users": sum(len(v) for v in trace.participants.values()),
        "welfare_series": trace.welfare_series(),
        "acceptance_series": acc,
        "price_series": list(trace.posted_prices),
        "availability_series": [float(v) for v in trace.availability],
        "config": trace.config.to_dict(),
        "capacity": trace.capacity,
        "horizon": trace.horizon,
        "seed": seed,
    }
