"""Core market types: travel modes, requests, bids, bundles and the capacity ledger."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-9


class DomainError(ValueError):
    """Raised when an input falls outside the domain of an operation."""


class ReservationError(RuntimeError):
    """Raised when a reservation would drive some slot below zero availability."""

    def __init__(self, slot: int, requested: float, available: float):
        super().__init__(
            f"reservation of {requested:.6g} exceeds availability {available:.6g} at slot {slot}"
        )
        self.slot = slot
        self.requested = requested
        self.available = available


@dataclass(frozen=True)
class TravelMode:
    id: int
    speed: float  # km per minute
    inconvenience_rate: float  # dollars per minute
    label: str = ""

    def __post_init__(self):
        if not self.speed > 0:
            raise DomainError(f"mode {self.id}: speed must be positive")
        if self.inconvenience_rate < 0:
            raise DomainError(f"mode {self.id}: inconvenience rate must be nonnegative")


@dataclass(frozen=True)
class ModeCatalog:
    modes: tuple[TravelMode, ...]

    def __post_init__(self):
        if not self.modes:
            raise DomainError("mode catalog is empty")
        ids = [m.id for m in self.modes]
        if len(set(ids)) != len(ids):
            raise DomainError("mode ids must be unique")

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([m.speed for m in self.modes])

    @property
    def rates(self) -> np.ndarray:
        return np.array([m.inconvenience_rate for m in self.modes])

    def fastest(self) -> TravelMode:
        return max(self.modes, key=lambda m: (m.speed, -m.id))

    def slowest(self) -> TravelMode:
        return min(self.modes, key=lambda m: (m.speed, m.id))

    def to_dict(self) -> list[dict]:
        return [
            {"id": m.id, "speed": m.speed, "inconvenience_rate": m.inconvenience_rate, "label": m.label}
            for m in self.modes
        ]

    @classmethod
    def from_dict(cls, rows: Sequence[dict]) -> "ModeCatalog":
        return cls(tuple(TravelMode(int(r["id"]), float(r["speed"]), float(r["inconvenience_rate"]),
                                    r.get("label", "")) for r in rows))


# Sydney mode set used throughout the experiments: speed (km/min), inconvenience ($/min).
SYDNEY_MODES = ModeCatalog((
    TravelMode(1, 0.5, 0.0, "taxi"),
    TravelMode(2, 0.3, 0.5, "rideshare-2"),
    TravelMode(3, 0.25, 1.0, "rideshare-3"),
    TravelMode(4, 0.18, 2.0, "public-transit"),
    TravelMode(5, 0.1, 6.0, "bicycle-share"),
))


def mobility_resources(distance: float, requested_time: float) -> float:
    """Speed-weighted distance D^2 / T consumed by a trip."""
    if not distance > 0 or not requested_time > 0:
        raise DomainError("distance and requested time must be positive")
    return distance * distance / requested_time


@dataclass(frozen=True)
class BidItem:
    bid_id: int
    requested_time: float  # minutes
    price: float  # dollars

    def __post_init__(self):
        if not self.requested_time > 0:
            raise DomainError(f"bid {self.bid_id}: requested time must be positive")
        if not self.price > 0:
            raise DomainError(f"bid {self.bid_id}: price must be positive")


@dataclass(frozen=True)
class UserRequest:
    user_id: int
    distance: float
    departure_slot: int
    delay_budget: float
    inconvenience_tolerance: float
    bids: tuple[BidItem, ...]
    package_length: int = 1
    order_slot: int | None = None

    def __post_init__(self):
        if not self.distance > 0:
            raise DomainError(f"user {self.user_id}: distance must be positive")
        if self.delay_budget < 0 or self.inconvenience_tolerance < 0:
            raise DomainError(f"user {self.user_id}: budgets must be nonnegative")
        if not self.bids:
            raise DomainError(f"user {self.user_id}: at least one bid is required")
        if self.package_length < 1:
            raise DomainError(f"user {self.user_id}: package length must be >= 1")
        if self.departure_slot < 0:
            raise DomainError(f"user {self.user_id}: departure slot must be >= 0")
        ids = [b.bid_id for b in self.bids]
        if len(set(ids)) != len(ids):
            raise DomainError(f"user {self.user_id}: bid ids must be unique")
        if self.order_slot is not None and self.order_slot > self.departure_slot:
            raise DomainError(f"user {self.user_id}: order slot after departure slot")

    @property
    def placed_at(self) -> int:
        return self.departure_slot if self.order_slot is None else self.order_slot

    def resources(self, bid: BidItem) -> float:
        return mobility_resources(self.distance, bid.requested_time)

    def unit_price(self, bid: BidItem) -> float:
        return bid.price / self.resources(bid)

    def max_resources(self) -> float:
        return max(self.resources(b) for b in self.bids)

    def min_resources(self) -> float:
        return min(self.resources(b) for b in self.bids)

    def best_unit_price(self) -> float:
        return max(self.unit_price(b) for b in self.bids)

    def with_bids(self, bids: Iterable[BidItem]) -> "UserRequest":
        return UserRequest(self.user_id, self.distance, self.departure_slot, self.delay_budget,
                           self.inconvenience_tolerance, tuple(bids), self.package_length, self.order_slot)

    def to_dict(self) -> dict:
        d = {
            "user_id": self.user_id,
            "distance": self.distance,
            "departure_slot": self.departure_slot,
            "delay_budget": self.delay_budget,
            "inconvenience_tolerance": self.inconvenience_tolerance,
            "package_length": self.package_length,
            "bids": [{"bid_id": b.bid_id, "requested_time": b.requested_time, "price": b.price}
                     for b in self.bids],
        }
        if self.order_slot is not None:
            d["order_slot"] = self.order_slot
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UserRequest":
        bids = tuple(BidItem(int(b["bid_id"]), float(b["requested_time"]), float(b["price"]))
                     for b in d["bids"])
        return cls(int(d["user_id"]), float(d["distance"]), int(d["departure_slot"]),
                   float(d["delay_budget"]), float(d["inconvenience_tolerance"]), bids,
                   int(d.get("package_length", 1)),
                   None if d.get("order_slot") is None else int(d["order_slot"]))


@dataclass(frozen=True)
class Bundle:
    """Minutes spent on each mode, aligned with the catalog order."""
    times: tuple[float, ...]

    @property
    def total_time(self) -> float:
        return math.fsum(self.times)

    def distance(self, catalog: ModeCatalog) -> float:
        return math.fsum(t * m.speed for t, m in zip(self.times, catalog.modes))

    def inconvenience(self, catalog: ModeCatalog) -> float:
        return math.fsum(t * m.inconvenience_rate for t, m in zip(self.times, catalog.modes))


def slots_needed(bundle: Bundle | Sequence[float], slot_minutes: float = 1.0) -> int:
    """Number of whole slots the bundle occupies."""
    times = bundle.times if isinstance(bundle, Bundle) else tuple(bundle)
    if any(t < -EPS for t in times):
        raise DomainError("bundle has negative times")
    total = math.fsum(times) / slot_minutes
    # guard against 13.000000000002 style round-up from solver noise
    return int(math.ceil(total - 1e-9))


@dataclass
class Allocation:
    user_id: int
    bid_id: int
    slot: int  # slot at which the decision was taken
    fraction: float
    resources: float
    price: float  # reported bid price b
    payment: float
    window: tuple[int, int]  # inclusive reservation window, (start, start - 1) when empty
    bundle: Bundle | None = None
    raw_fraction: float | None = None

    @property
    def welfare(self) -> float:
        return self.price * self.fraction

    @property
    def reserved(self) -> float:
        return self.resources * self.fraction

    def to_dict(self) -> dict:
        d = {
            "user_id": self.user_id,
            "bid_id": self.bid_id,
            "slot": self.slot,
            "fraction": self.fraction,
            "resources": self.resources,
            "price": self.price,
            "payment": self.payment,
            "window": list(self.window),
        }
        if self.raw_fraction is not None:
            d["raw_fraction"] = self.raw_fraction
        if self.bundle is not None:
            d["bundle"] = list(self.bundle.times)
        return d


class CapacityLedger:
    """Per-slot availability A_t = C minus the reservations that cover slot t.

    Loads are kept as lists of reserved amounts and summed with math.fsum, so a
    reservation followed by its release restores the availability bit for bit.
    """

    def __init__(self, capacity: float, horizon: int):
        if not capacity > 0:
            raise DomainError("capacity must be positive")
        if horizon < 1:
            raise DomainError("horizon must be >= 1")
        self.capacity = float(capacity)
        self.horizon = int(horizon)
        self._loads: list[list[float]] = [[] for _ in range(self.horizon)]
        self._avail = np.full(self.horizon, self.capacity)

    def copy(self) -> "CapacityLedger":
        other = CapacityLedger(self.capacity, self.horizon)
        other._loads = [list(x) for x in self._loads]
        other._avail = self._avail.copy()
        return other

    @property
    def available(self) -> np.ndarray:
        return self._avail.copy()

    def available_at(self, t: int) -> float:
        return float(self._avail[t])

    def load_at(self, t: int) -> float:
        return math.fsum(self._loads[t])

    def min_available(self, start: int, end: int) -> float:
        self._check_window(start, end)
        if end < start:
            return self.capacity
        return float(self._avail[start:end + 1].min())

    def _check_window(self, start: int, end: int) -> None:
        if start < 0 or start >= self.horizon or end >= self.horizon:
            raise DomainError(f"window [{start}, {end}] outside horizon [0, {self.horizon})")

    def _refresh(self, t: int) -> None:
        self._avail[t] = max(0.0, self.capacity - math.fsum(self._loads[t]))

    def reserve(self, start: int, end: int, amount: float) -> None:
        """Reserve `amount` in every slot of [start, end]; all-or-nothing."""
        self._check_window(start, end)
        if amount < 0:
            raise DomainError("reservation amount must be nonnegative")
        if amount == 0 or end < start:
            return
        for t in range(start, end + 1):
            if amount > self._avail[t] + EPS:
                raise ReservationError(t, amount, float(self._avail[t]))
        for t in range(start, end + 1):
            self._loads[t].append(float(amount))
            self._refresh(t)

    def release(self, start: int, end: int, amount: float) -> None:
        """Inverse of reserve for the same window and amount."""
        self._check_window(start, end)
        if amount == 0 or end < start:
            return
        for t in range(start, end + 1):
            if float(amount) not in self._loads[t]:
                raise DomainError(f"no reservation of {amount} at slot {t}")
        for t in range(start, end + 1):
            self._loads[t].remove(float(amount))
            self._refresh(t)


def clip_window(start: int, length: int, horizon: int) -> tuple[int, int]:
    """Inclusive window of `length` slots from `start`, truncated at the horizon end."""
    end = min(start + length - 1, horizon - 1)
    return start, end


@dataclass
class Scenario:
    capacity: float
    horizon: int
    users: list[UserRequest]
    catalog: ModeCatalog = SYDNEY_MODES
    mechanism: str = "payg"
    price_band: tuple[float, float] | None = None  # exogenous (b_min, b_max); None = from bids
    slot_minutes: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mechanism not in ("payg", "paap"):
            raise DomainError(f"unknown mechanism {self.mechanism!r}")
        if self.horizon < 1 or not self.capacity > 0:
            raise DomainError("scenario needs a positive capacity and horizon")
        seen = set()
        for u in self.users:
            if u.user_id in seen:
                raise DomainError(f"duplicate user id {u.user_id}")
            seen.add(u.user_id)
            if u.departure_slot >= self.horizon:
                raise DomainError(f"user {u.user_id} departs after the horizon")
        if self.price_band is not None:
            lo, hi = self.price_band
            if lo < 0 or hi < lo:
                raise DomainError("price band must satisfy 0 <= b_min <= b_max")

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "horizon": self.horizon,
            "mechanism": self.mechanism,
            "slot_minutes": self.slot_minutes,
            "price_band": None if self.price_band is None else list(self.price_band),
            "modes": self.catalog.to_dict(),
            "users": [u.to_dict() for u in self.users],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        band = d.get("price_band")
        return cls(
            capacity=float(d["capacity"]),
            horizon=int(d["horizon"]),
            users=[UserRequest.from_dict(u) for u in d["users"]],
            catalog=ModeCatalog.from_dict(d["modes"]) if d.get("modes") else SYDNEY_MODES,
            mechanism=d.get("mechanism", "payg"),
            price_band=None if band is None else (float(band[0]), float(band[1])),
            slot_minutes=float(d.get("slot_minutes", 1.0)),
            meta=dict(d.get("meta", {})),
        )


def scenario_schema() -> dict:
    text = resources.files("maas_auction").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def load_scenario(path: str | Path, validate: bool = True) -> Scenario:
    data = json.loads(Path(path).read_text())
    if validate:
        import jsonschema
        jsonschema.validate(data, scenario_schema())
    return Scenario.from_dict(data)


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n")
