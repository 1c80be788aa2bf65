"""Posted unit-price functions and the alpha parameters of the online mechanisms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .market import EPS, DomainError, UserRequest


class PriceKind(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class PriceParams:
    capacity: float
    b_min: float
    b_max: float
    kind: PriceKind = PriceKind.LINEAR
    alpha: float | None = None  # required by the exponential form

    def __post_init__(self):
        if not self.capacity > 0:
            raise DomainError("capacity must be positive")
        if self.b_min < 0 or self.b_max < self.b_min:
            raise DomainError("price band must satisfy 0 <= b_min <= b_max")
        if PriceKind(self.kind) is PriceKind.EXPONENTIAL and (self.alpha is None or not self.alpha > 1):
            raise DomainError("exponential pricing needs alpha > 1")


def bid_price_bounds(unit_prices: Iterable[float]) -> tuple[float, float]:
    """(min, max) of the unit bids b/Q observed at a slot."""
    vals = list(unit_prices)
    if not vals:
        raise DomainError("no bids at this slot")
    return min(vals), max(vals)


def slot_price_bounds(users: Sequence[UserRequest]) -> tuple[float, float]:
    return bid_price_bounds(u.unit_price(b) for u in users for b in u.bids)


def _check_load(z: float, capacity: float) -> float:
    if z < -EPS or z > capacity + EPS * max(1.0, capacity):
        raise DomainError(f"load {z} outside [0, {capacity}]")
    return min(max(z, 0.0), capacity)


def unit_price_linear(z: float, capacity: float, b_min: float, b_max: float) -> float:
    z = _check_load(z, capacity)
    return b_max / capacity * z + b_min


def unit_price_quadratic(z: float, capacity: float, b_min: float, b_max: float) -> float:
    # Implemented as written; at z = C this reaches b_min + b_max + 1 (see notes on the band).
    z = _check_load(z, capacity)
    return z * z / (capacity * capacity) + b_max / capacity * z + b_min


def unit_price_exponential(z: float, capacity: float, b_min: float, b_max: float, alpha: float) -> float:
    if not alpha > 1:
        raise DomainError("alpha must exceed 1")
    z = _check_load(z, capacity)
    return b_max / (alpha - 1.0) * (alpha ** (z / capacity) - 1.0) + b_min


def unit_price(z: float, params: PriceParams) -> float:
    kind = PriceKind(params.kind)
    if kind is PriceKind.LINEAR:
        return unit_price_linear(z, params.capacity, params.b_min, params.b_max)
    if kind is PriceKind.QUADRATIC:
        return unit_price_quadratic(z, params.capacity, params.b_min, params.b_max)
    return unit_price_exponential(z, params.capacity, params.b_min, params.b_max, params.alpha)


def alpha_from_ratio(ratio: float) -> float:
    """(1 + R)^(1/R), continuous at R = 0 where it equals e."""
    if ratio < 0:
        raise DomainError("ratio must be nonnegative")
    if ratio == 0:
        return math.e
    if math.isinf(ratio):
        return 1.0
    return math.exp(math.log1p(ratio) / ratio)


def alpha_payg(users: Sequence[UserRequest], available: float) -> tuple[float, float]:
    """Largest per-user max-resource ratio R = max_i Qmax_i / A and its alpha."""
    if not users:
        raise DomainError("no users at this slot")
    if not available > 0:
        raise DomainError("no capacity available")
    ratio = max(u.max_resources() for u in users) / available
    return ratio, alpha_from_ratio(ratio)


def alpha_paap(users: Sequence[UserRequest], available: float) -> tuple[float, float]:
    """Smallest per-user min-resource ratio R = min_i Qmin_i / A and its alpha."""
    if not users:
        raise DomainError("no users at this slot")
    if not available > 0:
        raise DomainError("no capacity available")
    ratio = min(u.min_resources() for u in users) / available
    return ratio, alpha_from_ratio(ratio)


def payment(resources: float, price: float) -> float:
    """Charge for a bid: resources times the posted unit price."""
    if resources < 0 or price < 0:
        raise DomainError("resources and price must be nonnegative")
    return resources * price
