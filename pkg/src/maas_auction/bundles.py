"""Feasible multimodal bundles for a single bid, via the in-repo simplex."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .market import EPS, BidItem, Bundle, DomainError, ModeCatalog, UserRequest
from .simplex import StandardLP, solve_lp


class BundleObjective(str, Enum):
    MIN_INCONVENIENCE = "min_inconvenience"
    MIN_TOTAL_TIME = "min_total_time"
    FEASIBILITY_ONLY = "feasibility_only"


def bundle_lp(distance: float, requested_time: float, delay_budget: float, tolerance: float,
              catalog: ModeCatalog, objective=BundleObjective.MIN_INCONVENIENCE) -> StandardLP:
    """Rows: distance equality, time window [T, T + delay], inconvenience cap."""
    v = catalog.speeds
    sigma = catalog.rates
    ones = np.ones(len(catalog))
    A = np.vstack([v, ones, ones, sigma])
    b = np.array([distance, requested_time, requested_time + delay_budget, tolerance])
    objective = BundleObjective(objective)
    if objective is BundleObjective.MIN_INCONVENIENCE:
        c = -sigma
    elif objective is BundleObjective.MIN_TOTAL_TIME:
        c = -ones
    else:
        c = np.zeros(len(catalog))
    return StandardLP(c, A, b, ("=", ">=", "<=", "<="), maximize=True)


@lru_cache(maxsize=200_000)
def _geometric_bundle(distance, requested_time, delay_budget, tolerance, catalog, objective):
    res = solve_lp(bundle_lp(distance, requested_time, delay_budget, tolerance, catalog, objective))
    if not res.ok:
        return None
    return Bundle(tuple(float(max(t, 0.0)) for t in res.x))


def clear_bundle_cache() -> None:
    _geometric_bundle.cache_clear()


def price_gate(price: float, resources: float, unit_price: float) -> bool:
    """b >= Q * p with a relative tolerance so exact equality passes."""
    need = resources * unit_price
    return price >= need - EPS * max(1.0, abs(need))


def feasible_bundle(request: UserRequest, bid: BidItem, catalog: ModeCatalog,
                    objective=BundleObjective.MIN_INCONVENIENCE,
                    unit_price: float = 0.0) -> Bundle | None:
    """A bundle realizing the bid, or None when the bid is infeasible.

    The geometric part does not depend on the slot and is cached; the posted
    unit price only adds the gate b >= Q * p.
    """
    if unit_price < 0:
        raise DomainError("unit price must be nonnegative")
    if not price_gate(bid.price, request.resources(bid), unit_price):
        return None
    return _geometric_bundle(request.distance, bid.requested_time, request.delay_budget,
                             request.inconvenience_tolerance, catalog, BundleObjective(objective))


@dataclass
class BundleCheck:
    feasible: bool
    violations: dict[str, float] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.feasible


def is_bundle_feasible(bundle: Bundle, request: UserRequest, bid: BidItem,
                       catalog: ModeCatalog, unit_price: float = 0.0, tol: float = EPS) -> BundleCheck:
    """Check a bundle against every bid constraint, reporting each violation."""
    if len(bundle.times) != len(catalog):
        raise DomainError("bundle length does not match the catalog")
    out: dict[str, float] = {}
    times = np.asarray(bundle.times, dtype=float)
    if np.any(times < -tol):
        out["nonnegativity"] = float(-times.min())
    scale = max(1.0, request.distance)
    dist_err = abs(bundle.distance(catalog) - request.distance)
    if dist_err > tol * scale:
        out["distance"] = dist_err
    total = bundle.total_time
    if total < bid.requested_time - tol * max(1.0, bid.requested_time):
        out["min_time"] = bid.requested_time - total
    cap = bid.requested_time + request.delay_budget
    if total > cap + tol * max(1.0, cap):
        out["delay_budget"] = total - cap
    inc = bundle.inconvenience(catalog)
    if inc > request.inconvenience_tolerance + tol * max(1.0, request.inconvenience_tolerance):
        out["inconvenience"] = inc - request.inconvenience_tolerance
    if not price_gate(bid.price, request.resources(bid), unit_price):
        out["price"] = request.resources(bid) * unit_price - bid.price
    return BundleCheck(not out, out)
