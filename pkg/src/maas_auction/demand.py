"""Seeded scenario generators for the two mechanisms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market import SYDNEY_MODES, BidItem, DomainError, ModeCatalog, Scenario, UserRequest

# (first slot, last slot exclusive, mean, std) on the 1200-slot day
DAY_BANDS_1200 = (
    (0, 120, 2.0, 1.0),
    (120, 240, 8.0, 2.0),
    (240, 720, 2.0, 1.0),
    (720, 840, 8.0, 2.0),
    (840, 1200, 2.0, 1.0),
)

# package length by week of a four-week month
WEEK_PACKAGE_LENGTHS = (1, 7, 5, 6)


def day_bands(horizon: int) -> list[tuple[int, int, float, float]]:
    """The peak/off-peak day profile rescaled to `horizon` slots."""
    scale = horizon / 1200.0
    out = []
    for lo, hi, mean, std in DAY_BANDS_1200:
        a, b = int(round(lo * scale)), int(round(hi * scale))
        if b > a:
            out.append((a, b, mean, std))
    return out


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class DemandConfig:
    mechanism: str = "payg"
    horizon: int = 120
    capacity: float = 500.0
    bands: list[tuple[int, int, float, float]] | None = None  # default: day profile
    distance_range: tuple[float, float] = (1.0, 18.0)
    bid_count_range: tuple[int, int] = (1, 3)
    price_band: tuple[float, float] = (2.0, 12.0)
    band_profile: Callable[[int], tuple[float, float]] | None = None  # per-slot override hook
    package_length_range: tuple[int, int] = (5, 14)
    package_schedule: str = "uniform"  # uniform | weekly
    weekend_factor_range: tuple[float, float] = (0.4, 0.8)
    booking_window: int = 0  # departure drawn triangular in [t, t + window]
    delay_scale: float = 100.0
    catalog: ModeCatalog = SYDNEY_MODES
    slot_minutes: float = 1.0
    max_per_slot: int | None = None  # cap on arrivals per slot

    def __post_init__(self):
        if self.mechanism not in ("payg", "paap"):
            raise DomainError(f"unknown mechanism {self.mechanism!r}")
        if self.horizon < 1 or not self.capacity > 0:
            raise DomainError("horizon and capacity must be positive")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise DomainError("distance range must be nonempty and positive")
        jlo, jhi = self.bid_count_range
        if not 1 <= jlo <= jhi:
            raise DomainError("bid count range must be nonempty")
        blo, bhi = self.price_band
        if not 0 < blo <= bhi:
            raise DomainError("price band must be nonempty")
        llo, lhi = self.package_length_range
        if not 1 <= llo <= lhi:
            raise DomainError("package length range must be nonempty")
        if self.package_schedule not in ("uniform", "weekly"):
            raise DomainError(f"unknown package schedule {self.package_schedule!r}")
        for band in self.bands or []:
            if band[3] < 0 or band[1] <= band[0]:
                raise DomainError("arrival bands need std >= 0 and a nonempty range")
        if self.booking_window < 0:
            raise DomainError("booking window must be >= 0")

    @classmethod
    def payg(cls, horizon: int = 120, capacity: float = 500.0, **kw) -> "DemandConfig":
        return cls(mechanism="payg", horizon=horizon, capacity=capacity, **kw)

    @classmethod
    def paap(cls, horizon: int = 100, capacity: float = 10000.0, **kw) -> "DemandConfig":
        kw.setdefault("distance_range", (1.0, 300.0))
        kw.setdefault("bands", [(0, horizon, 50.0, 10.0)])
        return cls(mechanism="paap", horizon=horizon, capacity=capacity, **kw)

    def arrival_bands(self) -> list[tuple[int, int, float, float]]:
        return list(self.bands) if self.bands is not None else day_bands(self.horizon)


def arrival_counts(config: DemandConfig, rng: np.random.Generator) -> np.ndarray:
    """Normal draws per slot, truncated at zero and rounded half-up."""
    counts = np.zeros(config.horizon, dtype=int)
    for lo, hi, mean, std in config.arrival_bands():
        for t in range(lo, min(hi, config.horizon)):
            counts[t] = max(0, round_half_up(rng.normal(mean, std)))
    if config.max_per_slot is not None:
        counts = np.minimum(counts, config.max_per_slot)
    return counts


def is_weekend(day: int) -> bool:
    return day % 7 in (5, 6)


def package_length_for(config: DemandConfig, slot: int, rng: np.random.Generator) -> int:
    if config.package_schedule == "weekly":
        return WEEK_PACKAGE_LENGTHS[(slot // 7) % len(WEEK_PACKAGE_LENGTHS)]
    lo, hi = config.package_length_range
    return int(rng.integers(lo, hi + 1))


def _draw_user(config: DemandConfig, rng: np.random.Generator, uid: int, slot: int,
               band: tuple[float, float]) -> UserRequest:
    vmax = config.catalog.fastest().speed
    vmin = config.catalog.slowest().speed
    distance = float(rng.uniform(*config.distance_range))
    n_bids = int(rng.integers(config.bid_count_range[0], config.bid_count_range[1] + 1))
    bids = []
    for j in range(n_bids):
        t_req = float(rng.uniform(distance / vmax, distance / vmin))
        q = distance * distance / t_req
        price = float(rng.uniform(band[0] * q, band[1] * q))
        bids.append(BidItem(j + 1, t_req, price))
    first = bids[0].price
    delay = float(rng.uniform(0.0, config.delay_scale / first))
    tolerance = float(rng.uniform(0.0, config.delay_scale * distance / first))
    departure = slot
    if config.booking_window > 0:
        w = config.booking_window
        departure = min(slot + round_half_up(rng.triangular(0.0, w / 2.0, w)), config.horizon - 1)
    length = package_length_for(config, slot, rng) if config.mechanism == "paap" else 1
    return UserRequest(uid, distance, departure, delay, tolerance, tuple(bids), length, slot)


def _generate(config: DemandConfig, seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    counts = arrival_counts(config, rng)
    users = []
    uid = 1
    for t in range(config.horizon):
        n = int(counts[t])
        if config.mechanism == "paap" and is_weekend(t):
            n = round_half_up(n * rng.uniform(*config.weekend_factor_range))
        band = config.band_profile(t) if config.band_profile else config.price_band
        for _ in range(n):
            users.append(_draw_user(config, rng, uid, t, band))
            uid += 1
    meta = {"seed": seed, "generator": config.mechanism}
    return Scenario(config.capacity, config.horizon, users, config.catalog, config.mechanism,
                    None if config.band_profile else tuple(config.price_band), config.slot_minutes, meta)


def gen_payg_demand(config: DemandConfig, seed: int) -> Scenario:
    if config.mechanism != "payg":
        raise DomainError("config is not a pay-as-you-go config")
    return _generate(config, seed)


def gen_paap_demand(config: DemandConfig, seed: int) -> Scenario:
    if config.mechanism != "paap":
        raise DomainError("config is not a package config")
    return _generate(config, seed)


def generate(config: DemandConfig, seed: int) -> Scenario:
    return _generate(config, seed)
