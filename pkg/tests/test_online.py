
import pytest
from hypothesis import given, settings, strategies as st

from maas_auction.analysis import primal_dual_identity_check, random_slot
from maas_auction.market import SYDNEY_MODES, BidItem, CapacityLedger, UserRequest
from maas_auction.online import (CAPACITY, CRITICAL, DUAL_GATE, auction_step, critical_index, paap_fraction,
                                 run_paap_slot, run_payg_slot)
from maas_auction.pricing import PriceKind

from conftest import taxi_user
from oracles import payg_trace

# frozen from the hand recomputation in oracles.payg_trace (A=10, users (4,8), (4,4))
ALPHA_04 = 2.319103274975049
Q_AFTER_U1 = 0.6064726054259338
Q_AFTER_U2 = 1.1522979503092743


def test_critical_index_examples():
    assert critical_index([4, 4, 4], 10) == 3
    assert critical_index([4, 4], 10) == 3
    assert critical_index([12], 10) == 1


def test_frozen_values_match_oracle():
    qs, acc = payg_trace([(4, 8), (4, 4)], 10)
    assert qs == pytest.approx([Q_AFTER_U1, Q_AFTER_U2], rel=1e-14)
    assert acc == [0, 1]
    assert (1.4) ** 2.5 == pytest.approx(ALPHA_04, rel=1e-15)


def fixture_users():
    return [taxi_user(1, 4, 8), taxi_user(2, 4, 4)]


def test_payg_two_user_trace():
    led = CapacityLedger(10, 20)
    out = run_payg_slot(led, 0, fixture_users(), SYDNEY_MODES)
    assert out.ratio == pytest.approx(0.4)
    assert out.alpha == pytest.approx(ALPHA_04, rel=1e-12)
    assert out.q_trace == pytest.approx([Q_AFTER_U1, Q_AFTER_U2], rel=1e-12)
    assert out.accepted_users == [1, 2]
    assert out.welfare == 12
    assert 10 - led.available_at(0) == pytest.approx(8)
    # taxi-only bundles of 16 minutes reserve slots 0..15
    assert led.available_at(15) == pytest.approx(2) and led.available_at(16) == 10


def test_payg_third_user_is_cut_by_critical_index():
    led = CapacityLedger(10, 20)
    out = run_payg_slot(led, 0, fixture_users() + [taxi_user(3, 4, 2)], SYDNEY_MODES)
    assert out.rejected == {3: CRITICAL}
    assert out.q_trace == pytest.approx([Q_AFTER_U1, Q_AFTER_U2], rel=1e-12)


def test_payg_third_user_fails_dual_gate_with_room():
    users = fixture_users() + [taxi_user(3, 4, 2)]
    led = CapacityLedger(12, 20)
    out = run_payg_slot(led, 0, users, SYDNEY_MODES)
    qs, acc = payg_trace([(4, 8), (4, 4), (4, 2)], 12)
    assert acc == [0, 1]
    assert out.q_trace == pytest.approx(qs, rel=1e-12)
    assert out.rejected == {3: DUAL_GATE}


def test_payg_empty_and_degenerate():
    led = CapacityLedger(10, 3)
    out = run_payg_slot(led, 0, [], SYDNEY_MODES)
    assert out.q_final == 0 and out.welfare == 0 and not out.allocations
    led.reserve(0, 0, 10)
    out = run_payg_slot(led, 0, fixture_users(), SYDNEY_MODES)
    assert out.rejected == {1: CAPACITY, 2: CAPACITY}
    assert out.q_trace == []


def two_bid_user(uid=1, bids=((2, 6), (4, 4)), length=1):
    d = 8.0
    items = tuple(BidItem(j + 1, d * d / q, b) for j, (q, b) in enumerate(bids))
    return UserRequest(uid, d, 0, 1000.0, 1e6, items, length)


def test_paap_fraction_examples():
    u = taxi_user(1, 5, 10)
    assert paap_fraction(u, u.bids[0]) == pytest.approx(1.0)
    u = two_bid_user()
    assert paap_fraction(u, u.bids[0]) == pytest.approx(1.8)
    u = two_bid_user(bids=((2, 2), (2, 2.0000001)))
    assert paap_fraction(u, u.bids[0]) == pytest.approx(1.0)


def test_paap_single_user_example():
    led = CapacityLedger(10, 10)
    out = run_paap_slot(led, 0, [taxi_user(1, 5, 10, length=4)], SYDNEY_MODES)
    assert out.ratio == pytest.approx(0.5) and out.alpha == pytest.approx(2.25)
    assert out.q_trace == pytest.approx([0.8])
    assert out.allocations[0].fraction == 1.0
    assert [led.available_at(t) for t in range(5)] == pytest.approx([5, 5, 5, 5, 10])


def test_paap_gate_blocks_low_unit_bid():
    # the first user pushes q above the second user's unit bid
    users = [taxi_user(1, 2, 40), taxi_user(2, 2, 0.5)]
    out = run_paap_slot(CapacityLedger(10, 4), 0, users, SYDNEY_MODES)
    assert out.q_trace[0] > 0.25
    assert out.rejected == {2: DUAL_GATE}
    assert out.accepted_users == [1]


def test_paap_clamps_and_keeps_convex_package():
    led = CapacityLedger(100, 3)
    out = run_paap_slot(led, 0, [two_bid_user()], SYDNEY_MODES)
    fr = {a.bid_id: a.fraction for a in out.allocations}
    raw = {a.bid_id: a.raw_fraction for a in out.allocations}
    assert raw[1] == pytest.approx(1.8)
    assert sum(fr.values()) <= 1 + 1e-12
    assert out.welfare == pytest.approx(sum(a.price * a.fraction for a in out.allocations))


def test_paap_capacity_cap():
    led = CapacityLedger(10, 3)
    out = run_paap_slot(led, 0, [taxi_user(1, 6, 60), taxi_user(2, 6, 50)], SYDNEY_MODES)
    assert 10 - led.available_at(0) <= 10 + 1e-9
    assert sum(a.reserved for a in out.allocations) == pytest.approx(10)


def test_fraction_basis_excludes_infeasible_bids():
    # bid 2 asks for an impossible 1-minute, 8 km trip; only bid 1 can be served
    u = UserRequest(1, 8.0, 0, 10.0, 1e6, (BidItem(1, 32.0, 2.0), BidItem(2, 1.0, 100.0)))
    feas = run_paap_slot(CapacityLedger(100, 2), 0, [u], SYDNEY_MODES)
    lit = run_paap_slot(CapacityLedger(100, 2), 0, [u], SYDNEY_MODES, fraction_basis="all")
    assert feas.allocations[0].fraction == pytest.approx(1.0)
    assert lit.allocations[0].fraction == pytest.approx(2 * 66 / (2 * 102))


def test_auction_step_posted_price_and_payment():
    u = UserRequest(1, 10.0, 0, 10.0, 100.0, (BidItem(1, 34.0, 20.0),))
    led = CapacityLedger(500, 60)
    out = auction_step(led, 0, [u], SYDNEY_MODES, "payg", PriceKind.LINEAR, (2.0, 12.0))
    assert out.posted_price == 2.0
    assert out.allocations[0].payment == pytest.approx(5.8824, abs=1e-4)


def test_auction_step_empty_and_priced_out():
    led = CapacityLedger(500, 5)
    out = auction_step(led, 0, [], SYDNEY_MODES)
    assert out.posted_price is None and out.welfare == 0
    assert led.available_at(0) == 500
    cheap = [taxi_user(1, 4, 1.0), taxi_user(2, 3, 1.0)]
    out = auction_step(led, 0, cheap, SYDNEY_MODES, "payg", PriceKind.LINEAR, (2.0, 12.0))
    assert out.allocations == [] and out.welfare == 0
    assert led.available_at(0) == 500


def test_auction_step_prices_from_previous_load():
    led = CapacityLedger(100, 5)
    led.reserve(0, 0, 50)
    out = auction_step(led, 1, [taxi_user(1, 1, 100, departure=1)], SYDNEY_MODES, "payg",
                       PriceKind.LINEAR, (2.0, 12.0))
    assert out.posted_price == pytest.approx(12 / 100 * 50 + 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["payg", "paap"]))
def test_random_slot_invariants(seed, mech):
    import numpy as np
    sc = random_slot(np.random.default_rng(seed), mech, max_users=12)
    led = CapacityLedger(sc.capacity, sc.horizon)
    out = auction_step(led, 0, sc.users, sc.catalog, mech, PriceKind.EXPONENTIAL, sc.price_band)
    res, _ = primal_dual_identity_check([out])
    assert res <= 1e-9
    assert sum(a.reserved for a in out.allocations) <= out.available + 1e-9
    assert out.welfare == pytest.approx(sum(a.price * a.fraction for a in out.allocations))
    if mech == "payg":
        assert all(b >= a for a, b in zip(out.q_trace, out.q_trace[1:]))
        users = [a.user_id for a in out.allocations]
        assert len(users) == len(set(users))
        assert all(a.fraction == 1.0 for a in out.allocations)
    else:
        for uid in {a.user_id for a in out.allocations}:
            assert sum(a.fraction for a in out.allocations if a.user_id == uid) <= 1 + 1e-12
