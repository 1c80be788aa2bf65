
import pytest
from hypothesis import given, settings, strategies as st

from maas_auction.bundles import BundleObjective, feasible_bundle, is_bundle_feasible
from maas_auction.market import SYDNEY_MODES, BidItem, Bundle, DomainError, ModeCatalog, TravelMode, UserRequest

from oracles import grid_bundle_exists


def user(d, t, phi, gamma, price=100.0):
    return UserRequest(1, d, 0, phi, gamma, (BidItem(1, t, price),))


def test_taxi_example_feasible():
    u = user(10, 20, 5, 10)
    b = feasible_bundle(u, u.bids[0], SYDNEY_MODES)
    assert b is not None
    assert is_bundle_feasible(b, u, u.bids[0], SYDNEY_MODES)
    taxi = Bundle((20.0, 0, 0, 0, 0))
    assert is_bundle_feasible(taxi, u, u.bids[0], SYDNEY_MODES)


def test_too_fast_request_infeasible():
    u = user(10, 10, 5, 10)
    assert feasible_bundle(u, u.bids[0], SYDNEY_MODES) is None


def test_price_gate():
    u = user(10, 20, 5, 10, price=9.0)  # Q = 5
    assert feasible_bundle(u, u.bids[0], SYDNEY_MODES, unit_price=1.8) is not None
    assert feasible_bundle(u, u.bids[0], SYDNEY_MODES, unit_price=1.81) is None
    with pytest.raises(DomainError):
        feasible_bundle(u, u.bids[0], SYDNEY_MODES, unit_price=-1)


def test_violation_reports():
    u = user(10, 20, 5, 10)
    chk = is_bundle_feasible(Bundle((0, 0, 0, 0, 100.0)), u, u.bids[0], SYDNEY_MODES)
    assert not chk and "delay_budget" in chk.violations and "inconvenience" in chk.violations
    chk = is_bundle_feasible(Bundle((0.0,) * 5), u, u.bids[0], SYDNEY_MODES)
    assert not chk and "distance" in chk.violations
    with pytest.raises(DomainError):
        is_bundle_feasible(Bundle((1.0,)), u, u.bids[0], SYDNEY_MODES)


@pytest.mark.parametrize("obj", list(BundleObjective))
def test_objectives_return_feasible_bundles(obj):
    u = user(12, 40, 20, 60)
    b = feasible_bundle(u, u.bids[0], SYDNEY_MODES, obj)
    assert b is not None and is_bundle_feasible(b, u, u.bids[0], SYDNEY_MODES)


def test_min_inconvenience_prefers_taxi():
    u = user(10, 20, 30, 100)
    b = feasible_bundle(u, u.bids[0], SYDNEY_MODES, BundleObjective.MIN_INCONVENIENCE)
    assert b.inconvenience(SYDNEY_MODES) == pytest.approx(0.0, abs=1e-9)


SMALL = ModeCatalog((TravelMode(1, 0.5, 0.0), TravelMode(2, 0.25, 1.0), TravelMode(3, 0.1, 3.0)))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.integers(2, 30), st.integers(0, 10), st.integers(0, 40))
def test_grid_witness_implies_lp_feasible(d, t, phi, gamma):
    u = user(float(d), float(t), float(phi), float(gamma))
    lp = feasible_bundle(u, u.bids[0], SMALL, BundleObjective.FEASIBILITY_ONLY)
    if grid_bundle_exists(d, t, phi, gamma, SMALL.speeds, SMALL.rates):
        assert lp is not None
    if lp is not None:
        assert is_bundle_feasible(lp, u, u.bids[0], SMALL)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 20), st.floats(2, 200), st.floats(0, 50), st.floats(0, 200), st.floats(0, 30),
       st.floats(0, 100))
def test_enlarging_budgets_keeps_feasibility(d, t, phi, gamma, dphi, dgamma):
    small = user(d, t, phi, gamma)
    big = user(d, t, phi + dphi, gamma + dgamma)
    if feasible_bundle(small, small.bids[0], SYDNEY_MODES) is not None:
        assert feasible_bundle(big, big.bids[0], SYDNEY_MODES) is not None
