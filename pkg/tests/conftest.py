import pytest

from maas_auction.bundles import clear_bundle_cache
from maas_auction.market import BidItem, UserRequest


def taxi_user(uid, resources, price, departure=0, length=1, order=None):
    """A single-bid user whose taxi-only trip meets the request exactly.

    D = 2Q and T = 4Q give Q = D^2 / T, and at 0.5 km/min the taxi covers D in T.
    """
    d = 2.0 * resources
    return UserRequest(uid, d, departure, 0.0, 0.0, (BidItem(1, 4.0 * resources, price),), length, order)


@pytest.fixture(autouse=True)
def _fresh_bundle_cache():
    clear_bundle_cache()
    yield


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Criterion number -> PASS/FAIL line, printed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
