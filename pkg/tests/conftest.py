import numpy as np
import pytest

from relustep.geometry import Hyperplane, RegionSpec

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))


@pytest.fixture
def wedge():
    """Zero region {x < 0.6, y < 0.6}; the chain is plane x = 0.6 then y = 0.6."""
    hs = [Hyperplane([1.0, 0.0], 0.6), Hyperplane([0.0, 1.0], 0.6)]
    return hs, RegionSpec.from_hyperplanes(hs, UNIT_SQUARE)


@pytest.fixture
def half_plane():
    h = Hyperplane([1.0, 0.0], 0.5)
    return h, RegionSpec.from_hyperplanes([h], UNIT_SQUARE)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)`` for the acceptance summary."""
    store = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, title, passed, detail=""):
        store[number] = (title, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        title, passed, detail = store[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}: {detail}")
