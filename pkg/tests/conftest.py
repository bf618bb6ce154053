import numpy as np
import pytest
from hypothesis import strategies as st

from spatialmatch import MarketInstance

coords = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_subnormal=False)


@st.composite
def instances(draw, max_riders=6, max_drivers=8, min_extra=0, grid=None):
    """Small instances; ``grid`` snaps coordinates to multiples of 1/grid to force ties."""
    n = draw(st.integers(0, max_riders))
    m = draw(st.integers(min(n + min_extra, max_drivers), max_drivers))
    if grid:
        pts = st.integers(0, grid).map(lambda k: k / grid)
    else:
        pts = coords
    riders = draw(st.lists(pts, min_size=n, max_size=n))
    drivers = draw(st.lists(pts, min_size=m, max_size=m))
    return MarketInstance(riders, drivers, 1.0)


@pytest.fixture
def two_pairs():
    """Two riders, two drivers on [0, 7] where arrival order changes greedy's cost."""
    return MarketInstance([3.0, 6.0], [0.5, 4.5], 7.0)


def random_instances(count, n_max=6, m_max=8, seed=0, balanced=False):
    from spatialmatch import sample_instance

    rng = np.random.default_rng(seed)
    for s in range(count):
        n = int(rng.integers(0, n_max + 1))
        m = n if balanced else int(rng.integers(n, m_max + 1))
        yield sample_instance(n, m, seed=s + 1000 * seed)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
