import numpy as np
import pytest

from sphereloc import partition


@pytest.fixture(scope="session")
def layout_cache():
    """Memoized solve_layout shared by every test in the session.

    Repulsion solves cost seconds each; the acceptance sweep and the
    unit tests reuse the same layouts through this fixture.
    """
    cache: dict[tuple[int, int], partition.PartitionLayout] = {}

    def get(n: int, seed: int = 0) -> partition.PartitionLayout:
        key = (n, seed)
        if key not in cache:
            cache[key] = partition.solve_layout(n, seed=seed)
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
