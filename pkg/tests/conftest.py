import numpy as np
import pytest

import sepenv as sv


@pytest.fixture(scope="session")
def law12():
    return sv.iid_law((1, 2))


@pytest.fixture(scope="session")
def law123():
    return sv.iid_law((1, 2, 3))


@pytest.fixture(scope="session")
def env12_16(law12):
    return sv.sample_environment(law12, (16,), 3)


@pytest.fixture(scope="session")
def env123_8(law123):
    return sv.sample_environment(law123, (8,), 11)


@pytest.fixture(scope="session")
def env_ones_16():
    return sv.sample_environment(sv.constant_law(1), (16,), 0)


def explicit_env(alpha, c_max=None):
    """Environment with a hand-written occupancy array (1-D)."""
    alpha = np.asarray(alpha, dtype=np.int64)
    c_max = int(alpha.max()) if c_max is None else c_max
    law = sv.iid_law(tuple(sorted(set(int(v) for v in alpha))))
    return sv.Environment(dims=(alpha.size,), alpha=alpha, c_max=c_max,
                          law=law, seed=0)
