import numpy as np
import pytest

from safestab import build_scenario
from safestab.filters import make_filter_config


@pytest.fixture(scope="session")
def linear():
    return build_scenario("linear2d")


@pytest.fixture(scope="session")
def tumor():
    return build_scenario("tumor3d")


@pytest.fixture(scope="session")
def linear_cfg(linear):
    return make_filter_config(linear.sys, linear.clf, linear.safe_set, gamma=1.0)


@pytest.fixture(scope="session")
def tumor_cfg(tumor):
    return make_filter_config(tumor.sys, tumor.clf, tumor.safe_set, gamma=1.0)


def sample_safe_states(bundle, count, seed, w_cap=None):
    """Seeded rejection sample of safe-set states inside the scenario domain."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(100000):
        x = rng.uniform(bundle.domain[:, 0], bundle.domain[:, 1])
        if bundle.safe_set.min_value(x) < 0.0:
            continue
        if w_cap is not None and bundle.clf.value(x) > w_cap:
            continue
        out.append(x)
        if len(out) == count:
            return np.array(out)
    raise RuntimeError("rejection sampling exhausted")
