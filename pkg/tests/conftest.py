import numpy as np
import pytest

from evpose.config import Config


def make_cfg(**overrides) -> Config:
    cfg = Config()
    for key, val in overrides.items():
        cfg.set(key.replace("__", "."), val)
    return cfg


def random_events(rng, n, width, height, t_max):
    from evpose.events import EVENT_DTYPE
    ev = np.zeros(n, dtype=EVENT_DTYPE)
    ev["x"] = rng.integers(0, width, n)
    ev["y"] = rng.integers(0, height, n)
    ev["p"] = rng.choice([-1, 1], n)
    ev["t"] = np.sort(rng.integers(0, t_max, n).astype(np.uint64))
    return ev


@pytest.fixture
def rng():
    return np.random.default_rng(0)
