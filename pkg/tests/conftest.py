import numpy as np
import pytest

from pipedial.data import build_corpus
from pipedial.snapshot import World


@pytest.fixture(scope="session")
def world() -> World:
    return World.default()


@pytest.fixture(scope="session")
def offline_corpus(world):
    return build_corpus(world, "user", world.banks.offline, 300, 1234)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def finite_difference(fn, params, step=1e-5):
    """Central-difference gradient of scalar fn() w.r.t. a flat view of each
    parameter array (the independent oracle for every gradient check)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = fn()
            flat[i] = old - step
            down = fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def relative_error(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))
