import numpy as np
import pytest

from qtkur import zoo
from qtkur.propagate import steady_state


@pytest.fixture(scope="session")
def demon():
    model, cur = zoo.build_demon()
    return model, cur, steady_state(model).state


@pytest.fixture(scope="session")
def clock():
    model, cur = zoo.build_clock()
    return model, cur, steady_state(model).state


def random_state(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    a = rng.normal(size=(d, rank or d)) + 1j * rng.normal(size=(d, rank or d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)
