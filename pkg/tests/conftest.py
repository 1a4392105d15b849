import numpy as np
import pytest


def random_spd(rng, k, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    w = np.exp(rng.uniform(0.0, np.log(cond), k))
    return (q * w) @ q.T


def random_shape(rng, k):
    a = random_spd(rng, k)
    return a / np.linalg.det(a) ** (1.0 / k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
