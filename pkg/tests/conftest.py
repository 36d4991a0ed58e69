import math

import numpy as np
import pytest

from qcoin.coin import SecretRecord, coin_from_record
from qcoin.hmp import ALL_STRINGS


def within_sigmas(count: int, trials: int, p: float, n_sigma: float = 4.0) -> bool:
    """Binomial check: ``count`` successes out of ``trials`` against probability ``p``."""
    sigma = math.sqrt(trials * p * (1 - p))
    if sigma == 0:
        return count == round(trials * p)
    return abs(count - trials * p) <= n_sigma * sigma


def random_record(coin_id: str, k: int, seed: int) -> SecretRecord:
    g = np.random.default_rng(seed)
    return SecretRecord(coin_id, tuple(ALL_STRINGS[v] for v in g.integers(0, 16, size=k)))


@pytest.fixture
def record60():
    return random_record("coin-60", 60, 1234)


@pytest.fixture
def coin60(record60):
    return coin_from_record(record60)


class FreshFirstBank:
    """Test double for the bank's random stream: challenges the coin's fresh
    registers first, which is the best case for the coin's budget."""

    def __init__(self, coin, seed=0):
        self.coin = coin
        self.g = np.random.default_rng(seed)

    def choice(self, k, size, replace=False):
        fresh = self.coin.fresh_indices()
        used = [i for i in range(k) if i not in fresh]
        return np.array((fresh + used)[:size])

    def integers(self, low, high, size=None):
        return self.g.integers(low, high, size=size)
