import numpy as np
import pytest


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)


def mc_margin(p: float, n: int, z: float = 3.0) -> float:
    """z binomial standard errors for a proportion p estimated from n draws."""
    return z * np.sqrt(max(p * (1.0 - p), 1e-12) / n)
