import numpy as np
import pytest

from cutpointph.model import ContinuousCutpointModel, DiscreteCutpointModel


def random_rate_matrix(rng, m, scale=1.0):
    T = rng.uniform(0.0, 1.0, (m, m))
    np.fill_diagonal(T, 0.0)
    T *= rng.uniform(0.0, 1.0, (m, m)) < 0.8
    exit_rates = rng.uniform(0.1, 1.0, m)
    np.fill_diagonal(T, -(T.sum(axis=1) + exit_rates))
    return T * scale


def random_continuous(rng, m=None, n=None):
    m = m if m is not None else int(rng.integers(1, 6))
    n = n if n is not None else int(rng.integers(0, 4))
    alpha = rng.dirichlet(np.ones(m))
    mats = [random_rate_matrix(rng, m, rng.uniform(0.5, 3.0)) for _ in range(n + 1)]
    cuts = np.cumsum(rng.uniform(0.2, 1.5, n))
    return ContinuousCutpointModel(alpha, mats, cuts)


def random_substochastic(rng, m):
    P = rng.dirichlet(np.ones(m + 1), size=m)
    P[:, -1] = np.maximum(P[:, -1], 0.05)
    P /= P.sum(axis=1, keepdims=True)
    return P[:, :m]


def random_discrete(rng, m=None, n=None):
    m = m if m is not None else int(rng.integers(1, 6))
    n = n if n is not None else int(rng.integers(0, 4))
    alpha = rng.dirichlet(np.ones(m))
    mats = [random_substochastic(rng, m) for _ in range(n + 1)]
    cuts = np.cumsum(rng.integers(1, 7, n))
    return DiscreteCutpointModel(alpha, mats, cuts)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def reference_erlang():
    return ContinuousCutpointModel.erlang(4, [2.8582, 1.4421], [0.82])


@pytest.fixture
def noncommuting():
    """Three-phase, two-cut model whose generators do not commute."""
    return random_continuous(np.random.default_rng(7), 3, 2)
