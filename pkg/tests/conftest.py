import numpy as np
import pytest

from bowfree.graphs import MixedGraph


def random_dag_lambda(n, p, rng, low=0.1, high=0.9):
    """Random DAG-patterned weight matrix in natural vertex order."""
    lam = np.zeros((n, n))
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                sign = 1.0 if rng.random() < 0.5 else -1.0
                lam[u, v] = sign * rng.uniform(low, high)
    return lam


def graph_from_lambda(lam, bidirected=()):
    n = lam.shape[0]
    directed = [(u, v) for u in range(n) for v in range(n) if lam[u, v] != 0.0]
    return MixedGraph(n, directed, bidirected)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain3():
    """0 -> 1 -> 2 with a noise edge between the endpoints."""
    return MixedGraph(3, [(0, 1), (1, 2)], [(0, 2)])
