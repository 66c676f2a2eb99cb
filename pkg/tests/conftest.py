import numpy as np
import pytest

from submatch.graph import LabeledGraph


def complete_graph(n, labels=None):
    return LabeledGraph(n, [(i, j) for i in range(n) for j in range(i + 1, n)], labels)


def path_graph(n, labels=None):
    return LabeledGraph(n, [(i, i + 1) for i in range(n - 1)], labels)


def random_graph(rng, n, p, n_labels=0):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    labels = rng.integers(n_labels, size=n) if n_labels else None
    return LabeledGraph(n, edges, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
