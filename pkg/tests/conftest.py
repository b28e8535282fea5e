import numpy as np
import pytest

from hypergp.hypergraph import build_hypergraph, from_incidence

# incidence matrix of the five-vertex worked example used for clique expansions
CLIQUE_H = np.array([
    [1, 0, 1, 0],
    [1, 1, 1, 1],
    [1, 0, 1, 1],
    [1, 1, 1, 1],
    [0, 1, 1, 0],
], dtype=float)

CLIQUE_AW = np.array([
    [0, 2, 2, 2, 1],
    [2, 0, 3, 4, 2],
    [2, 3, 0, 3, 1],
    [2, 4, 3, 0, 2],
    [1, 2, 1, 2, 0],
], dtype=float)

CLIQUE_AB = np.ones((5, 5)) - np.eye(5)

# six vertices, four hyperedges: {v1,v2,v4}, {v1,v2,v3}, {v4,v5}, {v6}
TOY_EDGES = [[0, 1, 3], [0, 1, 2], [3, 4], [5]]


@pytest.fixture
def toy():
    return build_hypergraph(6, TOY_EDGES)


@pytest.fixture
def clique_example():
    return from_incidence(CLIQUE_H)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def connected_random_hypergraph(rng, n, m_extra=None, weighted=True):
    """Random hypergraph whose ring of 2-edges keeps it connected."""
    edges = [[i, (i + 1) % n] for i in range(n)] if n > 1 else [[0]]
    m_extra = n if m_extra is None else m_extra
    for _ in range(m_extra):
        size = int(rng.integers(1, min(n, 5) + 1))
        edges.append(rng.choice(n, size=size, replace=False).tolist())
    w = rng.uniform(0.2, 3.0, len(edges)) if weighted else None
    return build_hypergraph(n, edges, w)
