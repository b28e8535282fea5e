"""Seeded synthetic data used by the CLI demos, the tests and the benchmarks."""
import numpy as np

from .hypergraph import Hypergraph, build_hypergraph
from .kpmf import RatingsMatrix


def random_hypergraph(rng, n_max=40, m_max=60, weighted=True) -> Hypergraph:
    """Random valid hypergraph: random edges plus a cover of leftover vertices."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    edges = []
    for _ in range(m):
        size = int(rng.integers(1, min(n, 6) + 1))
        edges.append(rng.choice(n, size=size, replace=False).tolist())
    covered = {v for e in edges for v in e}
    missing = [v for v in range(n) if v not in covered]
    for start in range(0, len(missing), 3):
        edges.append(missing[start:start + 3])
    if weighted:
        weights = rng.uniform(0.1, 3.0, size=len(edges))
    else:
        weights = np.ones(len(edges))
    return build_hypergraph(n, edges, weights)


def random_graph_hypergraph(rng, n_max=30) -> Hypergraph:
    """Random 2-uniform hypergraph (a simple graph) without isolated vertices."""
    n = int(rng.integers(3, n_max + 1))
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    for _ in range(int(rng.integers(0, 2 * n))):
        a, b = rng.choice(n, size=2, replace=False)
        edges.add(tuple(sorted((int(a), int(b)))))
    edges = sorted(edges)
    return build_hypergraph(n, edges, rng.uniform(0.5, 2.0, size=len(edges)))


def planted_hypergraph(seed=0, groups=3, group_size=15, edges_per_group=12,
                       cross_edges=4, size_range=(3, 5)):
    """Planted-partition hypergraph.

    Each group gets ``edges_per_group`` hyperedges of size in ``size_range``
    drawn inside the group, plus a few cross-group hyperedges. Returns
    ``(hypergraph, labels)``.
    """
    rng = np.random.default_rng(seed)
    n = groups * group_size
    labels = np.repeat(np.arange(groups), group_size)
    edges = []
    lo, hi = size_range
    for c in range(groups):
        members = np.flatnonzero(labels == c)
        for _ in range(edges_per_group):
            size = int(rng.integers(lo, hi + 1))
            edges.append(rng.choice(members, size=size, replace=False).tolist())
        # keep every member covered
        covered = {v for e in edges for v in e}
        for v in members:
            if v not in covered:
                partner = rng.choice(members[members != v], size=lo - 1, replace=False)
                edges.append([int(v)] + partner.tolist())
    for _ in range(cross_edges):
        size = int(rng.integers(lo, hi + 1))
        edges.append(rng.choice(n, size=size, replace=False).tolist())
    names = [f"g{labels[i]}_{i}" for i in range(n)]
    return build_hypergraph(n, edges, vertex_names=names), labels


def two_component_hypergraph(sizes=(5, 9)):
    """Two disjoint cyclic 3-uniform rings; labels mark the component."""
    edges = []
    base = 0
    for size in sizes:
        edges += [[base + i, base + (i + 1) % size, base + (i + 2) % size] for i in range(size)]
        base += size
    labels = np.repeat(np.arange(len(sizes)), sizes)
    names = [f"c{labels[i]}_{i}" for i in range(base)]
    return build_hypergraph(base, edges, vertex_names=names), labels


def low_rank_ratings(n_users=40, n_items=30, D=2, blocks=(4, 3), p_in=0.6, p_out=0.08,
                     noise=0.1, spread=0.3, seed=0):
    """Block low-rank ratings whose observation pattern follows the blocks.

    User block ``a`` mostly rates item block ``a mod blocks[1]``, so the
    co-review hypergraphs built from the observations group vertices the
    same way the latent factors do. Factors are block centroids plus
    ``spread`` noise. Returns ``(ratings, U_true, W_true, user_labels,
    item_labels)``.
    """
    rng = np.random.default_rng(seed)
    bu, bw = blocks
    lu = np.arange(n_users) * bu // n_users
    lw = np.arange(n_items) * bw // n_items
    u = rng.standard_normal((bu, D))[lu] + spread * rng.standard_normal((n_users, D))
    w = rng.standard_normal((bw, D))[lw] + spread * rng.standard_normal((n_items, D))
    full = u @ w.T + noise * rng.standard_normal((n_users, n_items))
    prob = np.where((lu[:, None] % bw) == lw[None, :], p_in, p_out)
    mask = rng.random((n_users, n_items)) < prob
    # every row and column keeps at least one observation
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.choice(np.flatnonzero(lw == lu[i] % bw))] = True
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.choice(np.flatnonzero(lu % bw == lw[j])), j] = True
    rows, cols = np.nonzero(mask)
    r = RatingsMatrix(n_users, n_items, rows, cols, full[rows, cols])
    return r, u, w, lu, lw
