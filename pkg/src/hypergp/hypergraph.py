"""Hypergraphs, their matrix representations and graph reductions."""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DuplicateVertexInEdge,
    EmptyHyperedge,
    IndexOutOfRange,
    InputError,
    IsolatedVertex,
    NonPositiveWeight,
)


@dataclass(frozen=True)
class Hypergraph:
    """A validated, immutable hypergraph.

    Vertices are the integers ``0..num_vertices-1``; ``vertex_names`` and
    ``edge_names`` optionally carry the external identifiers.
    """

    num_vertices: int
    hyperedges: tuple
    weights: np.ndarray
    vertex_names: Optional[tuple] = None
    edge_names: Optional[tuple] = field(default=None, compare=False)

    @property
    def num_edges(self):
        return len(self.hyperedges)

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (self.num_vertices == other.num_vertices
                and self.hyperedges == other.hyperedges
                and np.array_equal(self.weights, other.weights)
                and self.vertex_names == other.vertex_names)

    def __hash__(self):
        return hash((self.num_vertices, self.hyperedges, self.weights.tobytes()))

    def __repr__(self):
        return f"Hypergraph(N={self.num_vertices}, M={self.num_edges})"


@dataclass(frozen=True)
class DegreeMatrices:
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray


def build_hypergraph(num_vertices: int, hyperedges: Sequence, weights=None,
                     vertex_names=None, edge_names=None) -> Hypergraph:
    """Validate and freeze a hypergraph.

    Parameters
    ----------
    num_vertices : int
        Number of vertices N.
    hyperedges : sequence of iterables of int
        Vertex indices in ``[0, N)`` for each hyperedge. Order within an
        edge is irrelevant; duplicates are rejected.
    weights : sequence of float, optional
        Positive hyperedge weights, all ones by default.
    """
    n = int(num_vertices)
    if n < 1:
        raise IndexOutOfRange(f"num_vertices must be positive, got {num_vertices}")
    edges = []
    for i, e in enumerate(hyperedges):
        members = [int(v) for v in e]
        if not members:
            raise EmptyHyperedge(f"hyperedge {i} is empty")
        if len(set(members)) != len(members):
            raise DuplicateVertexInEdge(f"hyperedge {i} repeats a vertex: {members}")
        for v in members:
            if v < 0 or v >= n:
                raise IndexOutOfRange(f"hyperedge {i} has vertex {v} outside [0, {n})")
        edges.append(tuple(sorted(members)))
    if weights is None:
        w = np.ones(len(edges))
    else:
        w = np.asarray(weights, dtype=np.float64).copy()
        if w.shape != (len(edges),):
            raise NonPositiveWeight(f"expected {len(edges)} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise NonPositiveWeight("hyperedge weights must be finite and > 0")
    covered = np.zeros(n, dtype=bool)
    for e in edges:
        covered[list(e)] = True
    if not covered.all():
        missing = np.flatnonzero(~covered).tolist()
        raise IsolatedVertex(f"vertices {missing} belong to no hyperedge")
    w.setflags(write=False)
    if vertex_names is not None:
        vertex_names = tuple(vertex_names)
        if len(vertex_names) != n:
            raise IndexOutOfRange("vertex_names must have one entry per vertex")
    if edge_names is not None:
        edge_names = tuple(edge_names)
    return Hypergraph(n, tuple(edges), w, vertex_names, edge_names)


def from_incidence(h, weights=None, vertex_names=None) -> Hypergraph:
    """Hypergraph whose incidence matrix is the binary matrix ``h``."""
    h = np.asarray(h)
    if h.ndim != 2 or not np.all((h == 0) | (h == 1)):
        raise InputError("incidence matrix must be a 2-d 0/1 array")
    edges = [np.flatnonzero(h[:, i]).tolist() for i in range(h.shape[1])]
    return build_hypergraph(h.shape[0], edges, weights, vertex_names)


def incidence_matrix(g: Hypergraph) -> np.ndarray:
    h = np.zeros((g.num_vertices, g.num_edges))
    for i, e in enumerate(g.hyperedges):
        h[list(e), i] = 1.0
    return h


def degree_matrices(g: Hypergraph) -> DegreeMatrices:
    h = incidence_matrix(g)
    return DegreeMatrices(vertex_degrees=h @ g.weights,
                          edge_degrees=h.sum(axis=0).astype(np.int64))


def laplacian(g: Hypergraph) -> np.ndarray:
    """Normalised hypergraph Laplacian ``I - Dv^-1/2 H W De^-1 H^T Dv^-1/2``."""
    h = incidence_matrix(g)
    deg = degree_matrices(g)
    # B B^T with B = Dv^-1/2 H (W De^-1)^1/2 keeps the inner product exactly PSD
    b = h * np.sqrt(g.weights / deg.edge_degrees)[None, :]
    b /= np.sqrt(deg.vertex_degrees)[:, None]
    delta = np.eye(g.num_vertices) - b @ b.T
    return 0.5 * (delta + delta.T)


def dual(g: Hypergraph) -> Hypergraph:
    """Hypergraph with incidence H^T; hyperedges become vertices."""
    edges = _vertex_memberships(g)
    return build_hypergraph(g.num_edges, edges, vertex_names=g.edge_names,
                            edge_names=g.vertex_names)


def _vertex_memberships(g):
    out = [[] for _ in range(g.num_vertices)]
    for i, e in enumerate(g.hyperedges):
        for v in e:
            out[v].append(i)
    return out


def clique_expansion(h, mode="weighted") -> np.ndarray:
    """Adjacency of the clique expansion of incidence matrix ``h``.

    ``weighted`` counts shared hyperedges, ``binary`` indicates any sharing.
    The diagonal is always zero.
    """
    h = np.asarray(h, dtype=np.float64)
    a = h @ h.T
    np.fill_diagonal(a, 0.0)
    if mode == "weighted":
        return a
    if mode == "binary":
        return (a > 0).astype(np.float64)
    raise ValueError(f"mode must be 'weighted' or 'binary', got {mode!r}")


def vertex_adjacency(h, weights=None) -> np.ndarray:
    """Co-membership matrix ``H W H^T``; the diagonal holds vertex degrees."""
    h = np.asarray(h, dtype=np.float64)
    if weights is None:
        return h @ h.T
    return (h * np.asarray(weights, dtype=np.float64)[None, :]) @ h.T


def connected_components(g: Hypergraph) -> np.ndarray:
    """Component label per vertex (vertices sharing a hyperedge are joined)."""
    parent = list(range(g.num_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in g.hyperedges:
        root = find(e[0])
        for v in e[1:]:
            r = find(v)
            if r != root:
                parent[r] = root
    roots = [find(v) for v in range(g.num_vertices)]
    _, labels = np.unique(roots, return_inverse=True)
    return labels
