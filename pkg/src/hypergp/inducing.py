"""Inducing-vertex selection: centrality, spectral clustering, cluster sampling."""
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import InputError, InvalidJ, InvalidK, PowerIterationNoConvergence
from .hypergraph import Hypergraph, degree_matrices, incidence_matrix, laplacian, vertex_adjacency
from .kernels import eigendecompose


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int
    centroids: np.ndarray

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)


@dataclass(frozen=True)
class InducingSet:
    indices: np.ndarray
    seed: int
    k: int = 0

    def to_json(self, gamma=None):
        out = {"seed": int(self.seed), "k": int(self.k), "J": int(self.indices.size),
               "indices": [int(i) for i in self.indices]}
        if gamma is not None:
            out["gamma_of_selected"] = [float(gamma[i]) for i in self.indices]
        return out


def eigencentrality(adjacency, vertex_degrees, tol=1e-10, max_iter=10_000) -> np.ndarray:
    """Dominant eigenvector of ``Q = A_v D_v^-1`` scaled to max entry 1.

    Power iteration from the all-ones vector.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    d = np.asarray(vertex_degrees, dtype=np.float64)
    if np.any(a < 0):
        raise InputError("adjacency must be nonnegative")
    if np.any(d <= 0):
        raise InputError("vertex degrees must be positive")
    q = a / d[None, :]
    x = np.ones(a.shape[0])
    x /= np.max(x)
    for _ in range(max_iter):
        nxt = q @ x
        top = np.max(np.abs(nxt))
        if top == 0:
            raise PowerIterationNoConvergence("iterate collapsed to zero")
        nxt /= top
        if np.max(np.abs(nxt - x)) <= tol:
            return np.abs(nxt)
        x = nxt
    raise PowerIterationNoConvergence(f"no convergence within {max_iter} iterations")


def hypergraph_centrality(g: Hypergraph) -> np.ndarray:
    h = incidence_matrix(g)
    return eigencentrality(vertex_adjacency(h, g.weights), degree_matrices(g).vertex_degrees)


def _sign_fix(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            choice = rng.integers(n)
        else:
            choice = rng.choice(n, p=d2 / total)
        centers[c] = points[choice]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(points, k, rng, max_iter, tol):
    centers = _kmeans_pp(points, k, rng)
    for _ in range(max_iter):
        labels, dist = _accel.kmeans_assign(points, centers)
        counts = np.bincount(labels, minlength=k)
        while np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            largest = int(np.argmax(counts))
            members = np.flatnonzero(labels == largest)
            far = members[np.argmax(dist[members])]
            labels[far] = empty
            dist[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centers)
        np.add.at(new, labels, points)
        new /= counts[:, None]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift <= tol:
            break
    inertia = float(np.sum((points - centers[labels]) ** 2))
    return labels, centers, inertia


def kmeans(points, k, seed=0, max_iter=300, tol=1e-9, n_init=1):
    """Lloyd's algorithm with k-means++ seeding, best of ``n_init`` restarts.

    An empty cluster takes the point farthest from its centroid in the
    currently largest cluster. Returns ``(labels, centers)`` of the run
    with the smallest within-cluster sum of squares.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, int(n_init))):
        labels, centers, inertia = _lloyd(points, k, rng, max_iter, tol)
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, centers, inertia)
    return best[0], best[1]


def spectral_clusters(delta, k, seed=0) -> ClusterAssignment:
    """k-means on the eigenvectors of the k smallest Laplacian eigenvalues."""
    delta = np.asarray(delta, dtype=np.float64)
    n = delta.shape[0]
    if not 1 <= int(k) <= n:
        raise InvalidK(f"k must lie in [1, {n}], got {k}")
    k = int(k)
    spec = eigendecompose(delta)
    coords = _sign_fix(spec.eigenvectors[:, :k])
    labels, centers = kmeans(coords, k, seed)
    return ClusterAssignment(labels.astype(np.int64), k, centers)


def select_inducing(gamma, clusters: ClusterAssignment, J, seed=0) -> InducingSet:
    """Draw a cluster with probability proportional to its size, take its
    highest-scoring unselected vertex, repeat until J vertices are chosen.

    Exhausted clusters are dropped from the draw.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    labels = np.asarray(clusters.labels)
    n = labels.size
    if not 1 <= int(J) <= n:
        raise InvalidJ(f"J must lie in [1, {n}], got {J}")
    rng = np.random.default_rng(seed)
    sizes = np.bincount(labels, minlength=clusters.k).astype(np.float64)
    # members of each cluster in descending-gamma order (ties by index)
    queues = []
    for c in range(clusters.k):
        members = np.flatnonzero(labels == c)
        order = np.lexsort((members, -gamma[members]))
        queues.append(list(members[order]))
    remaining = np.array([len(q) for q in queues])
    chosen = []
    for _ in range(int(J)):
        live = remaining > 0
        p = np.where(live, sizes, 0.0)
        s = int(rng.choice(clusters.k, p=p / p.sum()))
        chosen.append(int(queues[s].pop(0)))
        remaining[s] -= 1
    return InducingSet(np.asarray(chosen, dtype=np.int64), int(seed), clusters.k)


def default_k(J, n):
    return int(min(n, max(2, J // 4)))


def inducing_vertices(g: Hypergraph, J, k=None, seed=0):
    """Full selection pipeline on a hypergraph. Returns ``(InducingSet, gamma)``."""
    if k is None:
        k = default_k(J, g.num_vertices)
    gamma = hypergraph_centrality(g)
    clusters = spectral_clusters(laplacian(g), k, seed)
    return select_inducing(gamma, clusters, J, seed), gamma
