"""Kernelised probabilistic matrix factorisation with hypergraph GP priors."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve

from . import _accel
from .errors import DuplicateIndex, IndexOutOfRange, InputError, NonFiniteObjective
from .gp import LOG_2PI, jittered_cholesky
from .hypergraph import Hypergraph, build_hypergraph
from .kernels import GramKernel
from .optim import adam_for, OptConfig, inv_softplus, sigmoid, softplus


@dataclass(frozen=True)
class RatingsMatrix:
    """Observed entries of an ``n_rows x n_cols`` matrix as (row, col, value)."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if not rows.shape == cols.shape == vals.shape:
            raise InputError("rows, cols and values must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows or cols.min() < 0 \
                    or cols.max() >= self.n_cols:
                raise IndexOutOfRange("rating index outside the matrix")
            flat = rows * self.n_cols + cols
            if np.unique(flat).size != flat.size:
                raise DuplicateIndex("duplicate (row, col) rating")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", vals)

    @property
    def num_observed(self):
        return self.rows.size

    @property
    def mask(self):
        m = np.zeros((self.n_rows, self.n_cols), dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return RatingsMatrix(self.n_rows, self.n_cols, self.rows[positions],
                             self.cols[positions], self.values[positions])


@dataclass(frozen=True)
class FactorPair:
    U: np.ndarray
    W: np.ndarray
    noise_variance: float = 1.0

    @property
    def D(self):
        return self.U.shape[1]


class DensePrior:
    """Exact Gaussian prior ``N(0, K)`` on every factor column."""

    def __init__(self, k):
        mat = k.matrix if isinstance(k, GramKernel) else np.asarray(k, dtype=np.float64)
        self.matrix = mat
        self._chol, self.jitter = jittered_cholesky(mat)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @property
    def size(self):
        return self.matrix.shape[0]

    def solve(self, b):
        return cho_solve((self._chol, True), b)


@dataclass(frozen=True, eq=False)
class SparseKernelApprox:
    """Nyström prior ``K_nz K_zz^-1 K_zn + reg I`` with Woodbury solves."""

    inducing_indices: np.ndarray
    k_nz: np.ndarray
    chol_zz: np.ndarray
    jitter: float
    regulariser: float

    def __post_init__(self):
        reg = self.regulariser
        j = self.inducing_indices.size
        kzz = self.chol_zz @ self.chol_zz.T
        inner = reg * kzz + self.k_nz.T @ self.k_nz
        inner_chol, _ = jittered_cholesky(0.5 * (inner + inner.T))
        object.__setattr__(self, "_inner_chol", inner_chol)
        n = self.k_nz.shape[0]
        logdet = ((n - j) * np.log(reg) + 2.0 * np.sum(np.log(np.diag(inner_chol)))
                  - 2.0 * np.sum(np.log(np.diag(self.chol_zz))))
        object.__setattr__(self, "logdet", float(logdet))

    @property
    def size(self):
        return self.k_nz.shape[0]

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        inner = cho_solve((self._inner_chol, True), self.k_nz.T @ b)
        return (b - self.k_nz @ inner) / self.regulariser

    def approx_matrix(self, regularised=False):
        """``K_nz K_zz^-1 K_zn`` (plus the regulariser when asked)."""
        v = cho_solve((self.chol_zz, True), self.k_nz.T)
        out = self.k_nz @ v
        out = 0.5 * (out + out.T)
        if regularised:
            out = out + self.regulariser * np.eye(self.size)
        return out


def nystrom_approx(k, inducing, reg_scale=1e-6) -> SparseKernelApprox:
    mat = k.matrix if isinstance(k, GramKernel) else np.asarray(k, dtype=np.float64)
    z = np.asarray(getattr(inducing, "indices", inducing), dtype=np.int64).reshape(-1)
    n = mat.shape[0]
    if z.size == 0 or z.min() < 0 or z.max() >= n:
        raise IndexOutOfRange(f"inducing indices must lie in [0, {n})")
    if np.unique(z).size != z.size:
        raise DuplicateIndex("inducing indices repeat")
    chol, jitter = jittered_cholesky(mat[np.ix_(z, z)])
    reg = reg_scale * float(np.mean(np.diag(mat)))
    return SparseKernelApprox(z, mat[:, z].copy(), chol, jitter, reg)


def prior_handle(k):
    if isinstance(k, (DensePrior, SparseKernelApprox)):
        return k
    return DensePrior(k)


def _objective(r, u, w, s2, pu, pw, need_grad):
    pred = _accel.pair_dots(r.rows, r.cols, u, w)
    resid = r.values - pred
    n_obs = r.num_observed
    sse = float(resid @ resid)
    loglik = -0.5 * n_obs * (LOG_2PI + np.log(s2)) - 0.5 * sse / s2
    ku_u = pu.solve(u)
    kw_w = pw.solve(w)
    d = u.shape[1]
    prior_u = -0.5 * float(np.sum(u * ku_u)) - 0.5 * d * (pu.size * LOG_2PI + pu.logdet)
    prior_w = -0.5 * float(np.sum(w * kw_w)) - 0.5 * d * (pw.size * LOG_2PI + pw.logdet)
    value = float(loglik + prior_u + prior_w)
    if not need_grad:
        return value, None
    gu, gw = _accel.pair_scatter(r.rows, r.cols, resid / s2, u, w)
    grads = {
        "U": gu - ku_u,
        "W": gw - kw_w,
        "noise_variance": -0.5 * n_obs / s2 + 0.5 * sse / s2 ** 2,
    }
    return value, grads


def _check_sizes(r, fp, pu, pw):
    if fp.U.shape[0] != r.n_rows or pu.size != r.n_rows:
        raise InputError("row factor / row kernel size does not match the ratings")
    if fp.W.shape[0] != r.n_cols or pw.size != r.n_cols:
        raise InputError("column factor / column kernel size does not match the ratings")


def kpmf_log_posterior(r: RatingsMatrix, fp: FactorPair, k_u, k_w) -> float:
    """Masked Gaussian log likelihood plus GP log priors on factor columns,
    all normalising constants included."""
    pu, pw = prior_handle(k_u), prior_handle(k_w)
    _check_sizes(r, fp, pu, pw)
    return _objective(r, fp.U, fp.W, fp.noise_variance, pu, pw, False)[0]


def kpmf_log_posterior_and_grads(r: RatingsMatrix, fp: FactorPair, k_u, k_w):
    pu, pw = prior_handle(k_u), prior_handle(k_w)
    _check_sizes(r, fp, pu, pw)
    return _objective(r, fp.U, fp.W, fp.noise_variance, pu, pw, True)


def init_factors(n_rows, n_cols, D, seed=0, scale=0.1, noise_variance=1.0) -> FactorPair:
    rng = np.random.default_rng(seed)
    return FactorPair(scale * rng.standard_normal((n_rows, D)),
                      scale * rng.standard_normal((n_cols, D)), noise_variance)


def kpmf_fit(r: RatingsMatrix, D, k_u, k_w, opt_config: OptConfig = OptConfig(),
             init: Optional[FactorPair] = None, noise_variance=1.0):
    """MAP factors by Adam ascent on the log posterior.

    The noise variance is learnt through a softplus when
    ``opt_config.learn_likelihood`` is set. Returns ``(FactorPair, trace)``
    with ``trace`` of length ``steps + 1``.
    """
    pu, pw = prior_handle(k_u), prior_handle(k_w)
    fp = init if init is not None else init_factors(r.n_rows, r.n_cols, D, opt_config.seed,
                                                    noise_variance=noise_variance)
    _check_sizes(r, fp, pu, pw)
    params = {"U": fp.U.copy(), "W": fp.W.copy()}
    learn_noise = opt_config.learn_likelihood
    if learn_noise:
        params["noise_variance"] = inv_softplus(fp.noise_variance)

    def noise(p):
        return float(softplus(p["noise_variance"])) if learn_noise else fp.noise_variance

    adam = adam_for(opt_config)
    trace = []
    for step in range(opt_config.steps):
        value, grads = _objective(r, params["U"], params["W"], noise(params), pu, pw, True)
        if not np.isfinite(value):
            raise NonFiniteObjective(f"log posterior became {value} at step {step}")
        trace.append(value)
        g = {"U": grads["U"], "W": grads["W"]}
        if learn_noise:
            g["noise_variance"] = grads["noise_variance"] * sigmoid(params["noise_variance"])
        params = adam.step(params, g)
    final = FactorPair(params["U"], params["W"], noise(params))
    value = _objective(r, final.U, final.W, final.noise_variance, pu, pw, False)[0]
    if not np.isfinite(value):
        raise NonFiniteObjective(f"final log posterior is {value}")
    trace.append(value)
    return final, np.asarray(trace)


def kpmf_predict(fp: FactorPair, pairs, clip=None) -> np.ndarray:
    """``U[row] . W[col]`` for each pair, optionally clipped to ``(lo, hi)``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    rows, cols = pairs[:, 0], pairs[:, 1]
    if rows.size and (rows.min() < 0 or rows.max() >= fp.U.shape[0]
                      or cols.min() < 0 or cols.max() >= fp.W.shape[0]):
        raise IndexOutOfRange("prediction pair outside the factor matrices")
    out = _accel.pair_dots(rows, cols, np.ascontiguousarray(fp.U), np.ascontiguousarray(fp.W))
    if clip is not None:
        out = np.clip(out, clip[0], clip[1])
    return out


def train_test_split(r: RatingsMatrix, test_fraction, seed=0):
    """Seeded shuffle of the observed entries into (train, test)."""
    if not 0.0 <= test_fraction < 1.0:
        raise InputError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(r.num_observed)
    n_test = int(round(test_fraction * r.num_observed))
    return r.subset(np.sort(perm[n_test:])), r.subset(np.sort(perm[:n_test]))


def _hypergraph_from_mask(mask) -> Hypergraph:
    n = mask.shape[0]
    edges = [np.flatnonzero(mask[:, j]).tolist() for j in range(mask.shape[1])]
    edges = [e for e in edges if e]
    covered = mask.any(axis=1)
    # rows with no observation would be isolated; give each its own singleton edge
    edges += [[i] for i in np.flatnonzero(~covered)]
    return build_hypergraph(n, edges)


def co_review_hypergraphs(r: RatingsMatrix):
    """Row hypergraph (columns as hyperedges) and its dual, from the mask.

    Columns without observations are dropped as hyperedges and rows without
    observations receive singleton hyperedges, so both hypergraphs are valid.
    """
    mask = r.mask
    return _hypergraph_from_mask(mask), _hypergraph_from_mask(mask.T)
