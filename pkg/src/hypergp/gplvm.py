"""Latent-space embedding of hypergraph vertices.

Each incidence column is modelled as an independent draw from
``N(0, K_xx * K_VV + noise I)`` where ``*`` is the elementwise product of a
squared-exponential Gram over latent coordinates ``X`` and a fixed hypergraph
kernel ``K_VV``; ``X`` has an isotropic standard-normal prior and is fitted
by MAP.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import _accel
from .errors import DimensionMismatch, InvalidQ, NonFiniteObjective
from .gp import LOG_2PI, jittered_cholesky
from .kernels import GramKernel, SymmetricSpectrum, eigendecompose
from .optim import adam_for, OptConfig, inv_softplus, sigmoid, softplus


@dataclass(frozen=True)
class LatentConfiguration:
    X: np.ndarray
    lengthscale: float = 1.0
    variance: float = 1.0
    noise_variance: float = 0.01

    @property
    def Q(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class EmbeddingResult:
    config: LatentConfiguration
    objective_trace: np.ndarray
    prior_log_density: float
    initial: LatentConfiguration = field(repr=False, default=None)

    @property
    def X(self):
        return self.config.X


def se_gram(X, lengthscale=1.0, variance=1.0):
    X = np.ascontiguousarray(X, dtype=np.float64)
    return variance * np.exp(-0.5 * _accel.sq_dists(X) / lengthscale ** 2)


def _kvv_matrix(k_vv):
    return k_vv.matrix if isinstance(k_vv, GramKernel) else np.asarray(k_vv, dtype=np.float64)


def composite_gram(X, k_vv, lengthscale=1.0, variance=1.0) -> GramKernel:
    """Elementwise product of the latent SE Gram and the hypergraph Gram."""
    kvv = _kvv_matrix(k_vv)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != kvv.shape[0]:
        raise DimensionMismatch(f"X has shape {X.shape}, K_VV is {kvv.shape}")
    mat = se_gram(X, lengthscale, variance) * kvv
    return GramKernel(mat, "composite", {"lengthscale": float(lengthscale),
                                         "variance": float(variance)})


def _latent_prior(X):
    return float(-0.5 * X.size * LOG_2PI - 0.5 * np.sum(X * X))


def _objective(X, kvv, H, lengthscale, variance, noise, need_grad):
    n = X.shape[0]
    m = H.shape[1]
    r2 = _accel.sq_dists(np.ascontiguousarray(X))
    kse = variance * np.exp(-0.5 * r2 / lengthscale ** 2)
    sigma = kse * kvv + noise * np.eye(n)
    low, _ = jittered_cholesky(sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(low)))
    alpha = cho_solve((low, True), H)
    data = -0.5 * m * (n * LOG_2PI + logdet) - 0.5 * np.sum(H * alpha)
    prior = _latent_prior(X)
    value = float(data + prior)
    if not need_grad:
        return value, data, prior, None
    inv = cho_solve((low, True), np.eye(n))
    g = -0.5 * m * inv + 0.5 * alpha @ alpha.T
    p = g * kvv * kse
    grad_x = -(2.0 / lengthscale ** 2) * (p.sum(axis=1)[:, None] * X - p @ X) - X
    grads = {
        "X": grad_x,
        "lengthscale": float(np.sum(p * r2)) / lengthscale ** 3,
        "variance": float(np.sum(p)) / variance,
        "noise_variance": float(np.trace(g)),
    }
    return value, data, prior, grads


def _check(X, k_vv, H):
    kvv = _kvv_matrix(k_vv)
    X = np.asarray(X, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    if X.ndim != 2 or X.shape[0] != kvv.shape[0] or H.shape[0] != kvv.shape[0]:
        raise DimensionMismatch(
            f"X {X.shape}, K_VV {kvv.shape} and H {H.shape} disagree on N")
    return X, kvv, H


def gplvm_marginal_loglik(X, k_vv, H, lengthscale=1.0, variance=1.0,
                          noise_variance=0.01) -> float:
    """Sum of column log densities of ``H`` plus the latent prior ``log p(X)``."""
    X, kvv, H = _check(X, k_vv, H)
    return _objective(X, kvv, H, lengthscale, variance, noise_variance, False)[0]


def gplvm_loglik_and_grads(X, k_vv, H, lengthscale=1.0, variance=1.0, noise_variance=0.01):
    X, kvv, H = _check(X, k_vv, H)
    value, _, _, grads = _objective(X, kvv, H, lengthscale, variance, noise_variance, True)
    return value, grads


def spectral_embedding(delta, Q, vertex_degrees=None) -> np.ndarray:
    """Laplacian eigenvectors after the trivial one, ascending, sign-fixed.

    The trivial direction is ``sqrt(vertex_degrees)`` when degrees are given
    (projected out of the null space so disconnected hypergraphs keep their
    component-separating directions), otherwise the first eigenvector.
    """
    spec = delta if isinstance(delta, SymmetricSpectrum) else eigendecompose(delta)
    n = spec.size
    if not 1 <= int(Q) <= n - 1:
        raise InvalidQ(f"Q must lie in [1, {n - 1}], got {Q}")
    Q = int(Q)
    vecs = spec.eigenvectors
    if vertex_degrees is None:
        basis = vecs[:, 1:]
    else:
        t = np.sqrt(np.asarray(vertex_degrees, dtype=np.float64))
        t /= np.linalg.norm(t)
        null = spec.eigenvalues <= 1e-8
        nz = int(null.sum())
        if nz >= 1:
            v0 = vecs[:, :nz]
            v0 = v0 - np.outer(t, t @ v0)
            left, sv, _ = np.linalg.svd(v0, full_matrices=False)
            rest = left[:, : nz - 1]
            basis = np.hstack([rest, vecs[:, nz:]])
        else:
            basis = vecs[:, 1:]
    out = basis[:, :Q]
    idx = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[idx, np.arange(Q)])
    signs[signs == 0] = 1.0
    return out * signs[None, :]


def initial_latents(k_vv, Q, seed=0, delta=None, vertex_degrees=None, jitter=1e-3):
    """Spectral embedding scaled to unit column variance plus seeded jitter."""
    if delta is None:
        if not isinstance(k_vv, GramKernel) or k_vv.spectrum is None:
            raise ValueError("need a Laplacian (delta) or a spectral K_VV")
        delta = k_vv.spectrum
    x = spectral_embedding(delta, Q, vertex_degrees)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    x = (x - x.mean(axis=0)) / sd
    rng = np.random.default_rng(seed)
    return x + jitter * rng.standard_normal(x.shape)


_POS = ("lengthscale", "variance", "noise_variance")


def fit_gplvm(H, k_vv, Q, opt_config: OptConfig = OptConfig(), X_init=None,
              lengthscale=1.0, variance=1.0, noise_variance=0.01,
              delta=None, vertex_degrees=None) -> EmbeddingResult:
    """MAP latent coordinates by Adam ascent.

    ``K_VV`` stays fixed; the SE lengthscale/variance are learnt when
    ``opt_config.learn_hyperparams`` and the noise when ``learn_likelihood``.
    """
    if X_init is None:
        X_init = initial_latents(k_vv, Q, opt_config.seed, delta, vertex_degrees)
    X, kvv, H = _check(X_init, k_vv, H)
    if X.shape[1] != Q:
        raise DimensionMismatch(f"X_init has {X.shape[1]} columns, expected {Q}")
    start = LatentConfiguration(X.copy(), lengthscale, variance, noise_variance)
    params = {"X": X.copy()}
    fixed = {"lengthscale": lengthscale, "variance": variance, "noise_variance": noise_variance}
    learn = []
    if opt_config.learn_hyperparams:
        learn += ["lengthscale", "variance"]
    if opt_config.learn_likelihood:
        learn.append("noise_variance")
    for key in learn:
        params[key] = inv_softplus(fixed[key])

    def current(p):
        vals = {key: float(softplus(p[key])) if key in p else fixed[key] for key in _POS}
        return p["X"], vals

    adam = adam_for(opt_config)
    trace = []
    for step in range(opt_config.steps):
        x, vals = current(params)
        value, _, _, grads = _objective(x, kvv, H, vals["lengthscale"], vals["variance"],
                                        vals["noise_variance"], True)
        if not np.isfinite(value):
            raise NonFiniteObjective(f"objective became {value} at step {step} ({vals})")
        trace.append(value)
        step_grads = {"X": grads["X"]}
        for key in learn:
            step_grads[key] = grads[key] * sigmoid(params[key])
        params = adam.step(params, step_grads)
    x, vals = current(params)
    value, _, prior, _ = _objective(x, kvv, H, vals["lengthscale"], vals["variance"],
                                    vals["noise_variance"], False)
    if not np.isfinite(value):
        raise NonFiniteObjective(f"final objective is {value}")
    trace.append(value)
    final = LatentConfiguration(np.array(x), **vals)
    return EmbeddingResult(final, np.asarray(trace), prior, start)
