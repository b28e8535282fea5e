"""Exact and sparse variational GP inference over hypergraph vertices.

The sparse model is the standard non-whitened SVGP: inducing values
``u = f(Z)`` at a subset of vertices ``Z`` with ``q(u) = N(m, S)`` per latent
output, ``S = L L^T`` stored through its lower Cholesky factor. Gradients of
the ELBO are analytic, including the chain into the spectral kernel
hyperparameters.
"""
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import (
    DomainWarning,
    EmptyInput,
    IndexOutOfRange,
    InputError,
    NonFiniteObjective,
    SingularSystem,
)
from .kernels import GramKernel, is_matern, matern_param_grads, with_params
from .optim import adam_for, OptConfig, inv_softplus, sigmoid, softplus

LOG_2PI = float(np.log(2.0 * np.pi))
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianLikelihood:
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise InputError("noise_variance must be > 0")

    @property
    def num_outputs(self):
        return 1


@dataclass(frozen=True)
class CategoricalLikelihood:
    """Softmax likelihood; expectations by Monte Carlo with fixed base draws."""

    num_classes: int
    mc_samples: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InputError("num_classes must be >= 2")
        if self.mc_samples < 1:
            raise InputError("mc_samples must be >= 1")

    @property
    def num_outputs(self):
        return self.num_classes


Likelihood = Union[GaussianLikelihood, CategoricalLikelihood]


@dataclass(frozen=True)
class SVGPState:
    inducing_indices: np.ndarray
    mean: np.ndarray  # (J, C)
    chol: np.ndarray  # (C, J, J), lower triangular with positive diagonal
    kernel_params: dict = field(default_factory=dict)
    likelihood: Optional[Likelihood] = None

    @property
    def num_inducing(self):
        return self.inducing_indices.shape[0]

    @property
    def num_outputs(self):
        return self.mean.shape[1]

    @property
    def cov(self):
        return np.einsum("cij,ckj->cik", self.chol, self.chol)


@dataclass(frozen=True)
class PredictiveDensity:
    mean: np.ndarray
    variance: np.ndarray
    class_probabilities: Optional[np.ndarray] = None
    noise_variance: float = 0.0
    n_clamped: int = 0


# ---------------------------------------------------------------------------
# linear algebra helpers


def jittered_cholesky(a):
    """Lower Cholesky factor of ``a``, escalating diagonal jitter if needed.

    Jitter starts at 1e-10 * mean(diag) and grows tenfold up to
    1e-6 * mean(diag); beyond that SingularSystem is raised.
    Returns ``(L, jitter)``.
    """
    a = np.asarray(a, dtype=np.float64)
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        raise SingularSystem("matrix has a non-positive mean diagonal")
    jitters = [0.0] + [scale * 10.0 ** p for p in range(-10, -5)]
    for jitter in jitters:
        try:
            low = cholesky(a + jitter * np.eye(a.shape[0]), lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
        return low, jitter
    raise SingularSystem(f"Cholesky failed with jitter up to {jitters[-1]:.3g}")


def _as_index(idx, n, name):
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"{name} has an index outside [0, {n})")
    return idx


def _resolve_kernel(k: GramKernel, state: SVGPState):
    if is_matern(k) and state.kernel_params:
        if any(k.params.get(key) != val for key, val in state.kernel_params.items()):
            return with_params(k, **state.kernel_params)
    return k


# ---------------------------------------------------------------------------
# exact GP


def exact_posterior(k: GramKernel, train_idx, y, lik: GaussianLikelihood,
                    test_idx) -> PredictiveDensity:
    """Conjugate posterior of the latent values at ``test_idx``."""
    kmat = k.matrix if isinstance(k, GramKernel) else np.asarray(k)
    n = kmat.shape[0]
    tr = _as_index(train_idx, n, "train_idx")
    te = _as_index(test_idx, n, "test_idx")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != tr.shape[0]:
        raise InputError("y and train_idx differ in length")
    prior_var = np.diag(kmat)[te].copy()
    if tr.size == 0:
        return PredictiveDensity(np.zeros(te.size), prior_var,
                                 noise_variance=lik.noise_variance)
    ktt = kmat[np.ix_(tr, tr)] + lik.noise_variance * np.eye(tr.size)
    low, _ = jittered_cholesky(ktt)
    alpha = cho_solve((low, True), y)
    kst = kmat[np.ix_(te, tr)]
    mean = kst @ alpha
    w = solve_triangular(low, kst.T, lower=True)
    var = prior_var - np.sum(w * w, axis=0)
    clamped = int(np.sum(var < 0))
    return PredictiveDensity(mean, np.maximum(var, 0.0), None, lik.noise_variance, clamped)


def exact_log_marginal(k: GramKernel, train_idx, y, lik: GaussianLikelihood) -> float:
    """``log N(y | 0, K_tt + noise I)``."""
    kmat = k.matrix if isinstance(k, GramKernel) else np.asarray(k)
    tr = _as_index(train_idx, kmat.shape[0], "train_idx")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    ktt = kmat[np.ix_(tr, tr)] + lik.noise_variance * np.eye(tr.size)
    low, _ = jittered_cholesky(ktt)
    alpha = solve_triangular(low, y, lower=True)
    return float(-0.5 * alpha @ alpha - np.sum(np.log(np.diag(low))) - 0.5 * tr.size * LOG_2PI)


# ---------------------------------------------------------------------------
# SVGP


def _expected_loglik(lik, y, mu, var, eps):
    """Sum of E_q[log p(y|f)] and its gradients w.r.t. marginal means/variances."""
    if isinstance(lik, GaussianLikelihood):
        s2 = lik.noise_variance
        r = y - mu[:, 0]
        quad = r * r + var[:, 0]
        value = float(np.sum(-0.5 * LOG_2PI - 0.5 * np.log(s2) - 0.5 * quad / s2))
        g_mu = (r / s2)[:, None]
        g_var = np.full_like(var, -0.5 / s2)
        g_noise = float(np.sum(-0.5 / s2 + 0.5 * quad / s2 ** 2))
        return value, g_mu, g_var, g_noise
    sd = np.sqrt(var)
    f = mu[None] + sd[None] * eps  # (S, n, C)
    lse = logsumexp(f, axis=-1)
    rows = np.arange(y.size)
    value = float(np.mean(np.sum(f[:, rows, y] - lse, axis=1)))
    resid = -np.exp(f - lse[..., None])
    resid[:, rows, y] += 1.0
    g_mu = resid.mean(axis=0)
    g_var = (resid * eps).mean(axis=0) / (2.0 * sd)
    return value, g_mu, g_var, 0.0


def _categorical_draws(lik, n_train):
    rng = np.random.default_rng(lik.seed)
    return rng.standard_normal((lik.mc_samples, n_train, lik.num_classes))


def _check_labels(lik, y, n):
    if isinstance(lik, CategoricalLikelihood):
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if y.size and (y.min() < 0 or y.max() >= lik.num_classes):
            raise InputError("class labels outside [0, num_classes)")
    else:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise InputError("y and train_idx differ in length")
    return y


def _svgp_objective(kmat, z, idx, y, m, chol, lik, scale, eps, need_grad):
    """ELBO value and (optionally) gradients.

    Returns ``(value, grads)`` where grads has keys mean, chol, K (full N x N
    gradient w.r.t. the Gram matrix), noise_variance.
    """
    j = z.size
    c_out = m.shape[1]
    kzz = kmat[np.ix_(z, z)]
    lz, jitter = jittered_cholesky(kzz)
    kzz = kzz + jitter * np.eye(j)
    p = cho_solve((lz, True), np.eye(j))
    p = 0.5 * (p + p.T)
    knz = kmat[np.ix_(idx, z)]
    kdiag = np.diag(kmat)[idx]
    a = knz @ p
    mu = a @ m
    base_var = kdiag - np.sum(a * knz, axis=1)
    al = np.einsum("nj,cjk->cnk", a, chol)
    var = base_var[:, None] + np.sum(al * al, axis=2).T
    var = np.maximum(var, 1e-12)

    ell, g_mu, g_var, g_noise = _expected_loglik(lik, y, mu, var, eps)

    logdet_kzz = 2.0 * np.sum(np.log(np.diag(lz)))
    kl = 0.0
    for c in range(c_out):
        lc = chol[c]
        tr_ps = np.sum(p * (lc @ lc.T))
        kl += 0.5 * (tr_ps + m[:, c] @ p @ m[:, c] - j + logdet_kzz
                     - 2.0 * np.sum(np.log(np.abs(np.diag(lc)))))
    value = scale * ell - kl
    if not need_grad:
        return value, None

    a_w = scale * g_mu  # (n, C)
    b_w = scale * g_var
    g_m = a.T @ a_w - p @ m
    g_chol = np.empty_like(chol)
    g_kzz = np.zeros((j, j))
    g_knz = np.zeros_like(knz)
    for c in range(c_out):
        lc = chol[c]
        s = lc @ lc.T
        psp = p @ s @ p
        pm = p @ m[:, c]
        at_a = a.T @ a_w[:, c]
        g_l = 2.0 * a.T @ (b_w[:, c][:, None] * al[c]) - p @ lc
        g_l[np.diag_indices(j)] += 1.0 / np.diag(lc)
        g_chol[c] = np.tril(g_l)

        mb = knz.T @ (b_w[:, c][:, None] * knz)
        pmp = p @ mb @ p
        g_kzz += -0.5 * (np.outer(at_a, pm) + np.outer(pm, at_a))
        g_kzz += pmp - psp @ mb @ p - p @ mb @ psp
        g_kzz += 0.5 * (psp + np.outer(pm, pm) - p)
        g_knz += np.outer(a_w[:, c], pm) - 2.0 * b_w[:, c][:, None] * (knz @ (p - psp))

    g_k = np.zeros_like(kmat)
    g_k[np.ix_(z, z)] += g_kzz
    g_k[np.ix_(idx, z)] += g_knz
    g_k[idx, idx] += b_w.sum(axis=1)
    grads = {"mean": g_m, "chol": g_chol, "K": g_k, "noise_variance": scale * g_noise}
    return value, grads


def _prepare(state, k, train_idx, y, lik, batch):
    lik = lik if lik is not None else state.likelihood
    if lik is None:
        raise InputError("no likelihood given")
    k = _resolve_kernel(k, state)
    n = k.size
    tr = _as_index(train_idx, n, "train_idx")
    y = _check_labels(lik, y, tr.size)
    z = _as_index(state.inducing_indices, n, "inducing_indices")
    if batch is None:
        pos = np.arange(tr.size)
    else:
        pos = np.asarray(batch, dtype=np.int64)
    scale = tr.size / pos.size if pos.size else 0.0
    eps = None
    if isinstance(lik, CategoricalLikelihood):
        eps = _categorical_draws(lik, tr.size)[:, pos]
    return k, lik, tr[pos], y[pos], z, scale, eps


def elbo(state: SVGPState, k: GramKernel, train_idx, y, lik=None, batch=None) -> float:
    """Evidence lower bound; ``batch`` selects positions within ``train_idx``."""
    k, lik, idx, yb, z, scale, eps = _prepare(state, k, train_idx, y, lik, batch)
    value, _ = _svgp_objective(k.matrix, z, idx, yb, state.mean, state.chol, lik,
                               scale, eps, need_grad=False)
    return float(value)


def elbo_and_grads(state: SVGPState, k: GramKernel, train_idx, y, lik=None, batch=None):
    """ELBO and its gradients.

    Gradient keys: ``mean``, ``chol`` (lower triangle), ``noise_variance``
    for Gaussian likelihoods, and ``nu``, ``lengthscale``, ``variance`` when
    the kernel is a spectral Matérn kernel.
    """
    k, lik, idx, yb, z, scale, eps = _prepare(state, k, train_idx, y, lik, batch)
    value, g = _svgp_objective(k.matrix, z, idx, yb, state.mean, state.chol, lik,
                               scale, eps, need_grad=True)
    out = {"mean": g["mean"], "chol": g["chol"]}
    if isinstance(lik, GaussianLikelihood):
        out["noise_variance"] = g["noise_variance"]
    if is_matern(k):
        out.update(matern_param_grads(k, g["K"]))
    return float(value), out


def kl_divergence(state: SVGPState, k: GramKernel) -> float:
    """``sum_c KL(q(u_c) || N(0, K_zz))``."""
    k = _resolve_kernel(k, state)
    z = np.asarray(state.inducing_indices)
    kzz = k.matrix[np.ix_(z, z)]
    lz, jitter = jittered_cholesky(kzz)
    j = z.size
    p = cho_solve((lz, True), np.eye(j))
    logdet = 2.0 * np.sum(np.log(np.diag(lz)))
    total = 0.0
    for c in range(state.num_outputs):
        lc = state.chol[c]
        total += 0.5 * (np.sum(p * (lc @ lc.T)) + state.mean[:, c] @ p @ state.mean[:, c]
                        - j + logdet - 2.0 * np.sum(np.log(np.abs(np.diag(lc)))))
    return float(total)


def init_state(k: GramKernel, inducing_indices, lik: Likelihood) -> SVGPState:
    """``q(u) = p(u)``: zero mean and ``S = K_zz`` for every output."""
    z = _as_index(inducing_indices, k.size, "inducing_indices")
    if np.unique(z).size != z.size:
        raise InputError("inducing indices must be distinct")
    if z.size == 0:
        raise InputError("need at least one inducing vertex")
    c = lik.num_outputs
    lz, _ = jittered_cholesky(k.matrix[np.ix_(z, z)])
    chol = np.repeat(lz[None], c, axis=0)
    params = dict(k.params) if is_matern(k) else {}
    return SVGPState(z, np.zeros((z.size, c)), chol, params, lik)


_HYPER = ("nu", "lengthscale", "variance")


def _pack(state, learn_hyper, learn_lik):
    chol = state.chol.copy()
    j = chol.shape[1]
    di = np.diag_indices(j)
    for c in range(chol.shape[0]):
        chol[c][di] = inv_softplus(np.abs(np.diag(chol[c])))
    params = {"mean": state.mean.copy(), "chol": chol}
    if learn_hyper:
        for key in _HYPER:
            params[key] = inv_softplus(state.kernel_params[key])
    if learn_lik:
        params["noise_variance"] = inv_softplus(state.likelihood.noise_variance)
    return params


def _unpack(params, template):
    raw = params["chol"]
    j = raw.shape[1]
    chol = np.tril(raw, -1)
    d = softplus(np.diagonal(raw, axis1=1, axis2=2))
    chol[:, np.arange(j), np.arange(j)] = d
    kp = dict(template.kernel_params)
    for key in _HYPER:
        if key in params:
            kp[key] = float(softplus(params[key]))
    lik = template.likelihood
    if "noise_variance" in params:
        lik = replace(lik, noise_variance=float(softplus(params["noise_variance"])))
    return SVGPState(template.inducing_indices, params["mean"].copy(), chol, kp, lik)


def _chain(params, grads):
    """Map constrained-space gradients onto the unconstrained parameters."""
    out = {"mean": grads["mean"]}
    raw = params["chol"]
    g = np.tril(grads["chol"], -1)
    j = raw.shape[1]
    di = (slice(None), np.arange(j), np.arange(j))
    g[di] = np.diagonal(grads["chol"], axis1=1, axis2=2) * sigmoid(raw[di])
    out["chol"] = g
    for key in _HYPER + ("noise_variance",):
        if key in params:
            out[key] = grads[key] * sigmoid(params[key])
    return out


def fit_svgp(k: GramKernel, train_idx, y, lik: Likelihood, inducing_indices,
             opt_config: OptConfig = OptConfig(), init: Optional[SVGPState] = None):
    """Maximise the ELBO with Adam.

    Returns the final state and the ELBO trace (length ``steps + 1``; entry
    ``t`` is the objective before update ``t``, the last entry the final
    value). Hyperparameters are learnt only for spectral Matérn kernels and
    when ``opt_config.learn_hyperparams`` is set; the noise variance only for
    Gaussian likelihoods with ``learn_likelihood``.
    """
    state = init if init is not None else init_state(k, inducing_indices, lik)
    learn_hyper = bool(opt_config.learn_hyperparams and is_matern(k))
    learn_lik = bool(opt_config.learn_likelihood and isinstance(lik, GaussianLikelihood))
    n_train = len(np.asarray(train_idx).reshape(-1))
    rng = np.random.default_rng(opt_config.seed)
    batch_size = opt_config.batch_size
    params = _pack(state, learn_hyper, learn_lik)
    adam = adam_for(opt_config)
    trace = []
    for step in range(opt_config.steps):
        current = _unpack(params, state)
        batch = None
        if batch_size is not None and batch_size < n_train:
            batch = np.sort(rng.choice(n_train, size=batch_size, replace=False))
        value, grads = elbo_and_grads(current, k, train_idx, y, current.likelihood, batch)
        if not np.isfinite(value):
            raise NonFiniteObjective(
                f"ELBO became {value} at step {step}; kernel params "
                f"{current.kernel_params}, likelihood {current.likelihood}")
        trace.append(value)
        params = adam.step(params, _chain(params, grads))
    final = _unpack(params, state)
    value = elbo(final, k, train_idx, y, final.likelihood)
    if not np.isfinite(value):
        raise NonFiniteObjective(f"final ELBO is {value}")
    trace.append(value)
    return final, np.asarray(trace)


def predict_svgp(state: SVGPState, k: GramKernel, test_idx, lik=None,
                 seed=None) -> PredictiveDensity:
    """Marginals of ``q(f*)``; categorical models also get MC class probabilities."""
    lik = lik if lik is not None else state.likelihood
    k = _resolve_kernel(k, state)
    kmat = k.matrix
    te = _as_index(test_idx, kmat.shape[0], "test_idx")
    z = np.asarray(state.inducing_indices)
    kzz = kmat[np.ix_(z, z)]
    lz, jitter = jittered_cholesky(kzz)
    kxz = kmat[np.ix_(te, z)]
    a = cho_solve((lz, True), kxz.T).T
    mean = a @ state.mean
    al = np.einsum("nj,cjk->cnk", a, state.chol)
    var = (np.diag(kmat)[te] - np.sum(a * kxz, axis=1))[:, None] + np.sum(al * al, axis=2).T
    clamped = int(np.sum(var < 0))
    var = np.maximum(var, 0.0)
    if isinstance(lik, CategoricalLikelihood):
        rng = np.random.default_rng(lik.seed if seed is None else seed)
        draws = rng.standard_normal((lik.mc_samples,) + mean.shape)
        f = mean[None] + np.sqrt(var)[None] * draws
        probs = np.exp(f - logsumexp(f, axis=-1, keepdims=True)).mean(axis=0)
        probs /= probs.sum(axis=1, keepdims=True)
        return PredictiveDensity(mean, var, probs, 0.0, clamped)
    noise = lik.noise_variance if lik is not None else 0.0
    return PredictiveDensity(mean[:, 0], var[:, 0], None, noise, clamped)


def log_predictive_density(pred: PredictiveDensity, y_true) -> float:
    """Mean per-point log predictive density.

    Categorical predictions score ``log p(true class)``; probabilities below
    1e-12 are clamped with a :class:`DomainWarning`. Gaussian predictions
    score ``log N(y | mean, variance + noise_variance)``.
    """
    if pred.class_probabilities is not None:
        y = np.asarray(y_true, dtype=np.int64).reshape(-1)
        probs = pred.class_probabilities
        if y.size == 0:
            raise EmptyInput("no points to score")
        if y.shape[0] != probs.shape[0]:
            raise InputError("length mismatch")
        p = probs[np.arange(y.size), y]
        n_low = int(np.sum(p < PROB_FLOOR))
        if n_low:
            warnings.warn(f"{n_low} probabilities clamped to {PROB_FLOOR}", DomainWarning,
                          stacklevel=2)
        return float(np.mean(np.log(np.maximum(p, PROB_FLOOR))))
    y = np.asarray(y_true, dtype=np.float64).reshape(-1)
    mean = np.asarray(pred.mean).reshape(-1)
    if y.size == 0:
        raise EmptyInput("no points to score")
    if y.shape[0] != mean.shape[0]:
        raise InputError("length mismatch")
    v = np.asarray(pred.variance).reshape(-1) + pred.noise_variance
    if np.any(v <= 0):
        raise InputError("predictive variance must be positive")
    return float(np.mean(-0.5 * LOG_2PI - 0.5 * np.log(v) - 0.5 * (y - mean) ** 2 / v))
