import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypergp.errors import DomainWarning, InputError, SingularSystem
from hypergp.gp import (
    CategoricalLikelihood,
    GaussianLikelihood,
    PredictiveDensity,
    SVGPState,
    elbo,
    elbo_and_grads,
    exact_log_marginal,
    exact_posterior,
    fit_svgp,
    init_state,
    jittered_cholesky,
    kl_divergence,
    log_predictive_density,
    predict_svgp,
)
from hypergp.hypergraph import laplacian
from hypergp.io import load_svgp, save_svgp
from hypergp.kernels import MaternHyperparams, eigendecompose, matern_gram, with_params
from hypergp.optim import OptConfig, smoothed
from hypergp.synthetic import planted_hypergraph
from conftest import connected_random_hypergraph
from oracles import gp_log_marginal_dense, gp_posterior_dense


def _kernel(g, **hp):
    return matern_gram(eigendecompose(laplacian(g)), MaternHyperparams(**hp))


def _random_state(rng, k, z, c, lik):
    j = len(z)
    chol = np.tril(rng.normal(scale=0.3, size=(c, j, j)))
    for i in range(c):
        chol[i][np.diag_indices(j)] = rng.uniform(0.2, 1.0, j)
    return SVGPState(np.asarray(z), rng.normal(size=(j, c)), chol, dict(k.params), lik)


@pytest.fixture
def regression():
    g, _ = planted_hypergraph(seed=3, groups=3, group_size=10)
    k = _kernel(g)
    rng = np.random.default_rng(7)
    f = np.linalg.cholesky(k.matrix + 1e-9 * np.eye(30)) @ rng.standard_normal(30)
    y = f + 0.3 * rng.standard_normal(30)
    train = np.flatnonzero(rng.random(30) < 0.7)
    return k, train, y[train]


class TestExact:
    def test_toy_oracle(self, toy):
        k = _kernel(toy, nu=1.5, lengthscale=5.0)
        tr, te = [0, 2, 3, 5], [1, 4]
        y = np.array([0.3, -1.0, 0.8, 0.1])
        pred = exact_posterior(k, tr, y, GaussianLikelihood(0.1), te)
        mean, var = gp_posterior_dense(k.matrix, tr, y, 0.1, te)
        assert np.allclose(pred.mean, mean, atol=1e-8)
        assert np.allclose(pred.variance, var, atol=1e-8)

    def test_noiseless_interpolation(self, toy):
        k = _kernel(toy)
        tr = [0, 1, 4]
        y = np.array([1.0, -2.0, 0.5])
        pred = exact_posterior(k, tr, y, GaussianLikelihood(1e-8), tr)
        assert np.allclose(pred.mean, y, atol=1e-4)

    def test_empty_training_set(self, toy):
        k = _kernel(toy)
        pred = exact_posterior(k, [], [], GaussianLikelihood(0.5), range(6))
        assert np.array_equal(pred.mean, np.zeros(6))
        assert np.allclose(pred.variance, np.diag(k.matrix))

    def test_log_marginal_oracle(self, regression):
        k, tr, y = regression
        lik = GaussianLikelihood(0.2)
        assert np.isclose(exact_log_marginal(k, tr, y, lik),
                          gp_log_marginal_dense(k.matrix, tr, y, 0.2), atol=1e-8)

    def test_length_mismatch(self, toy):
        with pytest.raises(InputError):
            exact_posterior(_kernel(toy), [0, 1], [1.0], GaussianLikelihood(), [2])


def test_jitter_escalation_and_failure():
    a = np.ones((3, 3))
    low, jitter = jittered_cholesky(a)
    assert jitter > 0
    assert np.allclose(low @ low.T, a + jitter * np.eye(3))
    with pytest.raises(SingularSystem):
        jittered_cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestElbo:
    def test_prior_state_has_zero_kl(self, toy):
        k = _kernel(toy)
        st0 = init_state(k, [0, 2, 5], GaussianLikelihood())
        assert abs(kl_divergence(st0, k)) < 1e-12

    def test_kl_positive_elsewhere(self, toy, rng):
        k = _kernel(toy)
        for _ in range(20):
            s = _random_state(rng, k, [0, 2, 5], 2, CategoricalLikelihood(2))
            assert kl_divergence(s, k) > 0

    def test_scalar_case(self, toy):
        k = _kernel(toy)
        kv = k.matrix[3, 3]
        m, l, y, s2 = 0.4, 0.3, 1.1, 0.25
        state = SVGPState(np.array([3]), np.array([[m]]), np.array([[[l]]]),
                          dict(k.params), GaussianLikelihood(s2))
        s = l * l
        ell = -0.5 * math.log(2 * math.pi * s2) - 0.5 * ((y - m) ** 2 + s) / s2
        kl = 0.5 * (s / kv + m * m / kv - 1 + math.log(kv) - math.log(s))
        assert np.isclose(elbo(state, k, [3], [y]), ell - kl, atol=1e-12)

    def test_bound_below_log_marginal(self, regression, rng):
        k, tr, y = regression
        lik = GaussianLikelihood(0.1)
        lml = exact_log_marginal(k, tr, y, lik)
        for z in (np.arange(30), rng.choice(30, 8, replace=False)):
            for _ in range(5):
                s = _random_state(rng, k, z, 1, lik)
                assert elbo(s, k, tr, y) <= lml + 1e-6

    def test_tight_at_optimum_with_all_vertices(self, regression):
        """Closed-form optimal q(u) with Z = V makes the bound exact."""
        k, tr, y = regression
        s2 = 0.1
        kmat = k.matrix
        n = kmat.shape[0]
        proj = np.zeros((len(tr), n))
        proj[np.arange(len(tr)), tr] = 1.0
        kinv = np.linalg.inv(kmat)
        cov = np.linalg.inv(kinv + proj.T @ proj / s2)
        mean = cov @ proj.T @ y / s2
        state = SVGPState(np.arange(n), mean[:, None], np.linalg.cholesky(cov)[None],
                          dict(k.params), GaussianLikelihood(s2))
        assert np.isclose(elbo(state, k, tr, y), exact_log_marginal(k, tr, y, state.likelihood),
                          atol=1e-6)

    def test_minibatch_rescaling(self, regression, rng):
        k, tr, y = regression
        lik = GaussianLikelihood(0.3)
        s = _random_state(rng, k, np.arange(0, 30, 3), 1, lik)
        full = elbo(s, k, tr, y)
        kl = kl_divergence(s, k)
        batches = np.array_split(np.arange(len(tr)), 4)
        # each batch estimate is unbiased up to its share of the data term
        data = sum((elbo(s, k, tr, y, batch=b) + kl) * len(b) / len(tr) for b in batches)
        assert np.isclose(data - kl, full, atol=1e-8)


def _fd_check(state, k, tr, y, rng, step=1e-5):
    _, grads = elbo_and_grads(state, k, tr, y)
    f = lambda s, kk=k: elbo(s, kk, tr, y)
    # mean
    for _ in range(4):
        idx = tuple(rng.integers(0, n) for n in state.mean.shape)
        up, dn = state.mean.copy(), state.mean.copy()
        up[idx] += step
        dn[idx] -= step
        fd = (f(replace(state, mean=up)) - f(replace(state, mean=dn))) / (2 * step)
        assert np.isclose(grads["mean"][idx], fd, rtol=1e-4, atol=1e-6)
    # lower triangle of the Cholesky factor
    j = state.chol.shape[1]
    for _ in range(6):
        c = int(rng.integers(0, state.chol.shape[0]))
        a = int(rng.integers(0, j))
        b = int(rng.integers(0, a + 1))
        up, dn = state.chol.copy(), state.chol.copy()
        up[c, a, b] += step
        dn[c, a, b] -= step
        fd = (f(replace(state, chol=up)) - f(replace(state, chol=dn))) / (2 * step)
        assert np.isclose(grads["chol"][c, a, b], fd, rtol=1e-4, atol=1e-6)
    for name in ("nu", "lengthscale", "variance"):
        hp = state.kernel_params[name]
        ku = with_params(k, **{name: hp + step})
        kd = with_params(k, **{name: hp - step})
        su = replace(state, kernel_params={**state.kernel_params, name: hp + step})
        sd = replace(state, kernel_params={**state.kernel_params, name: hp - step})
        fd = (f(su, ku) - f(sd, kd)) / (2 * step)
        assert np.isclose(grads[name], fd, rtol=1e-4, atol=1e-6), name
    if isinstance(state.likelihood, GaussianLikelihood):
        s2 = state.likelihood.noise_variance
        su = replace(state, likelihood=GaussianLikelihood(s2 + step))
        sd = replace(state, likelihood=GaussianLikelihood(s2 - step))
        fd = (f(su) - f(sd)) / (2 * step)
        assert np.isclose(grads["noise_variance"], fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_gaussian(seed):
    rng = np.random.default_rng(seed)
    g = connected_random_hypergraph(rng, 10)
    k = _kernel(g, nu=1.3, lengthscale=1.5, variance=0.8)
    tr = rng.choice(10, 7, replace=False)
    y = rng.normal(size=7)
    z = rng.choice(10, 4, replace=False)
    _fd_check(_random_state(rng, k, z, 1, GaussianLikelihood(0.4)), k, tr, y, rng)


def test_gradients_categorical():
    rng = np.random.default_rng(5)
    g = connected_random_hypergraph(rng, 10)
    k = _kernel(g, nu=2.0, lengthscale=1.0)
    tr = rng.choice(10, 8, replace=False)
    y = rng.integers(0, 3, 8)
    z = rng.choice(10, 5, replace=False)
    _fd_check(_random_state(rng, k, z, 3, CategoricalLikelihood(3, 10, 4)), k, tr, y, rng)


class TestFit:
    def test_zero_steps(self, regression):
        k, tr, y = regression
        lik = GaussianLikelihood(0.1)
        state, trace = fit_svgp(k, tr, y, lik, np.arange(5), OptConfig(steps=0))
        init = init_state(k, np.arange(5), lik)
        assert trace.shape == (1,)
        assert np.array_equal(state.mean, init.mean)
        assert np.allclose(state.chol, init.chol, atol=1e-12)

    def test_improves_and_smoothed_monotone(self, regression):
        k, tr, y = regression
        cfg = OptConfig(steps=600, learning_rate=0.01, seed=0)
        state, trace = fit_svgp(k, tr, y, GaussianLikelihood(0.5), np.arange(0, 30, 2), cfg)
        assert trace[-1] > trace[0]
        sm = smoothed(trace[:-1], 50)
        assert np.all(np.diff(sm) >= 0)

    def test_all_vertices_reach_log_marginal(self, regression):
        k, tr, y = regression
        lik = GaussianLikelihood(0.1)
        cfg = OptConfig(steps=3000, learning_rate=0.02, learn_hyperparams=False,
                        learn_likelihood=False, final_lr_ratio=0.01)
        state, trace = fit_svgp(k, tr, y, lik, np.arange(30), cfg)
        lml = exact_log_marginal(k, tr, y, lik)
        assert abs(trace[-1] - lml) < 1e-2
        te = np.setdiff1d(np.arange(30), tr)
        pred = predict_svgp(state, k, te)
        ref = exact_posterior(k, tr, y, lik, te)
        assert np.allclose(pred.mean, ref.mean, atol=1e-3)
        assert np.allclose(pred.variance, ref.variance, atol=1e-3)

    def test_deterministic(self, regression):
        k, tr, y = regression
        cfg = OptConfig(steps=50, learning_rate=0.01, batch_size=10, seed=4)
        a = fit_svgp(k, tr, y, GaussianLikelihood(0.2), [0, 5, 9], cfg)[1]
        b = fit_svgp(k, tr, y, GaussianLikelihood(0.2), [0, 5, 9], cfg)[1]
        assert np.array_equal(a, b)

    def test_hyperparameters_stay_positive(self, regression):
        k, tr, y = regression
        state, _ = fit_svgp(k, tr, y, GaussianLikelihood(0.2), [0, 5, 9],
                            OptConfig(steps=100, learning_rate=0.1))
        assert all(v > 0 for v in state.kernel_params.values())
        assert state.likelihood.noise_variance > 0

    def test_rejects_duplicate_inducing(self, toy):
        with pytest.raises(InputError):
            init_state(_kernel(toy), [1, 1], GaussianLikelihood())


class TestPredict:
    def test_prior_state_gives_prior_marginal(self, toy):
        k = _kernel(toy)
        state = init_state(k, [0, 3, 4], GaussianLikelihood())
        pred = predict_svgp(state, k, [3, 1])
        assert np.allclose(pred.mean, 0.0)
        assert np.allclose(pred.variance, np.diag(k.matrix)[[3, 1]], atol=1e-10)

    def test_categorical_saturation(self, toy):
        k = _kernel(toy)
        lik = CategoricalLikelihood(3, 50)
        state = init_state(k, range(6), lik)
        mean = np.zeros((6, 3))
        mean[:, 2] = 40.0
        chol = state.chol * 1e-3
        state = replace(state, mean=mean, chol=chol)
        pred = predict_svgp(state, k, range(6))
        assert np.allclose(pred.class_probabilities.sum(axis=1), 1.0, atol=1e-8)
        assert np.all(pred.class_probabilities[:, 2] > 1 - 1e-10)

    def test_probabilities_on_simplex(self, toy, rng):
        k = _kernel(toy)
        lik = CategoricalLikelihood(4, 7)
        state = _random_state(rng, k, [0, 1, 5], 4, lik)
        p = predict_svgp(state, k, range(6)).class_probabilities
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-8)


class TestLogPredictiveDensity:
    def test_certain(self):
        pred = PredictiveDensity(np.zeros((2, 2)), np.zeros((2, 2)),
                                 np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert log_predictive_density(pred, [0, 1]) == 0.0

    def test_uniform(self):
        pred = PredictiveDensity(np.zeros((1, 3)), np.zeros((1, 3)), np.full((1, 3), 1 / 3))
        assert np.isclose(log_predictive_density(pred, [1]), -1.0986, atol=1e-4)

    def test_gaussian(self):
        pred = PredictiveDensity(np.zeros(1), np.ones(1))
        assert np.isclose(log_predictive_density(pred, [0.0]), -0.9189, atol=1e-4)

    def test_zero_probability_clamped(self):
        pred = PredictiveDensity(np.zeros((1, 2)), np.zeros((1, 2)), np.array([[1.0, 0.0]]))
        with pytest.warns(DomainWarning):
            v = log_predictive_density(pred, [1])
        assert np.isclose(v, math.log(1e-12))


def test_checkpoint_roundtrip(tmp_path, toy, rng):
    k = _kernel(toy)
    for lik in (GaussianLikelihood(0.3), CategoricalLikelihood(3, 5, 2)):
        state = _random_state(rng, k, [4, 0, 2], lik.num_outputs, lik)
        save_svgp(state, tmp_path / "ckpt")
        back = load_svgp(tmp_path / "ckpt")
        assert np.array_equal(back.inducing_indices, state.inducing_indices)
        assert np.array_equal(back.mean, state.mean)
        assert np.array_equal(back.chol, state.chol)
        assert back.kernel_params == state.kernel_params
        assert back.likelihood == state.likelihood


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_predictive_variance_nonnegative(seed):
    rng = np.random.default_rng(seed)
    g = connected_random_hypergraph(rng, 9)
    k = _kernel(g)
    z = rng.choice(9, int(rng.integers(1, 10)), replace=False)
    state = _random_state(rng, k, z, 1, GaussianLikelihood())
    pred = predict_svgp(state, k, range(9))
    assert np.all(pred.variance >= 0)
