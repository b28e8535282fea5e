import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypergp.errors import (
    DuplicateIndex,
    IndexOutOfRange,
    IsolatedVertex,
    NegativeBandwidth,
    NonPositiveHyperparameter,
    NotSymmetric,
)
from hypergp.hypergraph import build_hypergraph, clique_expansion, incidence_matrix, laplacian
from hypergp.inducing import inducing_vertices
from hypergp.kernels import (
    MaternHyperparams,
    diffusion_gram,
    eigendecompose,
    gram_blocks,
    graph_matern_gram,
    matern_gram,
    matern_param_grads,
    matern_spectral_weights,
    with_params,
)
from conftest import CLIQUE_H, connected_random_hypergraph
from oracles import diffusion_dense, matern_dense


def test_eigendecompose_trivial():
    assert np.allclose(eigendecompose(np.eye(3)).eigenvalues, [1, 1, 1])
    assert np.allclose(eigendecompose(np.diag([3.0, 1.0, 2.0])).eigenvalues, [1, 2, 3])


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eigendecompose_reconstructs(rng):
    a = rng.normal(size=(7, 7))
    a = a + a.T
    spec = eigendecompose(a)
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    assert np.linalg.norm(spec.reconstruct() - a) / np.linalg.norm(a) < 1e-8
    u = spec.eigenvectors
    assert np.allclose(u.T @ u, np.eye(7), atol=1e-8)


def test_clique_example_laplacian_null_eigenvalue(clique_example):
    assert abs(eigendecompose(laplacian(clique_example)).eigenvalues[0]) < 1e-8


class TestMatern:
    def test_singleton(self):
        spec = eigendecompose(np.zeros((1, 1)))
        k = matern_gram(spec, MaternHyperparams(1.0, np.sqrt(2.0)), normalize=False)
        assert np.allclose(k.matrix, [[1.0]])

    def test_toy_matches_fractional_power(self, toy):
        delta = laplacian(toy)
        k = matern_gram(eigendecompose(delta), MaternHyperparams(1.5, 5.0), normalize=False)
        ref = matern_dense(delta, 1.5, 5.0, normalize=False)
        assert np.linalg.norm(k.matrix - ref) / np.linalg.norm(ref) < 1e-8

    def test_normalised_mean_diagonal(self, toy):
        k = matern_gram(eigendecompose(laplacian(toy)), MaternHyperparams(2.5, 1.0, 3.0))
        assert np.isclose(np.mean(np.diag(k.matrix)), 3.0)
        ref = matern_dense(laplacian(toy), 2.5, 1.0, 3.0)
        assert np.allclose(k.matrix, ref, atol=1e-10)

    @pytest.mark.parametrize("field", ["nu", "lengthscale", "variance"])
    def test_rejects_nonpositive(self, field):
        kwargs = {"nu": 1.5, "lengthscale": 5.0, "variance": 1.0, field: 0.0}
        with pytest.raises(NonPositiveHyperparameter):
            MaternHyperparams(**kwargs)

    def test_large_nu_weights_monotone(self):
        lam = np.linspace(0, 1, 20)
        for nu in (5.0, 50.0):
            c = matern_spectral_weights(lam, nu, np.sqrt(2 * nu))
            assert np.all(np.diff(c) < 0)

    def test_negative_round_off_clamped(self):
        lam = np.array([-1e-12, 0.0, 0.5])
        c = matern_spectral_weights(lam, 1.5, 2.0)
        assert c[0] == c[1]

    def test_spectral_map(self, rng):
        g = connected_random_hypergraph(rng, 10)
        spec = eigendecompose(laplacian(g))
        hp = MaternHyperparams(1.2, 0.8)
        k = matern_gram(spec, hp, normalize=False)
        u = spec.eigenvectors
        lam = np.clip(spec.eigenvalues, 0, None)
        assert np.allclose(u.T @ k.matrix @ u, np.diag((2 * 1.2 / 0.64 + lam) ** -1.2), atol=1e-8)

    def test_longer_lengthscale_raises_correlation(self, rng):
        g = connected_random_hypergraph(rng, 9)
        spec = eigendecompose(laplacian(g))
        ratios = []
        for ell in (0.5, 1.0, 2.0, 5.0):
            k = matern_gram(spec, MaternHyperparams(1.5, ell)).matrix
            d = np.sqrt(np.diag(k))
            corr = k / np.outer(d, d)
            ratios.append(corr[np.triu_indices(9, 1)].mean())
        assert np.all(np.diff(ratios) > 0)

    def test_with_params_reuses_spectrum(self, toy):
        spec = eigendecompose(laplacian(toy))
        k = matern_gram(spec, MaternHyperparams())
        k2 = with_params(k, nu=2.0)
        assert k2.spectrum is spec
        assert np.allclose(k2.matrix, matern_gram(spec, MaternHyperparams(nu=2.0)).matrix)

    @pytest.mark.parametrize("normalize", [True, False])
    def test_param_grads_finite_difference(self, rng, normalize):
        g = connected_random_hypergraph(rng, 8)
        spec = eigendecompose(laplacian(g))
        hp = MaternHyperparams(1.3, 1.7, 0.9)
        gmat = rng.normal(size=(8, 8))
        k = matern_gram(spec, hp, normalize)
        grads = matern_param_grads(k, gmat)
        eps = 1e-6
        for name in ("nu", "lengthscale", "variance"):
            up = with_params(k, **{name: getattr(hp, name) + eps}).matrix
            dn = with_params(k, **{name: getattr(hp, name) - eps}).matrix
            fd = np.sum(gmat * (up - dn)) / (2 * eps)
            assert np.isclose(grads[name], fd, rtol=1e-5, atol=1e-8), name


class TestDiffusion:
    def test_beta_zero_is_identity(self, toy):
        k = diffusion_gram(eigendecompose(laplacian(toy)), 0.0)
        assert np.array_equal(k.matrix, np.eye(6))

    def test_negative_beta(self, toy):
        with pytest.raises(NegativeBandwidth):
            diffusion_gram(eigendecompose(laplacian(toy)), -0.1)

    def test_clique_example_default_beta(self, clique_example):
        delta = laplacian(clique_example)
        k = diffusion_gram(eigendecompose(delta), 0.01).matrix
        assert np.all((np.diag(k) > 0) & (np.diag(k) <= 1 + 1e-12))
        assert np.linalg.eigvalsh(k).min() > 0
        assert np.allclose(k, diffusion_dense(delta, 0.01), atol=1e-12)

    def test_singleton(self):
        k = diffusion_gram(eigendecompose(np.zeros((1, 1))), 3.0)
        assert np.allclose(k.matrix, [[1.0]])


class TestGraphMatern:
    def test_two_vertex_hand_case(self):
        k = graph_matern_gram(np.array([[0.0, 1.0], [1.0, 0.0]]),
                              MaternHyperparams(1.0, np.sqrt(2.0)), normalize=False)
        # L_sym has eigenvalues (0, 2); (1 + lambda)^-1 gives weights (1, 1/3)
        u = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
        assert np.allclose(k.matrix, u @ np.diag([1.0, 1.0 / 3.0]) @ u.T)

    def test_weighted_and_binary_differ(self):
        hp = MaternHyperparams()
        kw = graph_matern_gram(clique_expansion(CLIQUE_H, "weighted"), hp).matrix
        kb = graph_matern_gram(clique_expansion(CLIQUE_H, "binary"), hp).matrix
        assert not np.allclose(kw, kb)

    def test_identity_adjacency_rejected(self):
        with pytest.raises(NotSymmetric):
            graph_matern_gram(np.eye(3), MaternHyperparams())

    def test_isolated_vertex_rejected(self):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = 1.0
        with pytest.raises(IsolatedVertex):
            graph_matern_gram(a, MaternHyperparams())

    def test_asymmetric_rejected(self):
        a = np.array([[0.0, 1.0], [0.5, 0.0]])
        with pytest.raises(NotSymmetric):
            graph_matern_gram(a, MaternHyperparams())


class TestGramBlocks:
    def test_full_and_single(self, toy):
        k = matern_gram(eigendecompose(laplacian(toy)), MaternHyperparams())
        assert np.array_equal(gram_blocks(k, range(6), range(6)), k.matrix)
        assert gram_blocks(k, [2], [2])[0, 0] == k.matrix[2, 2] > 0

    def test_interlacing_on_inducing_set(self, toy):
        k = matern_gram(eigendecompose(laplacian(toy)), MaternHyperparams())
        z, _ = inducing_vertices(toy, 3, k=2, seed=0)
        sub = gram_blocks(k, z.indices, z.indices)
        outer = np.linalg.eigvalsh(k.matrix)
        inner = np.linalg.eigvalsh(sub)
        assert inner.min() >= outer.min() - 1e-12
        assert inner.max() <= outer.max() + 1e-12

    def test_errors(self, toy):
        k = matern_gram(eigendecompose(laplacian(toy)), MaternHyperparams())
        with pytest.raises(IndexOutOfRange):
            gram_blocks(k, [6], [0])
        with pytest.raises(DuplicateIndex):
            gram_blocks(k, [1, 1], [0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.2, 4.0), st.floats(0.2, 10.0),
       st.floats(0.0, 5.0))
def test_grams_psd(seed, nu, ell, beta):
    g = connected_random_hypergraph(np.random.default_rng(seed), 8)
    spec = eigendecompose(laplacian(g))
    for k in (matern_gram(spec, MaternHyperparams(nu, ell)), diffusion_gram(spec, beta)):
        m = k.matrix
        assert np.allclose(m, m.T, atol=1e-12)
        lam = np.linalg.eigvalsh(m)
        assert lam.min() >= -1e-8 * lam.max()


def test_two_uniform_matern_matches_graph_matern_at_half_eigenvalues(rng):
    n = 7
    edges = [[i, (i + 1) % n] for i in range(n)] + [[0, 3], [2, 5]]
    g = build_hypergraph(n, edges)
    hp = MaternHyperparams(1.5, 2.0)
    kh = matern_gram(eigendecompose(laplacian(g)), hp, normalize=False)
    kg = graph_matern_gram(clique_expansion(incidence_matrix(g)), hp, normalize=False)
    lam_graph = kg.spectrum.eigenvalues
    expected = matern_spectral_weights(lam_graph / 2.0, hp.nu, hp.lengthscale)
    got = np.linalg.eigvalsh(kh.matrix)[::-1]
    assert np.allclose(np.sort(got), np.sort(expected), atol=1e-10)
