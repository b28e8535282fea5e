"""Spectral Gram matrices over hypergraph vertices.

All kernels here are matrix functions of a symmetric Laplacian: the
eigendecomposition is computed once and every hyperparameter setting only
rescales the eigenvalues, which is what makes hyperparameter learning cheap.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateIndex,
    EigenSolverFailure,
    IndexOutOfRange,
    IsolatedVertex,
    NegativeBandwidth,
    NonPositiveHyperparameter,
    NotSymmetric,
)


@dataclass(frozen=True)
class SymmetricSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self, values=None):
        """``U diag(values) U^T``; defaults to the original eigenvalues."""
        lam = self.eigenvalues if values is None else values
        u = self.eigenvectors
        out = (u * lam[None, :]) @ u.T
        return 0.5 * (out + out.T)


@dataclass(frozen=True)
class MaternHyperparams:
    nu: float = 1.5
    lengthscale: float = 5.0
    variance: float = 1.0

    def __post_init__(self):
        for name in ("nu", "lengthscale", "variance"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise NonPositiveHyperparameter(f"{name} must be > 0, got {value}")

    def as_dict(self):
        return {"nu": float(self.nu), "lengthscale": float(self.lengthscale),
                "variance": float(self.variance)}


@dataclass(frozen=True)
class GramKernel:
    """A vertex-by-vertex covariance plus a record of how it was made.

    ``spectrum`` is kept for spectral families so the same decomposition can
    be reused at new hyperparameters (see :func:`with_params`).
    """

    matrix: np.ndarray
    family: str
    params: dict = field(default_factory=dict)
    spectrum: Optional[SymmetricSpectrum] = field(default=None, repr=False)
    normalize: bool = False

    @property
    def size(self):
        return self.matrix.shape[0]


def _check_symmetric(m, tol=1e-8):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if not np.allclose(m, m.T, rtol=0.0, atol=tol * scale):
        raise NotSymmetric("matrix is not symmetric")
    return m


def eigendecompose(m) -> SymmetricSpectrum:
    m = _check_symmetric(m)
    try:
        lam, u = np.linalg.eigh(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:
        raise EigenSolverFailure(str(exc)) from exc
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(u))):
        raise EigenSolverFailure("eigensolver returned non-finite values")
    return SymmetricSpectrum(lam, u)


def matern_spectral_weights(eigenvalues, nu, lengthscale):
    """Unnormalised Matérn spectral map ``(2 nu / l^2 + lambda)^-nu``."""
    lam = np.clip(eigenvalues, 0.0, None)
    return (2.0 * nu / lengthscale ** 2 + lam) ** (-nu)


def _matern_log_weight_grads(lam, nu, lengthscale):
    base = 2.0 * nu / lengthscale ** 2 + lam
    d_nu = -np.log(base) - nu * (2.0 / lengthscale ** 2) / base
    d_ell = 4.0 * nu ** 2 / (lengthscale ** 3 * base)
    return d_nu, d_ell


def _matern_coefficients(eigenvalues, hp, normalize):
    s = matern_spectral_weights(eigenvalues, hp.nu, hp.lengthscale)
    if normalize:
        # mean(diag(U S U^T)) = sum(s) / N for orthonormal U
        return hp.variance * s.shape[0] * s / s.sum()
    return hp.variance * s


def matern_gram(spectrum: SymmetricSpectrum, hp: MaternHyperparams,
                normalize=True, family="matern") -> GramKernel:
    """Matérn kernel ``(2nu/l^2 + Delta)^-nu`` from a Laplacian spectrum.

    With ``normalize`` the matrix is rescaled to unit mean diagonal before
    multiplying by ``hp.variance``.
    """
    if not isinstance(hp, MaternHyperparams):
        hp = MaternHyperparams(**hp)
    c = _matern_coefficients(spectrum.eigenvalues, hp, normalize)
    return GramKernel(spectrum.reconstruct(c), family, hp.as_dict(), spectrum, normalize)


def diffusion_gram(spectrum: SymmetricSpectrum, beta=0.01) -> GramKernel:
    """Heat kernel ``exp(-beta Delta)``."""
    if not np.isfinite(beta) or beta < 0:
        raise NegativeBandwidth(f"beta must be >= 0, got {beta}")
    if beta == 0:
        k = np.eye(spectrum.size)
    else:
        lam = np.clip(spectrum.eigenvalues, 0.0, None)
        k = spectrum.reconstruct(np.exp(-beta * lam))
    return GramKernel(k, "diffusion", {"beta": float(beta)}, spectrum, False)


def normalized_graph_laplacian(adjacency) -> np.ndarray:
    a = _check_symmetric(adjacency)
    if np.any(a < 0):
        raise NotSymmetric("adjacency must be nonnegative")
    if np.any(np.diag(a) != 0):
        raise NotSymmetric("adjacency must have a zero diagonal")
    d = a.sum(axis=1)
    if np.any(d <= 0):
        raise IsolatedVertex(f"vertices {np.flatnonzero(d <= 0).tolist()} have no edges")
    s = 1.0 / np.sqrt(d)
    lap = np.eye(a.shape[0]) - s[:, None] * a * s[None, :]
    return 0.5 * (lap + lap.T)


def graph_matern_gram(adjacency, hp: MaternHyperparams, normalize=True) -> GramKernel:
    """Matérn kernel on the symmetric normalised Laplacian of a weighted graph."""
    spec = eigendecompose(normalized_graph_laplacian(adjacency))
    return matern_gram(spec, hp, normalize, family="graph-matern")


def with_params(k: GramKernel, **params) -> GramKernel:
    """Rebuild a spectral kernel at new hyperparameters, reusing its spectrum."""
    if k.spectrum is None:
        raise ValueError("kernel has no cached spectrum")
    merged = {**k.params, **params}
    if k.family == "diffusion":
        return diffusion_gram(k.spectrum, merged["beta"])
    return matern_gram(k.spectrum, MaternHyperparams(**merged), k.normalize, k.family)


def is_matern(k: GramKernel):
    return k.spectrum is not None and k.family in ("matern", "graph-matern")


def matern_param_grads(k: GramKernel, g) -> dict:
    """Chain ``dL/dK = g`` into gradients w.r.t. nu, lengthscale and variance.

    ``g`` need not be symmetric; only ``sum(g * dK)`` is used.
    """
    hp = MaternHyperparams(**k.params)
    u = k.spectrum.eigenvectors
    lam = np.clip(k.spectrum.eigenvalues, 0.0, None)
    # diag(U^T g U)
    proj = np.einsum("ji,ji->i", u, g @ u)
    c = _matern_coefficients(lam, hp, k.normalize)
    d_nu, d_ell = _matern_log_weight_grads(lam, hp.nu, hp.lengthscale)
    if k.normalize:
        pi = c / c.sum()
        d_nu = d_nu - pi @ d_nu
        d_ell = d_ell - pi @ d_ell
    return {
        "nu": float(proj @ (c * d_nu)),
        "lengthscale": float(proj @ (c * d_ell)),
        "variance": float(proj @ c) / hp.variance,
    }


def gram_blocks(k, rows, cols) -> np.ndarray:
    """Submatrix ``K[rows][:, cols]`` with range and duplicate checks."""
    mat = k.matrix if isinstance(k, GramKernel) else np.asarray(k)
    n = mat.shape[0]
    out = []
    for name, idx in (("rows", rows), ("cols", cols)):
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexOutOfRange(f"{name} index outside [0, {n})")
        if np.unique(idx).size != idx.size:
            raise DuplicateIndex(f"{name} contains repeated indices")
        out.append(idx)
    return mat[np.ix_(out[0], out[1])]


def hadamard(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
    return a * b

