"""Gaussian processes on hypergraphs: Matérn kernels from the hypergraph
Laplacian, sparse variational classification, latent embeddings and
kernelised matrix factorisation."""
from ._accel import backend_name
from .errors import HyperGPError, InputError, NumericalError
from .gp import (
    CategoricalLikelihood,
    GaussianLikelihood,
    elbo,
    exact_log_marginal,
    exact_posterior,
    fit_svgp,
    predict_svgp,
)
from .gplvm import fit_gplvm, gplvm_marginal_loglik, spectral_embedding
from .hypergraph import (
    Hypergraph,
    build_hypergraph,
    clique_expansion,
    dual,
    incidence_matrix,
    laplacian,
)
from .inducing import inducing_vertices
from .kernels import MaternHyperparams, diffusion_gram, eigendecompose, matern_gram
from .kpmf import RatingsMatrix, kpmf_fit, kpmf_predict, nystrom_approx

__version__ = "0.1.0"

__all__ = [
    "CategoricalLikelihood",
    "GaussianLikelihood",
    "HyperGPError",
    "Hypergraph",
    "InputError",
    "MaternHyperparams",
    "NumericalError",
    "RatingsMatrix",
    "backend_name",
    "build_hypergraph",
    "clique_expansion",
    "diffusion_gram",
    "dual",
    "eigendecompose",
    "elbo",
    "exact_log_marginal",
    "exact_posterior",
    "fit_gplvm",
    "fit_svgp",
    "gplvm_marginal_loglik",
    "incidence_matrix",
    "inducing_vertices",
    "kpmf_fit",
    "kpmf_predict",
    "laplacian",
    "matern_gram",
    "nystrom_approx",
    "predict_svgp",
    "spectral_embedding",
]
