"""Samplers for the generative model and for heteroscedastic embedding data."""

from __future__ import annotations

import numpy as np

from .core import SmmModel, softmax
from .corpus import BowCorpus, BowDocument, Vocabulary


def random_model(V, K, lam=1.0, t_scale=0.5, zipf=1.0, seed=0) -> SmmModel:
    """Zipfian background ``m`` and a dense Gaussian subspace ``T``."""
    rng = np.random.default_rng(seed)
    ranks = rng.permutation(V) + 1.0
    m = np.log(ranks ** -zipf / np.sum(ranks ** -zipf))
    T = rng.normal(0.0, t_scale, size=(V, K))
    return SmmModel(m, T, lam)


def sample_corpus(model: SmmModel, lengths, seed=0):
    """Draw w ~ N(0, I/lam), theta = softmax(m + T w), x ~ Multi(theta; N_d).

    Returns ``(corpus, W)`` with ``W`` the D x K true embeddings.
    """
    rng = np.random.default_rng(seed)
    lengths = np.asarray(lengths, dtype=np.int64)
    D = lengths.size
    W = rng.normal(0.0, 1.0 / np.sqrt(model.lam), size=(D, model.K))
    vocab = Vocabulary([f"w{i + 1}" for i in range(model.V)])
    docs = []
    for d in range(D):
        theta = softmax(model.m + model.T @ W[d])
        x = rng.multinomial(lengths[d], theta)
        ids = np.flatnonzero(x)
        docs.append(BowDocument(ids, x[ids], str(d + 1)))
    return BowCorpus(vocab, docs), W


def heteroscedastic_embeddings(n_per_class=200, L=3, K=10, class_sep=2.0,
                               noise_range=(0.01, 4.0), seed=0):
    """Class-labelled embedding posteriors with per-example uncertainty.

    Each example has a clean point w_d ~ N(mu_l, D^-1); its observed mean is
    nu_d = w_d + y_d with y_d ~ N(0, Gamma_d^-1), and the noise variances are
    drawn log-uniformly from ``noise_range``.  Returns ``(nu, gamma, labels)``
    with ``gamma`` the diagonal precisions.
    """
    rng = np.random.default_rng(seed)
    M = rng.normal(0.0, class_sep, size=(L, K))
    A = rng.normal(size=(K, K)) / np.sqrt(K)
    cov = A @ A.T + 0.5 * np.eye(K)
    chol = np.linalg.cholesky(cov)
    labels = np.repeat(np.arange(L), n_per_class)
    n = labels.size
    w = M[labels] + rng.normal(size=(n, K)) @ chol.T
    lo, hi = np.log(noise_range[0]), np.log(noise_range[1])
    scale = np.exp(rng.uniform(lo, hi, size=(n, 1)))
    var = scale * np.exp(rng.uniform(-0.3, 0.3, size=(n, K)))
    nu = w + rng.normal(size=(n, K)) * np.sqrt(var)
    perm = rng.permutation(n)
    return nu[perm], 1.0 / var[perm], labels[perm]
