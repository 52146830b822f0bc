"""Model and posterior types, the per-document ELBO and its gradients.

Per-document functions (``elbo_document``, ``grad_nu``, ...) are written for
clarity and act as the reference.  ``batch_terms`` evaluates the same
quantities for a block of documents at once and is what the trainer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import BowDocument

# Purpose tags keep training, inference and evaluation noise streams disjoint.
STREAM_TRAIN = 0
STREAM_INFER = 1
STREAM_EVAL = 2


@dataclass
class SmmModel:
    m: np.ndarray
    T: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        self.m = np.ascontiguousarray(self.m, dtype=np.float64).reshape(-1)
        self.T = np.ascontiguousarray(self.T, dtype=np.float64)
        if self.T.ndim != 2 or self.T.shape[0] != self.m.size:
            raise ValueError(f"T must be V x K with V={self.m.size}, got {self.T.shape}")
        if self.T.shape[1] < 1 or self.m.size < 1:
            raise ValueError("V and K must be >= 1")
        if not (np.isfinite(self.T).all() and np.isfinite(self.m).all()):
            raise ValueError("model parameters contain NaN or Inf")
        self.lam = float(self.lam)
        if not self.lam > 0:
            raise ValueError("prior precision lambda must be positive")

    @property
    def V(self) -> int:
        return self.T.shape[0]

    @property
    def K(self) -> int:
        return self.T.shape[1]

    def copy(self) -> "SmmModel":
        return SmmModel(self.m.copy(), self.T.copy(), self.lam)


@dataclass
class Posterior:
    """Diagonal Gaussian q(w) = N(nu, diag(exp(2 * lsd)))."""

    nu: np.ndarray
    lsd: np.ndarray

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=np.float64).reshape(-1)
        self.lsd = np.asarray(self.lsd, dtype=np.float64).reshape(-1)
        if self.nu.shape != self.lsd.shape:
            raise ValueError("nu and lsd must have the same length")

    @property
    def variance(self) -> np.ndarray:
        return np.exp(2.0 * self.lsd)

    @property
    def precision(self) -> np.ndarray:
        """Diagonal of Gamma."""
        return np.exp(-2.0 * self.lsd)


class PosteriorSet:
    """Row-aligned posteriors of a corpus, stored as two D x K arrays."""

    def __init__(self, nu, lsd, doc_ids=None):
        self.nu = np.asarray(nu, dtype=np.float64)
        self.lsd = np.asarray(lsd, dtype=np.float64)
        if self.nu.ndim != 2 or self.nu.shape != self.lsd.shape:
            raise ValueError("nu and lsd must be D x K arrays of equal shape")
        if doc_ids is None:
            doc_ids = [str(i + 1) for i in range(self.nu.shape[0])]
        self.doc_ids = list(doc_ids)
        if len(self.doc_ids) != self.nu.shape[0]:
            raise ValueError("doc_ids count does not match posterior rows")

    def __len__(self):
        return self.nu.shape[0]

    def __getitem__(self, d) -> Posterior:
        return Posterior(self.nu[d], self.lsd[d])

    def __iter__(self):
        for d in range(len(self)):
            yield self[d]

    @property
    def K(self) -> int:
        return self.nu.shape[1]

    @property
    def variance(self) -> np.ndarray:
        return np.exp(2.0 * self.lsd)

    @property
    def precision(self) -> np.ndarray:
        return np.exp(-2.0 * self.lsd)


def draw_eps(seed: int, doc_index: int, iteration: int, R: int, K: int,
             stream: int = STREAM_TRAIN) -> np.ndarray:
    """Standard-normal R x K draws from a counter-based generator.

    The Philox key is the global seed; the counter encodes
    (doc_index, iteration, stream), so any draw can be regenerated without
    storing it.
    """
    counter = np.array([0, doc_index, iteration, stream], dtype=np.uint64)
    bitgen = np.random.Philox(key=np.uint64(seed), counter=counter)
    return np.random.Generator(bitgen).standard_normal((R, K))


def draw_eps_block(seed, doc_indices, iteration, R, K, stream=STREAM_TRAIN):
    out = np.empty((len(doc_indices), R, K))
    for j, d in enumerate(doc_indices):
        out[j] = draw_eps(seed, int(d), iteration, R, K, stream)
    return out


def log_sum_exp(v, axis=-1):
    """Max-shifted log(sum(exp(v))) along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    vmax = np.max(v, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True)) + vmax
    return np.squeeze(out, axis=axis) if out.ndim else out


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def reparam_sample(post: Posterior, eps) -> np.ndarray:
    """w = nu + exp(lsd) * eps; ``eps`` may be one row or an R x K block."""
    return post.nu + np.exp(post.lsd) * np.asarray(eps, dtype=np.float64)


def doc_log_likelihood(model: SmmModel, w, x: BowDocument) -> float:
    """Multinomial log-likelihood of ``x`` at embedding ``w`` (no count coefficient)."""
    if x.ids.size == 0:
        return 0.0
    eta = model.m + model.T @ np.asarray(w, dtype=np.float64)
    return float(x.counts @ eta[x.ids] - x.length * log_sum_exp(eta))


def kl_to_prior(post: Posterior, lam: float, K: int | None = None) -> float:
    """KL(q || N(0, I/lam)) for a diagonal Gaussian q."""
    K = post.nu.size if K is None else K
    var = np.exp(2.0 * post.lsd)
    log_det_precision = -2.0 * post.lsd.sum()
    return 0.5 * float(lam * var.sum() + log_det_precision - K * np.log(lam)
                       + lam * post.nu @ post.nu - K)


def theta_matrix(model: SmmModel, post: Posterior, eps) -> np.ndarray:
    """V x R matrix whose column r is softmax(m + T g(eps_r))."""
    W = reparam_sample(post, np.atleast_2d(eps))          # R x K
    logits = model.m[:, None] + model.T @ W.T             # V x R
    return np.exp(logits - log_sum_exp(logits, axis=0)[None, :])


def elbo_document(model: SmmModel, post: Posterior, x: BowDocument, eps) -> float:
    """Monte-Carlo ELBO of one document for fixed samples ``eps`` (R x K)."""
    eps = np.atleast_2d(eps)
    kl = kl_to_prior(post, model.lam, model.K)
    if x.ids.size == 0:
        return -kl
    W = reparam_sample(post, eps)
    lse = log_sum_exp(model.m[:, None] + model.T @ W.T, axis=0)
    mean_part = x.counts @ (model.m[x.ids] + model.T[x.ids] @ post.nu)
    return float(-kl + mean_part - x.length * lse.mean())


def grad_nu(model: SmmModel, post: Posterior, x: BowDocument, eps) -> np.ndarray:
    eps = np.atleast_2d(eps)
    out = -model.lam * post.nu
    if x.ids.size == 0:
        return out
    theta_bar = theta_matrix(model, post, eps).mean(axis=1)
    resid = x.dense(model.V) - theta_bar * x.length
    return out + model.T.T @ resid


def grad_lsd(model: SmmModel, post: Posterior, x: BowDocument, eps) -> np.ndarray:
    eps = np.atleast_2d(eps)
    out = 1.0 - model.lam * np.exp(2.0 * post.lsd)
    if x.ids.size == 0:
        return out
    theta = theta_matrix(model, post, eps)                # V x R
    proj = (theta.T @ model.T) * eps                      # R x K
    return out - x.length * np.exp(post.lsd) * proj.mean(axis=0)


def grad_T(model: SmmModel, posteriors, corpus, eps_per_doc, omega: float) -> np.ndarray:
    """Gradient of the L1-penalised corpus ELBO with respect to T.

    ``sign(0) = 0``, so rows at exactly zero carry no penalty term here; the
    orthant-wise optimizer handles them through the sub-gradient.
    """
    G = np.zeros_like(model.T)
    for d, x in enumerate(corpus.docs):
        if x.ids.size == 0:
            continue
        post = posteriors[d]
        eps = np.atleast_2d(eps_per_doc[d])
        W = reparam_sample(post, eps)                     # R x K
        theta = theta_matrix(model, post, eps)            # V x R
        G[x.ids] += np.outer(x.counts, post.nu)
        G -= (x.length / eps.shape[0]) * theta @ W
    return G - omega * np.sign(model.T)


def prior_posterior(K: int, variance: float) -> Posterior:
    return Posterior(np.zeros(K), np.full(K, 0.5 * np.log(variance)))


@dataclass
class BatchTerms:
    elbo: np.ndarray            # per-document ELBO, length B
    kl: np.ndarray              # per-document KL, length B
    grad_nu: np.ndarray | None = None
    grad_lsd: np.ndarray | None = None
    grad_T: np.ndarray | None = None   # smooth part only (no L1 term)


def batch_terms(model: SmmModel, X: sp.csr_matrix, nu, lsd, eps,
                grads: bool = False, t_grad: bool = False) -> BatchTerms:
    """ELBO (and optionally gradients) for a block of documents.

    ``X`` is B x V counts, ``nu``/``lsd`` are B x K, ``eps`` is B x R x K.
    """
    lam = model.lam
    K = model.K
    var = np.exp(2.0 * lsd)
    kl = 0.5 * (lam * var.sum(1) - 2.0 * lsd.sum(1) - K * np.log(lam)
                + lam * np.einsum("bk,bk->b", nu, nu) - K)
    N = np.asarray(X.sum(axis=1)).reshape(-1)
    R = eps.shape[1]

    sd = np.exp(lsd)
    W = nu[:, None, :] + sd[:, None, :] * eps                 # B x R x K
    logits = W @ model.T.T
    logits += model.m                                         # B x R x V
    vmax = logits.max(axis=2, keepdims=True)
    logits -= vmax
    np.exp(logits, out=logits)
    z = logits.sum(axis=2, keepdims=True)
    lse = np.log(z[..., 0]) + vmax[..., 0]                    # B x R
    theta = logits
    theta /= z

    XT = np.asarray(X @ model.T)                              # B x K
    mean_part = np.asarray(X @ model.m).reshape(-1) + np.einsum("bk,bk->b", XT, nu)
    elbo = -kl + mean_part - N * lse.mean(axis=1)
    out = BatchTerms(elbo=elbo, kl=kl)

    if grads or t_grad:
        theta_T = theta @ model.T                             # B x R x K
    if grads:
        out.grad_nu = XT - N[:, None] * theta_T.mean(axis=1) - lam * nu
        out.grad_lsd = (1.0 - lam * var
                        - N[:, None] * sd * (theta_T * eps).mean(axis=1))
    if t_grad:
        B = nu.shape[0]
        scaled = theta * (N / R)[:, None, None]
        G = np.asarray(X.T @ nu)
        G -= scaled.reshape(B * R, -1).T @ W.reshape(B * R, K)
        out.grad_T = G
    return out
