"""Gaussian linear classifiers over document embeddings.

GLC models each class as N(mu_l, D^-1) with a shared precision D and uses the
posterior means only.  GLCU treats the posterior covariance of every
embedding as extra per-example noise, so the class-conditional likelihood of
a mean nu_d becomes N(nu_d | mu_l, Gamma_d^-1 + D^-1); it is trained by EM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


class EMMonotonicityError(RuntimeError):
    pass


@dataclass
class GlcModel:
    M: np.ndarray           # K x L class means (one column per class)
    D_prec: np.ndarray      # K x K shared precision
    log_priors: np.ndarray  # length L

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=np.float64)
        self.D_prec = np.asarray(self.D_prec, dtype=np.float64)
        self.log_priors = np.asarray(self.log_priors, dtype=np.float64)
        K, L = self.M.shape
        if self.D_prec.shape != (K, K) or self.log_priors.shape != (L,):
            raise ValueError("inconsistent classifier dimensions")

    kind = "glc"

    @property
    def K(self) -> int:
        return self.M.shape[0]

    @property
    def L(self) -> int:
        return self.M.shape[1]

    @property
    def covariance(self) -> np.ndarray:
        return _inv_spd(self.D_prec)


@dataclass
class GlcuModel(GlcModel):
    ll_trace: list = field(default_factory=list)

    kind = "glcu"


@dataclass
class LatentPosterior:
    u: np.ndarray
    V_prec: np.ndarray


def _inv_spd(A):
    try:
        c = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularCovarianceError(str(err)) from None
    return cho_solve(c, np.eye(A.shape[0]))


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _check_labels(labels, n, L=None):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError("need one label per embedding")
    L = int(labels.max()) + 1 if L is None else L
    counts = np.bincount(labels, minlength=L)
    if counts.size > L or np.any(counts == 0):
        raise ValueError(f"every class needs at least one example, got counts {counts}")
    return labels, L, counts


def _log_priors(counts, priors):
    if priors == "uniform":
        return np.full(counts.size, -np.log(counts.size))
    if priors == "empirical":
        return np.log(counts / counts.sum())
    raise ValueError(f"unknown priors {priors!r}")


def class_means(X, labels, L):
    M = np.zeros((X.shape[1], L))
    for l in range(L):
        M[:, l] = X[labels == l].mean(axis=0)
    return M


def _precision_from_cov(cov, reg):
    cov = _sym(cov) + reg * np.eye(cov.shape[0])
    try:
        prec = _inv_spd(cov)
    except SingularCovarianceError:
        raise SingularCovarianceError(
            "within-class covariance is singular; enable regularisation "
            "(reg > 0 adds reg * I)") from None
    if np.linalg.cond(cov) > 1e14:
        raise SingularCovarianceError(
            "within-class covariance is numerically singular; enable "
            "regularisation (reg > 0 adds reg * I)")
    return _sym(prec)


def glc_train(embeddings, labels, L=None, reg=0.0, priors="empirical") -> GlcModel:
    """ML estimates: class means, pooled within-class covariance, class priors."""
    X = np.asarray(embeddings, dtype=np.float64)
    labels, L, counts = _check_labels(labels, X.shape[0], L)
    M = class_means(X, labels, L)
    R = X - M.T[labels]
    cov = R.T @ R / X.shape[0]
    return GlcModel(M, _precision_from_cov(cov, reg), _log_priors(counts, priors))


def glcu_e_step(model: GlcModel, nu_d, gamma_d, mu_d) -> LatentPosterior:
    """Posterior of the latent offset y_d for one document.

    ``gamma_d`` is the diagonal of the embedding precision Gamma_d.
    """
    gamma_d = np.asarray(gamma_d, dtype=np.float64)
    if np.any(~(gamma_d > 0)):
        raise ValueError("Gamma_d must be positive definite")
    V = model.D_prec + np.diag(gamma_d)
    try:
        c = cho_factor(V, lower=True)
    except np.linalg.LinAlgError:
        raise ValueError("D + Gamma_d is not positive definite") from None
    u = cho_solve(c, model.D_prec @ (np.asarray(nu_d) - np.asarray(mu_d)))
    return LatentPosterior(u, V)


def _e_step_batch(D_prec, resid, gamma, block=2048):
    """Batched E-step; returns (u, sum of V_d^-1)."""
    n, K = resid.shape
    u = np.empty_like(resid)
    V_inv_sum = np.zeros((K, K))
    for s in range(0, n, block):
        sl = slice(s, min(n, s + block))
        V = np.broadcast_to(D_prec, (sl.stop - sl.start, K, K)).copy()
        V[:, np.arange(K), np.arange(K)] += gamma[sl]
        Lc = np.linalg.cholesky(V)
        rhs = resid[sl] @ D_prec
        # V^-1 via the Cholesky factor: solve both the mean and identity systems
        Linv = np.linalg.solve(Lc, np.broadcast_to(np.eye(K), V.shape))
        V_inv = np.swapaxes(Linv, 1, 2) @ Linv
        u[sl] = np.einsum("bij,bj->bi", V_inv, rhs)
        V_inv_sum += V_inv.sum(axis=0)
    return u, V_inv_sum


def glcu_m_step(nu, u, V_inv_sum, labels, L, reg=0.0):
    """M-step: returns (M, covariance D^-1).

    Means are updated first; the covariance uses the residuals against the
    new means, which is the joint maximiser of the auxiliary function.
    """
    labels, L, _ = _check_labels(labels, nu.shape[0], L)
    M = class_means(nu - u, labels, L)
    A = u - (nu - M.T[labels])
    cov = (A.T @ A + V_inv_sum) / nu.shape[0]
    return M, _sym(cov) + reg * np.eye(cov.shape[0])


def marginal_log_likelihood(model: GlcModel, nu, labels, gamma=None) -> float:
    """sum_d log N(nu_d | mu_{l_d}, Gamma_d^-1 + D^-1)."""
    nu = np.asarray(nu, dtype=np.float64)
    resid = nu - model.M.T[np.asarray(labels)]
    var = None if gamma is None else 1.0 / np.asarray(gamma, dtype=np.float64)
    return float(_gauss_logpdf(model.covariance, resid[:, None, :], var)[:, 0].sum())


def glcu_train(nu, gamma, labels, em_iters=10, L=None, reg=0.0,
               priors="empirical", tol=1e-9) -> GlcuModel:
    """EM training from the GLC solution.

    ``gamma`` is the D x K diagonal embedding precision (exp(-2 * lsd)).  The
    marginal log-likelihood is recorded before the first and after every
    iteration; a decrease larger than ``tol`` raises ``EMMonotonicityError``.
    """
    if em_iters < 1:
        raise ValueError("em_iters must be >= 1")
    nu = np.asarray(nu, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != nu.shape or np.any(~(gamma > 0)):
        raise ValueError("gamma must be a positive D x K array matching nu")
    glc = glc_train(nu, labels, L, reg, priors)
    labels, L, _ = _check_labels(labels, nu.shape[0], glc.L)
    model = GlcuModel(glc.M, glc.D_prec, glc.log_priors)
    trace = [marginal_log_likelihood(model, nu, labels, gamma)]
    for it in range(em_iters):
        resid = nu - model.M.T[labels]
        u, V_inv_sum = _e_step_batch(model.D_prec, resid, gamma)
        M, cov = glcu_m_step(nu, u, V_inv_sum, labels, L, reg)
        model = GlcuModel(M, _precision_from_cov(cov, 0.0), model.log_priors)
        trace.append(marginal_log_likelihood(model, nu, labels, gamma))
        if trace[-1] < trace[-2] - tol:
            raise EMMonotonicityError(
                f"EM iteration {it}: log-likelihood decreased by {trace[-2] - trace[-1]:.3e}")
    model.ll_trace = trace
    return model


def _gauss_logpdf(cov, resid, var=None, block=2048):
    """log N(resid | 0, cov + diag(var_d)) for resid of shape n x L x K."""
    n, L, K = resid.shape
    if var is None:
        Lc = np.linalg.cholesky(cov)
        z = np.linalg.solve(Lc, resid.reshape(n * L, K).T).T.reshape(n, L, K)
        logdet = 2.0 * np.log(np.diag(Lc)).sum()
        return -0.5 * (K * LOG_2PI + logdet + (z * z).sum(-1))
    out = np.empty((n, L))
    for s in range(0, n, block):
        sl = slice(s, min(n, s + block))
        S = np.broadcast_to(cov, (sl.stop - sl.start, K, K)).copy()
        S[:, np.arange(K), np.arange(K)] += var[sl]
        Lc = np.linalg.cholesky(S)
        z = np.linalg.solve(Lc, np.swapaxes(resid[sl], 1, 2))   # b x K x L
        logdet = 2.0 * np.log(np.diagonal(Lc, axis1=1, axis2=2)).sum(-1)
        out[sl] = -0.5 * (K * LOG_2PI + logdet[:, None] + (z * z).sum(1))
    return out


def class_log_likelihoods(model: GlcModel, nu, gamma=None) -> np.ndarray:
    """n x L matrix of log p(nu | class l)."""
    nu = np.atleast_2d(np.asarray(nu, dtype=np.float64))
    resid = nu[:, None, :] - model.M.T[None, :, :]
    var = None if gamma is None else 1.0 / np.atleast_2d(np.asarray(gamma, dtype=np.float64))
    return _gauss_logpdf(model.covariance, resid, var)


def predict(model: GlcModel, nu, gamma=None, log_priors=None):
    """Bayes-rule class posteriors.

    Passing ``gamma`` (diagonal embedding precisions) adds each embedding's
    uncertainty to the class covariance; GLC models are normally used without
    it.  Returns ``(class_ids, posteriors)``; ties go to the lowest class id.
    """
    ll = class_log_likelihoods(model, nu, gamma)
    lp = model.log_priors if log_priors is None else np.asarray(log_priors)
    joint = ll + lp
    post = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    return np.argmax(post, axis=1), post
