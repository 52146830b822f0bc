"""Stochastic variational-Bayes training and posterior inference."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .core import (STREAM_INFER, STREAM_TRAIN, BatchTerms, Posterior,
                   PosteriorSet, SmmModel, batch_terms, draw_eps_block)
from .corpus import BowCorpus, BowDocument
from .optim import AdamState, NumericalError, adam_direction, update_T_rows

log = logging.getLogger(__name__)

LOG_HEADER = "iter\telbo\tkl\tnonzero_frac\tseconds"


@dataclass
class TrainConfig:
    K: int = 100
    omega: float = 1.0
    lam: float = 1.0
    R_train: int = 1
    R_eval: int = 32
    max_iters: int = 500
    infer_iters: int = 200
    seed: int = 0
    eta_post: float = 0.05
    eta_T: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    deterministic: bool = False
    freeze_eps: bool = False
    trace_every: int = 1
    threads: int = 1
    init_T_var: float = 1e-3
    init_post_var: float = 0.1
    unigram_alpha: float = 1.0
    tol: float = 1e-5
    tol_window: int = 5
    block_elems: int = 1 << 22

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.R_train < 1 or self.R_eval < 1:
            raise ValueError("sample counts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def adam(self, shape, eta) -> AdamState:
        return AdamState.zeros(shape, beta1=self.beta1, beta2=self.beta2,
                               eps_hat=self.eps_hat, eta=eta)


@dataclass
class TrainedState:
    model: SmmModel
    posteriors: PosteriorSet
    elbo_trace: list = field(default_factory=list)
    kl_trace: list = field(default_factory=list)
    nonzero_trace: list = field(default_factory=list)
    converged: bool = False


def init_model(corpus: BowCorpus, cfg: TrainConfig) -> SmmModel:
    """Smoothed log-unigram ``m`` and small random ``T``."""
    if corpus.V == 0:
        raise ValueError("empty vocabulary")
    if len(corpus) == 0:
        raise ValueError("cannot initialise a model from an empty corpus")
    counts = corpus.word_counts() + cfg.unigram_alpha
    m = np.log(counts / counts.sum())
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7]))
    T = rng.normal(0.0, np.sqrt(cfg.init_T_var), size=(corpus.V, cfg.K))
    return SmmModel(m, T, cfg.lam)


def init_posteriors(D: int, cfg: TrainConfig, doc_ids=None) -> PosteriorSet:
    lsd = np.full((D, cfg.K), 0.5 * np.log(cfg.init_post_var))
    return PosteriorSet(np.zeros((D, cfg.K)), lsd, doc_ids)


def doc_blocks(D: int, R: int, V: int, block_elems: int) -> list[range]:
    """Split documents into blocks bounded by ``block_elems`` theta entries."""
    size = max(1, block_elems // max(1, R * V))
    return [range(s, min(D, s + size)) for s in range(0, D, size)]


def _map_blocks(fn, blocks, cfg):
    """Apply ``fn`` to every block; results in block order.

    Multi-threaded runs outside deterministic mode consume results in
    completion order, so downstream sums are not bit-reproducible.
    """
    if cfg.threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(cfg.threads) as pool:
        if cfg.deterministic:
            return list(pool.map(fn, blocks))
        futures = [pool.submit(fn, b) for b in blocks]
        return [f.result() for f in as_completed(futures)]


def train(corpus: BowCorpus, cfg: TrainConfig, log_file=None, callback=None) -> TrainedState:
    """Alternate per-document posterior updates with an orthant-wise T step.

    ``log_file`` (text stream) receives one tab-separated line per traced
    iteration.  ``callback(iteration, state)`` is invoked after each T
    update; returning True stops training.
    """
    model = init_model(corpus, cfg)
    D, K, V = len(corpus), cfg.K, corpus.V
    post = init_posteriors(D, cfg, corpus.doc_ids)
    X = corpus.to_csr()
    state = TrainedState(model, post)
    if D == 0:
        return state

    adam_nu = cfg.adam((D, K), cfg.eta_post)
    adam_lsd = cfg.adam((D, K), cfg.eta_post)
    adam_T = cfg.adam((V, K), cfg.eta_T)
    blocks = doc_blocks(D, cfg.R_train, V, cfg.block_elems)
    frozen = None
    t0 = time.perf_counter()
    if log_file is not None:
        print(LOG_HEADER, file=log_file, flush=True)

    for it in range(cfg.max_iters):
        if cfg.freeze_eps:
            if frozen is None:
                frozen = draw_eps_block(cfg.seed, range(D), 0, cfg.R_train, K, STREAM_TRAIN)
            eps = frozen
        else:
            eps = draw_eps_block(cfg.seed, range(D), it, cfg.R_train, K, STREAM_TRAIN)

        # posterior step for every document
        def post_grads(b):
            t = batch_terms(model, X[b.start:b.stop], post.nu[b.start:b.stop],
                            post.lsd[b.start:b.stop], eps[b.start:b.stop], grads=True)
            return b, t

        g_nu = np.empty((D, K))
        g_lsd = np.empty((D, K))
        for b, t in _map_blocks(post_grads, blocks, cfg):
            g_nu[b.start:b.stop] = t.grad_nu
            g_lsd[b.start:b.stop] = t.grad_lsd
        if not (np.isfinite(g_nu).all() and np.isfinite(g_lsd).all()):
            raise NumericalError("non-finite posterior gradient", it)
        post.nu += adam_direction(adam_nu, g_nu)
        post.lsd += adam_direction(adam_lsd, g_lsd)

        # objective and T gradient at the updated posteriors
        def model_terms(b):
            t = batch_terms(model, X[b.start:b.stop], post.nu[b.start:b.stop],
                            post.lsd[b.start:b.stop], eps[b.start:b.stop], t_grad=True)
            return b, t

        G = np.zeros((V, K))
        elbo_sum = 0.0
        kl_sum = 0.0
        for _, t in _map_blocks(model_terms, blocks, cfg):
            G += t.grad_T
            elbo_sum += float(t.elbo.sum())
            kl_sum += float(t.kl.sum())
        objective = elbo_sum - cfg.omega * float(np.abs(model.T).sum())
        if not np.isfinite(objective):
            raise NumericalError("objective is not finite", it)

        try:
            model.T = update_T_rows(model.T, G, adam_T, cfg.omega)
        except NumericalError as err:
            raise NumericalError(str(err), it) from None

        nz = float(np.count_nonzero(model.T)) / model.T.size
        state.elbo_trace.append(objective)
        state.kl_trace.append(kl_sum)
        state.nonzero_trace.append(nz)
        if log_file is not None and (it % max(1, cfg.trace_every) == 0):
            print(f"{it}\t{objective:.10g}\t{kl_sum:.10g}\t{nz:.6f}\t"
                  f"{time.perf_counter() - t0:.3f}", file=log_file, flush=True)
        if callback is not None and callback(it, state):
            break
        w = cfg.tol_window
        if len(state.elbo_trace) > w:
            prev = state.elbo_trace[-1 - w]
            if abs(objective - prev) < cfg.tol * abs(prev):
                state.converged = True
                log.info("converged at iteration %d", it)
                break
    return state


def infer_posteriors(model: SmmModel, corpus: BowCorpus, cfg: TrainConfig,
                     iters: int | None = None) -> PosteriorSet:
    """Fit q(w) for every document of ``corpus`` with ``model`` held fixed."""
    if corpus.V != model.V:
        raise ValueError(f"corpus V={corpus.V} does not match model V={model.V}")
    iters = cfg.infer_iters if iters is None else iters
    D, K = len(corpus), model.K
    post = init_posteriors(D, cfg, corpus.doc_ids)
    if D == 0:
        return post
    X = corpus.to_csr()
    blocks = doc_blocks(D, cfg.R_train, model.V, cfg.block_elems)
    adam_nu = cfg.adam((D, K), cfg.eta_post)
    adam_lsd = cfg.adam((D, K), cfg.eta_post)
    for it in range(iters):
        eps = draw_eps_block(cfg.seed, range(D), 0 if cfg.freeze_eps else it,
                             cfg.R_train, K, STREAM_INFER)

        def grads(b):
            t = batch_terms(model, X[b.start:b.stop], post.nu[b.start:b.stop],
                            post.lsd[b.start:b.stop], eps[b.start:b.stop], grads=True)
            return b, t

        g_nu = np.empty((D, K))
        g_lsd = np.empty((D, K))
        for b, t in _map_blocks(grads, blocks, cfg):
            g_nu[b.start:b.stop] = t.grad_nu
            g_lsd[b.start:b.stop] = t.grad_lsd
        if not (np.isfinite(g_nu).all() and np.isfinite(g_lsd).all()):
            raise NumericalError("non-finite gradient during inference", it)
        post.nu += adam_direction(adam_nu, g_nu)
        post.lsd += adam_direction(adam_lsd, g_lsd)
    return post


def infer_posterior(model: SmmModel, x: BowDocument, cfg: TrainConfig) -> Posterior:
    """Single-document convenience wrapper around :func:`infer_posteriors`."""
    corpus = BowCorpus(_vocab_of_size(model.V), [x])
    return infer_posteriors(model, corpus, cfg)[0]


def corpus_elbo(model: SmmModel, corpus: BowCorpus, posteriors: PosteriorSet,
                R: int, seed: int, stream: int, block_elems: int = 1 << 22) -> BatchTerms:
    """Per-document ELBO with ``R`` samples per document from ``stream``."""
    D, K = len(corpus), model.K
    elbo = np.zeros(D)
    kl = np.zeros(D)
    X = corpus.to_csr()
    for b in doc_blocks(D, R, model.V, block_elems):
        eps = draw_eps_block(seed, b, 0, R, K, stream)
        t = batch_terms(model, X[b.start:b.stop], posteriors.nu[b.start:b.stop],
                        posteriors.lsd[b.start:b.stop], eps)
        elbo[b.start:b.stop] = t.elbo
        kl[b.start:b.stop] = t.kl
    return BatchTerms(elbo=elbo, kl=kl)


_vocab_cache = {}


def _vocab_of_size(V):
    from .corpus import Vocabulary
    if V not in _vocab_cache:
        _vocab_cache[V] = Vocabulary([f"w{i + 1}" for i in range(V)])
    return _vocab_cache[V]
