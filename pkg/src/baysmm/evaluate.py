"""Perplexity, topic-ID metrics and posterior uncertainty summaries."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .core import STREAM_EVAL, PosteriorSet, SmmModel
from .corpus import BowCorpus
from .trainer import TrainConfig, corpus_elbo, infer_posteriors

log = logging.getLogger(__name__)

CE_FLOOR = np.log(1e-300)


@dataclass
class PplReport:
    ppl_doc: float
    ppl_corpus: float
    per_doc_bound: list      # (doc_id, L(q_d), N_d)

    def summary_lines(self):
        return [f"ppl_doc={self.ppl_doc!r}", f"ppl_corpus={self.ppl_corpus!r}",
                f"documents={len(self.per_doc_bound)}"]


@dataclass
class ClfReport:
    accuracy: float
    cross_entropy: float
    confusion: np.ndarray
    flagged: list            # indices whose true-class posterior was zero

    def summary_lines(self):
        return [f"accuracy={self.accuracy!r}", f"cross_entropy={self.cross_entropy!r}",
                f"documents={int(self.confusion.sum())}"]


def perplexity_from_bounds(bounds, lengths):
    """(PPL_DOC, PPL_CORPUS) from per-document log-likelihood bounds.

    Empty documents are left out of the per-document average and contribute
    nothing to the corpus sums.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    keep = lengths > 0
    if not keep.any():
        raise ValueError("perplexity is undefined for a corpus of empty documents")
    if not keep.all():
        log.warning("skipping %d empty document(s) in perplexity", int((~keep).sum()))
    ppl_doc = float(np.exp(-np.mean(bounds[keep] / lengths[keep])))
    ppl_corpus = float(np.exp(-bounds[keep].sum() / lengths[keep].sum()))
    return ppl_doc, ppl_corpus


def perplexity(model: SmmModel, corpus: BowCorpus, cfg: TrainConfig,
               posteriors: PosteriorSet | None = None) -> PplReport:
    """Perplexity upper bounds from the ELBO with ``cfg.R_eval`` samples.

    Posteriors are inferred with ``cfg.infer_iters`` steps unless given.
    """
    if posteriors is None:
        posteriors = infer_posteriors(model, corpus, cfg)
    if len(posteriors) != len(corpus):
        raise ValueError("posteriors are not aligned with the corpus")
    terms = corpus_elbo(model, corpus, posteriors, cfg.R_eval, cfg.seed,
                        STREAM_EVAL, cfg.block_elems)
    lengths = corpus.lengths()
    ppl_doc, ppl_corpus = perplexity_from_bounds(terms.elbo, lengths)
    per_doc = [(d, float(b), int(n)) for d, b, n in zip(corpus.doc_ids, terms.elbo, lengths)]
    return PplReport(ppl_doc, ppl_corpus, per_doc)


def unigram_perplexity(model: SmmModel, corpus: BowCorpus):
    """Perplexities of the background unigram softmax(m) alone."""
    logp = model.m - np.logaddexp.reduce(model.m)
    bounds = np.array([d.counts @ logp[d.ids] for d in corpus.docs])
    return perplexity_from_bounds(bounds, corpus.lengths())


def ml_floor_perplexity(corpus: BowCorpus):
    """(PPL_DOC, PPL_CORPUS) of the unigram ML fit on ``corpus`` itself."""
    counts = corpus.word_counts().astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("perplexity is undefined for a corpus of empty documents")
    with np.errstate(divide="ignore"):
        logp = np.log(counts / total)
    bounds = np.array([d.counts @ logp[d.ids] for d in corpus.docs])
    return perplexity_from_bounds(bounds, corpus.lengths())


def classification_report(posteriors, labels, L=None) -> ClfReport:
    """Accuracy, natural-log cross-entropy and confusion counts."""
    P = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if P.ndim != 2 or P.shape[0] != labels.size:
        raise ValueError("posteriors and labels are not aligned")
    L = P.shape[1] if L is None else L
    pred = np.argmax(P, axis=1)
    p_true = P[np.arange(labels.size), labels]
    flagged = np.flatnonzero(p_true <= 0).tolist()
    if flagged:
        log.warning("%d document(s) have zero posterior for the true class", len(flagged))
    with np.errstate(divide="ignore"):
        logp = np.where(p_true > 0, np.log(np.where(p_true > 0, p_true, 1.0)), CE_FLOOR)
    confusion = np.zeros((L, L), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    acc = float(np.mean(pred == labels)) if labels.size else float("nan")
    ce = float(0.0 - np.mean(logp)) if labels.size else float("nan")
    return ClfReport(acc, ce, confusion, flagged)


def uncertainty_summary(posteriors: PosteriorSet, corpus: BowCorpus):
    """Per document ``(doc_id, N_d, trace of the posterior covariance)``."""
    if len(posteriors) != len(corpus):
        raise ValueError("posteriors are not aligned with the corpus")
    traces = posteriors.variance.sum(axis=1)
    return [(d, int(n), float(t))
            for d, n, t in zip(corpus.doc_ids, corpus.lengths(), traces)]


def length_uncertainty_correlation(summary) -> float:
    """Spearman rank correlation between document length and covariance trace."""
    lengths = [n for _, n, _ in summary]
    traces = [t for _, _, t in summary]
    return float(spearmanr(lengths, traces).statistic)
