"""Bayesian subspace multinomial model: document embeddings with uncertainty."""

from .classify import GlcModel, GlcuModel, glc_train, glcu_train, predict
from .core import (Posterior, PosteriorSet, SmmModel, elbo_document, grad_lsd, grad_nu,
                   grad_T, kl_to_prior, log_sum_exp, theta_matrix)
from .corpus import BowCorpus, BowDocument, LabeledCorpus, Vocabulary, build_vocab, read_bow, vectorize, write_bow
from .evaluate import classification_report, ml_floor_perplexity, perplexity, uncertainty_summary
from .trainer import TrainConfig, TrainedState, infer_posterior, infer_posteriors, train

__version__ = "0.1.0"
