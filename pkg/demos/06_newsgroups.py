"""
20Newsgroups: perplexity and topic ID
=====================================

Needs the "bydate" split on disk; point ``$BAYSMM_20NG`` at the directory
holding ``20news-bydate-train``/``20news-bydate-test`` or at the
``20news-bydate.tar.gz`` archive.  Expect roughly 40 minutes on one core.
"""

import sys

import numpy as np

from baysmm import TrainConfig, infer_posteriors, perplexity, train
from baysmm.classify import glc_train, glcu_train, predict
from baysmm.corpus import BowCorpus, build_vocab, tokenize, vectorize
from baysmm.datasets import DatasetUnavailable, load_20newsgroups
from baysmm.evaluate import classification_report, ml_floor_perplexity

try:
    data = load_20newsgroups()
except DatasetUnavailable as err:
    sys.exit(str(err))

#%%
# Punctuation is stripped and words seen in fewer than two training
# documents are dropped; then the 2000 most frequent words are kept.
tok = {s: [tokenize(t) for t in data[s][0]] for s in data}
vocab = build_vocab(tok["train"], min_doc_freq=2, max_size=2000)
corp = {s: BowCorpus(vocab, [vectorize(d, vocab, str(i + 1)) for i, d in enumerate(tok[s])])
        for s in tok}
names = sorted(set(data["train"][1]))
labels = {s: np.array([names.index(g) for g in data[s][1]]) for s in data}

#%%
cfg = TrainConfig(K=50, omega=1.0, lam=10.0, max_iters=1000, seed=0)
state = train(corp["train"], cfg, log_file=sys.stdout)
test_post = infer_posteriors(state.model, corp["test"], cfg)
rep = perplexity(state.model, corp["test"], cfg, test_post)
print("test PPL_CORPUS", round(rep.ppl_corpus, 1), "ML floor", round(ml_floor_perplexity(corp["test"])[1], 1))

#%%
tr = state.posteriors
glc = glc_train(tr.nu, labels["train"])
glcu = glcu_train(tr.nu, tr.precision, labels["train"], em_iters=10)
for name, (_, post) in (("GLC", predict(glc, test_post.nu)),
                        ("GLCU", predict(glcu, test_post.nu, test_post.precision))):
    r = classification_report(post, labels["test"])
    print(f"{name:5s} accuracy {r.accuracy:.2%}  cross-entropy {r.cross_entropy:.3f}")
