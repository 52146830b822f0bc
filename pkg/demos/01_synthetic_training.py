"""
Training on a corpus drawn from the model itself
================================================

A random model generates bag-of-words documents; a fresh model is fitted to
them and compared with the generator on held-out documents.
"""

import numpy as np

from baysmm import TrainConfig, perplexity, train
from baysmm.evaluate import ml_floor_perplexity, unigram_perplexity
from baysmm.synthetic import random_model, sample_corpus

#%%
# The generator: a Zipfian background ``m`` plus a dense 8-dimensional
# subspace ``T``.  Each document draws its embedding from N(0, I) and then
# 200 words from softmax(m + T w).
true = random_model(V=500, K=8, lam=1.0, t_scale=0.5, seed=1)
train_c, W = sample_corpus(true, np.full(1000, 200), seed=2)
test_c, _ = sample_corpus(true, np.full(300, 200), seed=3)
print("documents", len(train_c), "vocabulary", train_c.V, "true embeddings", W.shape)

#%%
# Fit with the same dimensionality and a light L1 weight on T.  The
# callback prints a line every 50 iterations.
cfg = TrainConfig(K=8, omega=1e-3, max_iters=300, tol=0.0, seed=0)


def show(it, state):
    if it % 50 == 0:
        print(f"iter {it:4d}  objective {state.elbo_trace[-1]:.1f}")


state = train(train_c, cfg, callback=show)

#%%
# Held-out perplexity.  The fitted model should sit close to the generator
# and well below the background unigram.
fit = perplexity(state.model, test_c, cfg).ppl_corpus
gen = perplexity(true, test_c, cfg).ppl_corpus
uni = unigram_perplexity(state.model, test_c)[1]
floor = ml_floor_perplexity(test_c)[1]
print(f"fitted {fit:.1f}  generator {gen:.1f}  unigram {uni:.1f}  test-set unigram ML {floor:.1f}")
