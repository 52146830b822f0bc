"""
Classifying uncertain embeddings
================================

GLC sees only posterior means.  GLCU also models each embedding's posterior
covariance, which makes its class posteriors less over-confident when an
embedding is poorly determined.
"""

import numpy as np

from baysmm.classify import glc_train, glcu_train, predict
from baysmm.evaluate import classification_report
from baysmm.synthetic import heteroscedastic_embeddings

#%%
# Three overlapping classes in 10 dimensions; each example's noise variance
# is drawn log-uniformly between 0.01 and 4.
nu, gamma, labels = heteroscedastic_embeddings(n_per_class=400, L=3, K=10, class_sep=1.0, seed=12)
half = nu.shape[0] // 2
glc = glc_train(nu[:half], labels[:half])
glcu = glcu_train(nu[:half], gamma[:half], labels[:half], em_iters=20)
print("EM log-likelihood", [round(v, 1) for v in glcu.ll_trace[:4]], "...", round(glcu.ll_trace[-1], 1))

#%%
for name, (_, post) in (("GLC", predict(glc, nu[half:])),
                        ("GLCU", predict(glcu, nu[half:], gamma[half:]))):
    rep = classification_report(post, labels[half:])
    print(f"{name:5s} accuracy {rep.accuracy:.3f}  cross-entropy {rep.cross_entropy:.3f}")
