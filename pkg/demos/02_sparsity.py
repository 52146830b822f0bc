"""
L1 weight and exact zeros in T
==============================

The orthant-wise update writes exact zeros into T whenever a step would cross
zero, so the count of zeros responds directly to the L1 weight omega.
"""

import numpy as np

from baysmm import TrainConfig, train
from baysmm.optim import l1_subgradient, orthant_project
from baysmm.synthetic import random_model, sample_corpus

#%%
# The two building blocks on a handful of coordinates.  At t = 0 a gradient
# inside the dead zone [-omega, omega] yields no movement at all.
t = np.array([0.0, 0.0, 0.0, 0.4])
g = np.array([0.5, -3.0, 2.0, 0.3])
print("sub-gradient", l1_subgradient(t, g, omega=1.0))
print("projection  ", orthant_project(np.array([0.3, -0.2]), np.array([-0.5, 0.1])))

#%%
# Sweep omega on a small synthetic corpus with a fixed seed.  At tiny
# omega the few zeros are incidental crossings, so single-seed counts there
# need not be ordered; the growth shows from omega = 1 upwards.
true = random_model(V=300, K=6, seed=4)
corpus, _ = sample_corpus(true, np.full(200, 120), seed=5)
for omega in (1e-4, 1e-2, 1.0, 10.0):
    T = train(corpus, TrainConfig(K=6, omega=omega, max_iters=120, tol=0.0, seed=0)).model.T
    zeros = int(np.sum(T == 0.0))
    print(f"omega {omega:>7g}: {zeros:5d} exact zeros of {T.size} ({zeros / T.size:.1%})")
