"""
Choosing the gradient temperature
=================================

Logistic regression on MNIST 0-vs-1, jointly learning weights and a mask.
The forward pass uses ``t_l = 1000``.  With ``t_s = t_l`` the mask barely
moves; with ``t_s = 10`` it prunes most inputs while the loss keeps falling;
with ``t_s = 1`` the penalty wins and every connection is pruned.

Needs MNIST under ``$APDATA`` (or ``./data``); run
``python -m archprune fetch-data`` first.
"""

import numpy as np

from archprune import MaskedLogistic, TwoTempConfig, binary_task, load_mnist, run_ap
from archprune.data import data_root

train = binary_task(load_mnist(data_root()), 0, 1)
parent = MaskedLogistic(784)
base = TwoTempConfig(t_l=1000, gamma=0.03, T=1500, c=0.02, beta=0.05, full_loss=True)

for t_s in (1000.0, 10.0, 1.0):
    mask, state, _ = run_ap(parent, train, base.replace(t_s=t_s))
    losses = np.array([h[1] for h in state.history])
    print(f"t_s={t_s:<6g} objective {losses[0]:.3f} -> {losses[-1]:.3f}   |m| = {int(mask.sum())} of 784")

# The objective printed here is the data loss plus gamma times the relaxed
# connection count, so fewer surviving inputs lower it directly.
