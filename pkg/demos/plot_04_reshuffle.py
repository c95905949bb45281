"""
What survives a layer-wise reshuffle
====================================

Keep each layer's surviving count but scatter the survivors uniformly.
If a mask's value lies only in its per-layer densities, reshuffling
should not hurt it.
"""

import numpy as np

from archprune import MaskedMLP, TwoTempConfig, class_task, load_mnist
from archprune.baselines import layerwise_density, layerwise_reshuffle
from archprune.data import balanced_subsample, data_root, split
from archprune.optimizer import run_ap_to_target
from archprune.transfer import TransferConfig, evaluate_accuracy, fine_tune

full = load_mnist(data_root())
source = class_task(full, [0, 1, 2, 3, 4])
pool, test = split(class_task(full, [5, 6, 7, 8, 9]), 0.2, seed=0)
retrain = balanced_subsample(pool, range(5), 50, seed=0)

parent = MaskedMLP.from_widths([784, 32, 5])
mask, _, _ = run_ap_to_target(parent, source, TwoTempConfig(t_l=100, t_s=10, gamma=0.01, target_sparsity=0.9,
                                                            T=3000, c=0.01, beta=0.1))
shuffled = layerwise_reshuffle(mask, parent.partition, rng_seed=1)
print("densities before", layerwise_density(mask, parent.partition))
print("densities after ", layerwise_density(shuffled, parent.partition))
print("positions kept  ", int(np.sum(mask & shuffled)), "of", int(mask.sum()))

tc = TransferConfig(retrain_iters=500, beta=0.1)
for name, m in (("AP mask", mask), ("reshuffled", shuffled)):
    accs = [evaluate_accuracy(fine_tune(parent, m, retrain, tc, seed), m, test) for seed in range(3)]
    print(f"{name:>10}: {np.mean(accs):.3f} +- {np.std(accs):.3f}")
