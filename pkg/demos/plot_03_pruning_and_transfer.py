"""
Pruned sub-architectures on a new task
======================================

Train a mask on digits 0-4, throw the weights away, and fine-tune the
surviving architecture from scratch on 50 images per class of digits 5-9.
Random and magnitude-pruned masks at the same sparsity serve as baselines.
"""

import numpy as np

from archprune import MaskedMLP, TwoTempConfig, class_task, load_mnist
from archprune.baselines import imp_prune, layerwise_density, random_prune
from archprune.data import data_root, split
from archprune.optimizer import run_ap_to_target
from archprune.transfer import TransferConfig, transfer_experiment

full = load_mnist(data_root())
source = class_task(full, [0, 1, 2, 3, 4])
pool, test = split(class_task(full, [5, 6, 7, 8, 9]), 0.2, seed=0)

parent = MaskedMLP.from_widths([784, 32, 5])
sparsity = 0.9
cfg = TwoTempConfig(t_l=100, t_s=10, gamma=0.01, target_sparsity=sparsity, T=3000, c=0.01, beta=0.1)

ours, rnd, imp = [], [], []
for seed in range(3):
    mask, state, _ = run_ap_to_target(parent, source, cfg.replace(seed=seed))
    ours.append(mask)
    rnd.append(random_prune(parent.D, sparsity, seed))
    imp.append(imp_prune(parent, source, sparsity, rounds=5, config=cfg.replace(seed=seed)))
    print(f"seed {seed}: AP froze at iteration {state.frozen_at}, "
          f"layer densities {np.round(layerwise_density(mask, parent.partition), 3)}")

reports = transfer_experiment(parent, {"ours": {sparsity: ours}, "rnd": {sparsity: rnd}, "imp": {sparsity: imp}},
                              pool, test, [250], TransferConfig(retrain_iters=500, beta=0.1, n_seeds=3))
for r in reports:
    print(f"{r.source:>4}: {r.mean:.3f} +- {r.std:.3f}")
