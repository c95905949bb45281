"""Transferability protocol: re-initialise a masked architecture, fine-tune it
on a small new-task set, report test accuracy over several seeds."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import balanced_subsample
from .models import masked_sgd
from .relaxation import DimensionError

log = logging.getLogger(__name__)

RESULTS_HEADER = ["source", "sparsity", "new_size", "seed", "accuracy"]
SUMMARY_HEADER = ["source", "sparsity", "new_size", "mean", "std", "n_seeds"]


@dataclass
class TransferConfig:
    retrain_iters: int = 500
    beta: float = 0.05
    batch_size: int = 32
    n_seeds: int = 5
    eps_theta: float = 0.1
    gamma: float = 0.0
    data_seed: int = 0

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class TransferReport:
    source: str
    sparsity: float
    new_size: int
    accuracies: list = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        return float(np.std(self.accuracies))

    @property
    def n_seeds(self):
        return len(self.accuracies)


def fresh_model(parent, eps_theta, rng):
    """Copy of ``parent`` with ``theta ~ N(0, eps_theta)`` and zero biases."""
    model = parent.clone()
    model.theta = rng.normal(0.0, eps_theta, model.D)
    model.bias = np.zeros_like(model.bias)
    return model


def fine_tune(parent, mask, retrain_data, config, seed):
    """Train a freshly initialised copy of ``parent`` under the fixed hard ``mask``.

    Only surviving weights move; pruned ones keep their initial values and
    are zeroed by the mask in every forward pass.
    """
    mask = np.asarray(mask)
    if mask.shape != (parent.D,):
        raise DimensionError(f"mask length {mask.size} != model D={parent.D}")
    rng = np.random.default_rng(seed)
    model = fresh_model(parent, config.eps_theta, rng)
    return masked_sgd(model, mask, retrain_data, config.retrain_iters, config.beta,
                      config.batch_size, rng, gamma=config.gamma)


def evaluate_accuracy(model, mask, test_data):
    """Fraction of test examples whose argmax prediction under ``mask * theta`` is right."""
    if len(test_data) == 0:
        raise ValueError("test set is empty")
    pred = model.predict(test_data.x, mask=mask)
    return float(np.mean(pred == test_data.y))


def _mask_for_seed(masks, k):
    # a single mask, or one mask per seed
    if isinstance(masks, (list, tuple)):
        return masks[k % len(masks)]
    return masks


def _run_cell(args):
    parent, source, sparsity, size, masks, retrain, test, config, seed0 = args
    report = TransferReport(source, sparsity, size)
    for k in range(config.n_seeds):
        mask = _mask_for_seed(masks, k)
        model = fine_tune(parent, mask, retrain, config, seed0 + k)
        report.accuracies.append(evaluate_accuracy(model, mask, test))
    return report


def transfer_experiment(parent, mask_sources, retrain_pool, test_data, new_sizes, config, seed=0, jobs=1):
    """Evaluate every (source, sparsity, new-task size) cell.

    ``mask_sources`` maps a source tag (ours / rnd / imp / ...) to a dict
    ``{sparsity: mask or list of per-seed masks}``.  For each size a balanced
    subsample of ``retrain_pool`` is drawn once (``config.data_seed``) and
    shared by all cells; seeds then only change the initial weights and the
    batch order.  Sizes the pool cannot supply are skipped with a warning.
    """
    classes = sorted(np.unique(retrain_pool.labels).tolist())
    jobs_args = []
    for size in new_sizes:
        per_class = size // len(classes)
        try:
            retrain = balanced_subsample(retrain_pool, classes, per_class, config.data_seed)
        except ValueError as exc:
            log.warning("skipping new-task size %d: %s", size, exc)
            continue
        if len(retrain) == 0:
            log.warning("skipping new-task size %d: fewer than one example per class", size)
            continue
        for source, by_sparsity in mask_sources.items():
            for sparsity, masks in by_sparsity.items():
                jobs_args.append((parent, source, sparsity, size, masks, retrain, test_data, config, seed))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_run_cell, jobs_args))
    return [_run_cell(a) for a in jobs_args]


def write_results_csv(reports, path, seed=0):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(RESULTS_HEADER)
        for r in reports:
            for k, acc in enumerate(r.accuracies):
                out.writerow([r.source, repr(r.sparsity), r.new_size, seed + k, repr(acc)])


def write_summary_csv(reports, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SUMMARY_HEADER)
        for r in reports:
            out.writerow([r.source, repr(r.sparsity), r.new_size, repr(r.mean), repr(r.std), r.n_seeds])
