"""Comparison masks: random pruning, iterative magnitude pruning, layer-wise reshuffling."""

from __future__ import annotations

import math

import numpy as np

from .models import LayerPartition, masked_sgd
from .relaxation import DimensionError


def surviving_count(D, sparsity):
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    return int(round((1.0 - sparsity) * D))


def random_prune(D, sparsity, rng_seed):
    """Exactly ``round((1 - sparsity) D)`` ones at uniformly random positions."""
    keep = surviving_count(D, sparsity)
    rng = np.random.default_rng(rng_seed)
    mask = np.zeros(D, dtype=np.int8)
    mask[rng.choice(D, keep, replace=False)] = 1
    return mask


def magnitude_prune(theta, mask, keep):
    """Keep the ``keep`` largest-|theta| coordinates among those ``mask`` still allows."""
    mask = np.asarray(mask)
    alive = np.flatnonzero(mask)
    if keep > len(alive):
        raise ValueError(f"cannot keep {keep} of {len(alive)} surviving weights")
    order = alive[np.argsort(-np.abs(theta[alive]), kind="stable")]
    out = np.zeros_like(mask, dtype=np.int8)
    out[order[:keep]] = 1
    return out


def imp_schedule(D, sparsity, rounds):
    """Surviving count after each round: geometric in the surviving fraction, exact at the end."""
    if rounds < 1:
        raise ValueError("IMP needs at least one round")
    counts = [int(round(D * (1.0 - sparsity) ** (k / rounds))) for k in range(1, rounds + 1)]
    counts[-1] = surviving_count(D, sparsity)
    return counts


def imp_prune(parent, train_data, sparsity, rounds=5, config=None, return_history=False):
    """Lottery-ticket style iterative magnitude pruning.

    Train the dense model, then per round: drop the globally smallest
    surviving weights, rewind the survivors to their initial values and
    retrain.  ``config`` supplies ``T`` (total training iterations, split
    evenly over rounds), ``beta``, ``batch_size``, ``eps_theta`` and
    ``seed``; a :class:`~archprune.optimizer.TwoTempConfig` works.
    """
    from .optimizer import TwoTempConfig

    config = config or TwoTempConfig()
    rng = np.random.default_rng(config.seed)
    model = parent.clone()
    model.theta = rng.normal(0.0, config.eps_theta, model.D)
    model.bias = np.zeros_like(model.bias)
    theta0, bias0 = model.theta.copy(), model.bias.copy()
    iters = max(config.T // rounds, 1)

    mask = np.ones(model.D, dtype=np.int8)
    history = [mask]
    if sparsity == 0:
        return (mask, history) if return_history else mask
    for k, keep in enumerate(imp_schedule(model.D, sparsity, rounds)):
        masked_sgd(model, mask, train_data, iters, config.beta, config.batch_size, rng)
        mask = magnitude_prune(model.theta, mask, keep)
        history.append(mask)
        if k < rounds - 1:
            model.theta, model.bias = theta0.copy(), bias0.copy()
    return (mask, history) if return_history else mask


def _check(mask, partition):
    mask = np.asarray(mask)
    if mask.shape != (partition.D,):
        raise DimensionError(f"mask length {mask.size} does not match partition total {partition.D}")
    return mask


def layerwise_density(mask, partition):
    """Surviving fraction per layer (0 for an empty layer)."""
    mask = _check(mask, partition)
    return np.array([blk.mean() if blk.size else 0.0 for blk in partition.split(mask)], dtype=np.float64)


def layerwise_reshuffle(mask, partition, rng_seed):
    """Redraw surviving positions uniformly inside each layer, keeping per-layer counts."""
    mask = _check(mask, partition)
    rng = np.random.default_rng(rng_seed)
    return np.concatenate([rng.permutation(blk) for blk in partition.split(mask)]).astype(np.int8)


def as_partition(sizes):
    return sizes if isinstance(sizes, LayerPartition) else LayerPartition(tuple(int(s) for s in sizes))


# -- mask files ------------------------------------------------------------
# Line 1: "D=<int> sparsity=<float>", the float being 1 - popcount/D.
# Following lines: whitespace-separated runs "<bit>x<length>", e.g. "1x3 0x5".


def encode_mask(mask):
    mask = np.asarray(mask).astype(np.int8)
    D = len(mask)
    runs = []
    start = 0
    for end in np.append(np.flatnonzero(np.diff(mask)) + 1, D):
        if end > start:
            runs.append(f"{mask[start]}x{end - start}")
        start = end
    sparsity = 1.0 - int(mask.sum()) / D if D else 0.0
    lines = [f"D={D} sparsity={sparsity!r}"]
    for k in range(0, len(runs), 16):
        lines.append(" ".join(runs[k:k + 16]))
    return "\n".join(lines) + "\n"


def decode_mask(text):
    lines = text.strip().splitlines()
    if not lines:
        raise ValueError("empty mask file")
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        D, sparsity = int(head["D"]), float(head["sparsity"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad mask header {lines[0]!r}") from exc
    bits = []
    for tok in " ".join(lines[1:]).split():
        bit, length = tok.split("x")
        if bit not in ("0", "1"):
            raise ValueError(f"bad run token {tok!r}")
        bits.append(np.full(int(length), int(bit), dtype=np.int8))
    mask = np.concatenate(bits) if bits else np.zeros(0, dtype=np.int8)
    if len(mask) != D:
        raise ValueError(f"mask runs cover {len(mask)} bits, header says D={D}")
    pop = int(mask.sum())
    if D and not math.isclose(1.0 - pop / D, sparsity, abs_tol=1e-9):
        raise ValueError(f"popcount {pop} disagrees with header sparsity {sparsity}")
    return mask


def save_mask(mask, path):
    with open(path, "w") as fh:
        fh.write(encode_mask(mask))


def load_mask(path):
    with open(path) as fh:
        return decode_mask(fh.read())
