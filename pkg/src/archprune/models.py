"""Dense models whose connection weights are elementwise-masked.

Every model keeps its masked weights ``theta`` and the mask logits ``w`` as
flat float64 vectors of the same length D.  Layer ``l`` owns the contiguous
slice ``partition[l]`` of both vectors, stored row-major as a
``(fan_in, fan_out)`` matrix.  Biases live in a separate flat vector and are
never masked.

The effective weights are ``mask * theta`` where ``mask`` is either the
relaxed mask ``sigmoid(t_l w)`` or a hard 0/1 mask.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .relaxation import DimensionError, relax_mask

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.x) < 1:
            raise ValueError("a batch needs at least one example")
        if len(self.x) != len(self.y):
            raise DimensionError(f"{len(self.x)} inputs but {len(self.y)} labels")

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class LayerPartition:
    """Contiguous split of a flat mask of length D into per-layer blocks."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if any(s < 0 for s in self.sizes):
            raise ValueError("layer sizes must be nonnegative")

    @property
    def D(self):
        return int(sum(self.sizes))

    @property
    def slices(self):
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return out

    def split(self, vec):
        vec = np.asarray(vec)
        if vec.shape != (self.D,):
            raise DimensionError(f"vector of length {vec.size} does not match partition total {self.D}")
        return [vec[s] for s in self.slices]


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


class MaskedModel:
    """Base class: a stack of dense layers with masked weights."""

    output: str  # "logistic" or "softmax"

    def __init__(self, layer_sizes, bias=True):
        self.layer_sizes = [(int(a), int(b)) for a, b in layer_sizes]
        for (_, out_prev), (fan_in, _) in zip(self.layer_sizes, self.layer_sizes[1:]):
            if out_prev != fan_in:
                raise DimensionError(f"layer fan-out {out_prev} does not feed fan-in {fan_in}")
        self.partition = LayerPartition(tuple(a * b for a, b in self.layer_sizes))
        self.has_bias = bool(bias)
        D = self.partition.D
        self.theta = np.zeros(D)
        self.w = np.zeros(D)
        self.bias = np.zeros(sum(b for _, b in self.layer_sizes) if bias else 0)

    @property
    def D(self):
        return self.partition.D

    @property
    def n_inputs(self):
        return self.layer_sizes[0][0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1][1]

    def clone(self):
        return copy.deepcopy(self)

    def initialize(self, rng, eps_theta=0.1, eps_w=0.01):
        """Draw ``theta ~ N(0, eps_theta)`` then ``w ~ |N(0, eps_w)|``; biases start at zero."""
        self.theta = rng.normal(0.0, eps_theta, self.D)
        self.w = np.abs(rng.normal(0.0, eps_w, self.D))
        self.bias = np.zeros_like(self.bias)
        return self

    def _bias_slices(self):
        out, start = [], 0
        for _, b in self.layer_sizes:
            out.append(slice(start, start + b))
            start += b
        return out

    def _layers(self, weights):
        mats = [blk.reshape(a, b) for blk, (a, b) in zip(self.partition.split(weights), self.layer_sizes)]
        if self.has_bias:
            biases = [self.bias[s] for s in self._bias_slices()]
        else:
            biases = [None] * len(mats)
        return mats, biases

    def _mask(self, t_l, mask):
        if (t_l is None) == (mask is None):
            raise ValueError("pass exactly one of t_l (relaxed mode) or mask (hard mode)")
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
            if mask.shape != (self.D,):
                raise DimensionError(f"mask length {mask.size} != D={self.D}")
            return mask
        return relax_mask(self.w, t_l)

    def _check_x(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_inputs:
            raise DimensionError(f"input has {x.shape[1]} features, model expects {self.n_inputs}")
        return x

    def _scores(self, x, weights):
        """Pre-activation of the last layer plus the cached activations."""
        mats, biases = self._layers(weights)
        acts, pre = [x], []
        h = x
        for k, (W, b) in enumerate(zip(mats, biases)):
            z = h @ W
            if b is not None:
                z = z + b
            pre.append(z)
            if k < len(mats) - 1:
                h = np.maximum(z, 0.0)
                acts.append(h)
        return pre[-1], acts, pre, mats

    def forward(self, x, t_l=None, mask=None):
        """Probabilities (logistic) or class scores (softmax)."""
        x = self._check_x(x)
        v = self._mask(t_l, mask)
        out, *_ = self._scores(x, v * self.theta)
        if self.output == "logistic":
            return 1.0 / (1.0 + np.exp(-out[:, 0]))
        return out

    def predict(self, x, t_l=None, mask=None):
        x = self._check_x(x)
        out, *_ = self._scores(x, self._mask(t_l, mask) * self.theta)
        if self.output == "logistic":
            # argmax over (1 - F, F): ties go to class 0
            return (out[:, 0] > 0).astype(np.int64)
        return np.argmax(out, axis=1)

    def _data_loss(self, out, y):
        """Mean negative log-likelihood and its gradient w.r.t. the output scores."""
        n = len(y)
        if self.output == "logistic":
            z = out[:, 0]
            y = y.astype(np.float64)
            nll = -(y * _log_sigmoid(z) + (1.0 - y) * _log_sigmoid(-z))
            p = np.exp(_log_sigmoid(z))
            return nll.mean(), ((p - y) / n)[:, None]
        shifted = out - out.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        nll = -logp[np.arange(n), y]
        g = np.exp(logp)
        g[np.arange(n), y] -= 1.0
        return nll.mean(), g / n

    def loss_and_grads(self, batch, t_l=None, mask=None, gamma=0.0):
        """Loss ``NLL + gamma ||theta||^2`` and its gradients.

        Returns ``(loss, grad_theta, grad_v, grad_bias)``.  ``grad_v`` is the
        gradient with respect to the mask values at which the forward pass was
        evaluated; by the chain rule through ``mask * theta`` it equals the
        effective-weight gradient times ``theta``, while ``grad_theta`` is
        that gradient times the mask (plus the weight-decay term).
        """
        x = self._check_x(batch.x)
        y = np.asarray(batch.y)
        v = self._mask(t_l, mask)
        out, acts, pre, mats = self._scores(x, v * self.theta)
        nll, delta = self._data_loss(out, y)

        g_eff = [None] * len(mats)
        g_bias = [None] * len(mats)
        for k in range(len(mats) - 1, -1, -1):
            g_eff[k] = acts[k].T @ delta
            g_bias[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ mats[k].T) * (pre[k - 1] > 0)
        g_eff = np.concatenate([g.ravel() for g in g_eff])

        loss = nll + gamma * float(self.theta @ self.theta)
        grad_theta = g_eff * v + 2.0 * gamma * self.theta
        grad_v = g_eff * self.theta
        grad_bias = np.concatenate(g_bias) if self.has_bias else np.zeros(0)
        return loss, grad_theta, grad_v, grad_bias

    def loss(self, batch, t_l=None, mask=None, gamma=0.0):
        x = self._check_x(batch.x)
        out, *_ = self._scores(x, self._mask(t_l, mask) * self.theta)
        nll, _ = self._data_loss(out, np.asarray(batch.y))
        return nll + gamma * float(self.theta @ self.theta)

    def save(self, path):
        save_checkpoint(self, path)


class MaskedLogistic(MaskedModel):
    """``F(x) = sigmoid((mask * theta)^T x [+ b])`` with binary cross-entropy."""

    output = "logistic"

    def __init__(self, n_features, bias=False):
        super().__init__([(n_features, 1)], bias=bias)


class MaskedMLP(MaskedModel):
    """ReLU MLP with a softmax cross-entropy head; at most three dense layers."""

    output = "softmax"

    def __init__(self, layer_sizes, bias=True):
        if not 1 <= len(layer_sizes) <= 3:
            raise ValueError(f"MaskedMLP supports 1 to 3 dense layers, got {len(layer_sizes)}")
        super().__init__(layer_sizes, bias=bias)

    @classmethod
    def from_widths(cls, widths, bias=True):
        """``from_widths([784, 32, 5])`` builds two layers 784->32->5."""
        return cls(list(zip(widths[:-1], widths[1:])), bias=bias)


def forward(model, x, t_l=None, mask=None):
    return model.forward(x, t_l=t_l, mask=mask)


def loss_and_grads(model, batch, t_l=None, mask=None, gamma=0.0):
    return model.loss_and_grads(batch, t_l=t_l, mask=mask, gamma=gamma)


def save_checkpoint(model, path):
    """Write an ``.npz`` checkpoint.

    Keys: ``version`` (int), ``kind`` ("logistic" | "softmax"),
    ``layer_sizes`` (L x 2 int64), ``has_bias`` (bool), ``theta`` and ``w``
    (D float64), ``bias`` (float64, empty when absent).
    """
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.int64(CHECKPOINT_VERSION),
            kind=np.array(model.output),
            layer_sizes=np.array(model.layer_sizes, dtype=np.int64),
            has_bias=np.bool_(model.has_bias),
            theta=model.theta,
            w=model.w,
            bias=model.bias,
        )


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        kind = str(z["kind"])
        sizes = [tuple(r) for r in z["layer_sizes"].tolist()]
        has_bias = bool(z["has_bias"])
        if kind == "logistic":
            model = MaskedLogistic(sizes[0][0], bias=has_bias)
        else:
            model = MaskedMLP(sizes, bias=has_bias)
        model.theta = z["theta"].copy()
        model.w = z["w"].copy()
        model.bias = z["bias"].copy()
    if model.theta.shape != (model.D,) or model.w.shape != (model.D,):
        raise DimensionError("checkpoint parameter length does not match layer sizes")
    return model


def masked_sgd(model, mask, data, iters, beta, batch_size, rng, gamma=0.0):
    """Plain SGD on ``theta`` (and biases) under a fixed hard mask.

    The weight gradient is multiplied by the mask, so pruned coordinates of
    ``theta`` are never written to.  Mutates and returns ``model``.
    """
    mask = np.asarray(mask, dtype=np.float64)
    for i in range(iters):
        idx = rng.integers(0, len(data), batch_size)
        loss, g_theta, _, g_bias = model.loss_and_grads(Batch(data.x[idx], data.y[idx]), mask=mask, gamma=gamma)
        if not np.isfinite(loss):
            raise FloatingPointError(f"fine-tuning diverged at iteration {i + 1}")
        step = beta * (mask * g_theta)
        live = mask != 0
        model.theta[live] = model.theta[live] - step[live]
        if model.has_bias:
            model.bias = model.bias - beta * g_bias
    return model
