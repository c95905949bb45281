"""Sigmoid relaxation of binary masks and the two-temperature mask gradient.

All functions here are pure and operate on float64 numpy arrays.
"""

from dataclasses import dataclass

import numpy as np

# sigma(30) differs from 1 by ~9.4e-14, so clamping past this is harmless
SATURATION = 30.0


class InvalidInputError(ValueError):
    """Raised for non-finite logits or out-of-domain scalar arguments."""


class DimensionError(ValueError):
    """Raised when vector lengths or matrix shapes do not agree."""


def _as_logits(w):
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("mask logits must be finite")
    return w


def sigmoid(x):
    """Logistic function, clamped to exactly 0 or 1 when |x| > 30."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    inner = np.abs(x) <= SATURATION
    out[inner] = 1.0 / (1.0 + np.exp(-x[inner]))
    out[x > SATURATION] = 1.0
    out[x < -SATURATION] = 0.0
    return out


def relax_mask(w, t):
    """Relaxed mask ``v = sigmoid(t * w)`` at inverse temperature ``t``."""
    if not t > 0:
        raise InvalidInputError(f"temperature must be positive, got {t}")
    return sigmoid(t * _as_logits(w))


def harden_mask(w):
    """Binary mask ``1[w > 0]``; a zero logit counts as pruned."""
    return (_as_logits(w) > 0).astype(np.int8)


def sigmoid_slope(w, t):
    """``t * sigmoid(t w) * (1 - sigmoid(t w))``, the derivative of ``sigmoid(t w)`` in ``w``."""
    s = sigmoid(t * np.asarray(w, dtype=np.float64))
    return t * s * (1.0 - s)


def two_temp_grad(grad_v, w, t_s):
    """Approximate mask-logit gradient.

    The gradient of the loss with respect to the low-temperature mask,
    ``grad_v``, is multiplied by the sigmoid slope at the *high* temperature
    ``t_s`` instead of the forward temperature.  With ``t_s`` equal to the
    forward temperature this is the exact chain rule.
    """
    grad_v = np.asarray(grad_v, dtype=np.float64)
    w = _as_logits(w)
    if grad_v.shape != w.shape:
        raise DimensionError(f"grad_v has shape {grad_v.shape}, logits have {w.shape}")
    if not t_s > 0:
        raise InvalidInputError(f"t_s must be positive, got {t_s}")
    return grad_v * sigmoid_slope(w, t_s)


@dataclass(frozen=True)
class TempPair:
    t_l: float
    t_s: float

    def __post_init__(self):
        if not (self.t_s > 0 and self.t_l >= self.t_s):
            raise InvalidInputError(f"need t_l >= t_s > 0, got t_l={self.t_l}, t_s={self.t_s}")


def g_max(t, M):
    """``sigmoid(t M) (1 - sigmoid(t M))``; equals 0.25 at M = 0."""
    s = float(sigmoid(np.float64(t * M)))
    return s * (1.0 - s)


def bound_constant_C(t_l, t_s, M):
    """Error constant of the convergence bound for logit range ``M``."""
    p = t_l * t_s
    return p * (1.0 / p - 2.0 * g_max(t_l, M) * g_max(t_s, M) + p / 16.0**2)


def convergence_bound(T, c, G, C):
    """``1/(c sqrt T) + c G^2 (1 + C)(1 + ln T) / T``."""
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    if not c > 0:
        raise InvalidInputError(f"c must be positive, got {c}")
    return 1.0 / (c * np.sqrt(T)) + c * G**2 * (1.0 + C) * (1.0 + np.log(T)) / T


@dataclass
class BoundParams:
    """Constants entering the convergence bound, plus the resulting value."""

    G: float
    M: float
    T: int
    c: float
    t_l: float
    t_s: float

    @property
    def C(self):
        return bound_constant_C(self.t_l, self.t_s, self.M)

    @property
    def g_max_l(self):
        return g_max(self.t_l, self.M)

    @property
    def g_max_s(self):
        return g_max(self.t_s, self.M)

    @property
    def value(self):
        return convergence_bound(max(self.T, 1), self.c, self.G, self.C)
