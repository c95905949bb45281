"""Architecture-pruning training loop.

Mask logits ``w`` and weights ``theta`` are updated jointly by SGD.  The
forward pass always uses the low-temperature relaxed mask
``sigmoid(t_l w)``; the mask-logit gradient uses the sigmoid slope at the
high temperature ``t_s`` (see :func:`archprune.relaxation.two_temp_grad`).
A penalty ``gamma * ||1 + w||^2`` pulls every logit towards -1, and mask
updates stop for good once the surviving fraction reaches the target.

Random-number protocol of :func:`run_ap` (tests replay it): one
``numpy.random.default_rng(seed)`` draws ``theta_0`` (D normals), then
``w_0`` (D normals, absolute value), then for every iteration one call
``rng.integers(0, n, batch_size)`` for the batch indices.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .models import Batch, MaskedLogistic
from .relaxation import BoundParams, TempPair, bound_constant_C, convergence_bound, harden_mask, relax_mask, two_temp_grad

HISTORY_HEADER = ["iter", "loss", "sparsity", "surviving", "frozen"]


class DivergenceError(FloatingPointError):
    """Raised when the loss or a gradient stops being finite."""

    def __init__(self, iteration, what):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TwoTempConfig:
    t_l: float = 100.0
    t_s: float = 10.0
    gamma: float = 0.0
    target_sparsity: float = 0.0
    T: int = 1000
    c: float = 0.01
    beta: float = 0.05
    batch_size: int = 32
    eps_theta: float = 0.1
    eps_w: float = 0.01
    seed: int = 0
    train_theta: bool = True
    full_loss: bool = False

    def __post_init__(self):
        TempPair(self.t_l, self.t_s)
        if not 0.0 <= self.target_sparsity < 1.0:
            raise ValueError(f"target_sparsity must lie in [0, 1), got {self.target_sparsity}")
        if self.T < 0 or self.batch_size < 1:
            raise ValueError("T must be >= 0 and batch_size >= 1")
        if not (self.c > 0 and self.beta >= 0 and self.gamma >= 0):
            raise ValueError("need c > 0, beta >= 0, gamma >= 0")
        if not (self.eps_theta > 0 and self.eps_w > 0):
            raise ValueError("init scales must be positive")

    @property
    def temps(self):
        return TempPair(self.t_l, self.t_s)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _coerce(value: str, kind):
    if kind in (bool, "bool"):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind in (int, "int"):
        return int(float(value)) if "e" in value.lower() else int(value)
    if kind in (float, "float"):
        return float(value)
    return value


def apply_overrides(config, pairs):
    """Return a copy of a dataclass config with ``key=value`` strings applied."""
    kinds = {f.name: f.type for f in dataclasses.fields(config)}
    changes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"expected key=value, got {pair!r}")
        key, value = (s.strip() for s in pair.split("=", 1))
        if key not in kinds:
            raise KeyError(f"unknown config key {key!r}; valid keys: {', '.join(kinds)}")
        changes[key] = _coerce(value, kinds[key])
    return dataclasses.replace(config, **changes)


def parse_config_text(text, base=None):
    base = base if base is not None else TwoTempConfig()
    pairs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            pairs.append(line)
    return apply_overrides(base, pairs)


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def dump_config(config):
    return "".join(f"{f.name}={getattr(config, f.name)}\n" for f in dataclasses.fields(config))


def lr_schedule(i, c):
    """Mask step size ``c / sqrt(i)`` for iteration ``i >= 1``."""
    if i < 1:
        raise ValueError(f"iterations are numbered from 1, got {i}")
    return c / math.sqrt(i)


def target_count(D, sparsity):
    """Smallest surviving count whose fraction is at least ``1 - sparsity``."""
    return int(math.ceil((1.0 - sparsity) * D - 1e-9))


@dataclass
class TrainState:
    model: object
    iteration: int = 0
    mask_frozen: bool = False
    frozen_at: int | None = None
    max_abs_w: float = 0.0
    history: list = field(default_factory=list)

    @property
    def surviving(self):
        return int(np.count_nonzero(self.model.w > 0))

    @property
    def sparsity(self):
        return 1.0 - self.surviving / self.model.D


def init_state(model):
    return TrainState(model=model, max_abs_w=float(np.max(np.abs(model.w), initial=0.0)))


def _ration_flips(w_old, w_new, keep):
    """Undo just enough positive-to-nonpositive crossings to keep ``keep`` survivors.

    Crossings with the most negative proposed logits go through first; the
    rest keep their previous (positive) value.
    """
    deficit = keep - int(np.count_nonzero(w_new > 0))
    if deficit <= 0:
        return w_new
    crossing = np.flatnonzero((w_old > 0) & (w_new <= 0))
    order = crossing[np.argsort(w_new[crossing], kind="stable")]
    restore = order[len(order) - deficit:]
    w_new = w_new.copy()
    w_new[restore] = w_old[restore]
    return w_new


def ap_objective(model, batch, t_l, gamma):
    """Relaxed pruning objective ``NLL + gamma ||theta||^2 + gamma ||sigmoid(t_l w)||^2``.

    The last term is the relaxed connection count; the mask update itself
    uses the surrogate penalty ``gamma ||1 + w||^2`` instead.
    """
    v = relax_mask(model.w, t_l)
    return model.loss(batch, t_l=t_l, gamma=gamma) + gamma * float(v @ v)


def ap_step(state, batch, config, eval_batch=None):
    """One joint update of mask logits and weights; mutates and returns ``state``."""
    model = state.model
    i = state.iteration + 1
    loss, g_theta, g_v, g_bias = model.loss_and_grads(batch, t_l=config.t_l, gamma=config.gamma)
    if not np.isfinite(loss):
        raise DivergenceError(i, "loss")
    if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_v)) and np.all(np.isfinite(g_bias))):
        raise DivergenceError(i, "gradient")

    v = relax_mask(model.w, config.t_l)
    loss = loss + config.gamma * float(v @ v)

    if not state.mask_frozen:
        w = model.w
        step = two_temp_grad(g_v, w, config.t_s) + 2.0 * config.gamma * (1.0 + w)
        w_new = w - lr_schedule(i, config.c) * step
        if config.target_sparsity > 0:
            w_new = _ration_flips(w, w_new, target_count(model.D, config.target_sparsity))
        if not np.all(np.isfinite(w_new)):
            raise DivergenceError(i, "mask logits")
        model.w = w_new
        state.max_abs_w = max(state.max_abs_w, float(np.max(np.abs(w_new), initial=0.0)))

    if config.train_theta:
        model.theta = model.theta - config.beta * g_theta
        if model.has_bias:
            model.bias = model.bias - config.beta * g_bias

    state.iteration = i
    if eval_batch is not None:
        loss = ap_objective(model, eval_batch, config.t_l, config.gamma)
    surviving = state.surviving
    state.history.append((i, float(loss), 1.0 - surviving / model.D, surviving, state.mask_frozen))
    return state


def check_freeze(state, config):
    """Stop mask updates once the surviving fraction is at or below the target."""
    if state.mask_frozen or config.target_sparsity <= 0:
        return state
    if state.surviving <= target_count(state.model.D, config.target_sparsity):
        state.mask_frozen = True
        state.frozen_at = state.iteration
    return state


def sample_batch(rng, data, batch_size):
    idx = rng.integers(0, len(data), batch_size)
    return Batch(data.x[idx], data.y[idx])


def run_ap(parent, data, config, G=None, init="all", callback=None):
    """Run architecture pruning and return ``(hard_mask, state, bound_params)``.

    ``parent`` is used as an architecture template and is not modified.
    ``init`` chooses what gets freshly drawn: ``"all"`` (theta and w),
    ``"w"`` (keep the parent's theta) or ``"none"``.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    rng = np.random.default_rng(config.seed)
    model = parent.clone()
    theta0 = rng.normal(0.0, config.eps_theta, model.D)
    w0 = np.abs(rng.normal(0.0, config.eps_w, model.D))
    if init == "all":
        model.theta = theta0
        model.bias = np.zeros_like(model.bias)
    if init in ("all", "w"):
        model.w = w0
    elif init != "none":
        raise ValueError(f"unknown init mode {init!r}")

    state = check_freeze(init_state(model), config)
    eval_batch = Batch(data.x, data.y) if config.full_loss else None
    for _ in range(config.T):
        ap_step(state, sample_batch(rng, data, config.batch_size), config, eval_batch)
        check_freeze(state, config)
        if callback is not None:
            callback(state)

    bound = BoundParams(G=float("nan") if G is None else float(G), M=state.max_abs_w,
                        T=config.T, c=config.c, t_l=config.t_l, t_s=config.t_s)
    return harden_mask(model.w), state, bound


def run_ap_to_target(parent, data, config, retries=3, factor=3.0, G=None, callback=None):
    """:func:`run_ap`, re-run with ``gamma`` multiplied by ``factor`` while the
    target sparsity is missed.  Returns the last attempt; its
    ``state.mask_frozen`` tells whether the target was reached.  Each
    attempt gets its own state object, which ``callback`` receives."""
    for attempt in range(retries + 1):
        result = run_ap(parent, data, config, G=G, callback=callback)
        if config.target_sparsity <= 0 or result[1].mask_frozen or attempt == retries:
            return result
        config = config.replace(gamma=config.gamma * factor if config.gamma > 0 else 1e-3)
    return result


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(HISTORY_HEADER)
        for it, loss, sparsity, surviving, frozen in history:
            out.writerow([it, repr(loss), repr(sparsity), surviving, int(frozen)])


# -- convergence-bound check (fixed weights) -------------------------------


@dataclass
class ConvexInstance:
    """Logistic loss in the mask values with weights held fixed.

    The per-example loss is convex in ``v`` because ``(v * theta)^T x`` is
    linear in ``v``.
    """

    theta: np.ndarray
    data: Batch

    @property
    def model(self):
        m = MaskedLogistic(len(self.theta))
        m.theta = np.asarray(self.theta, dtype=np.float64).copy()
        return m

    @classmethod
    def random(cls, dim=5, n=200, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        theta = rng.normal(0.0, scale, dim)
        x = rng.uniform(-1.0, 1.0, (n, dim))
        true_v = (rng.uniform(size=dim) > 0.5).astype(float)
        p = 1.0 / (1.0 + np.exp(-(x @ (true_v * theta))))
        y = (rng.uniform(size=n) < p).astype(np.int64)
        return cls(theta, Batch(x, y))

    def loss_at_v(self, v):
        return self.model.loss(self.data, mask=v)

    def grad_v(self, v, batch=None):
        return self.model.loss_and_grads(batch or self.data, mask=v)[2]


def estimate_G(instance, n_pairs=10_000, inflate=1.2, seed=12345):
    """``inflate`` times the largest single-example ``||grad_v||`` over random (v, z)."""
    rng = np.random.default_rng(seed)
    model = instance.model
    x, y = instance.data.x, instance.data.y
    v = rng.uniform(size=(n_pairs, model.D))
    idx = rng.integers(0, len(y), n_pairs)
    z = np.sum(x[idx] * v * model.theta, axis=1)
    p = 1.0 / (1.0 + np.exp(-z))
    grads = (p - y[idx])[:, None] * x[idx] * model.theta
    return inflate * float(np.max(np.linalg.norm(grads, axis=1)))


def reference_minimum(instance, steps=100_000):
    """Minimum of the mean loss over the box ``[0, 1]^D`` by projected full-batch gradient descent.

    ``inf_w L(sigmoid(t w))`` equals this box minimum for any ``t``.
    """
    a = instance.data.x * instance.theta
    lip = 0.25 * np.linalg.eigvalsh(a.T @ a / len(a)).max()
    lr = 1.0 / lip if lip > 0 else 1.0
    v = np.full(len(instance.theta), 0.5)
    y = instance.data.y.astype(np.float64)
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-(a @ v)))
        v = np.clip(v - lr * (a.T @ (p - y)) / len(y), 0.0, 1.0)
    return instance.loss_at_v(v), v


@dataclass
class BoundCheckReport:
    gap: float
    bound: float
    satisfied: bool
    G: float
    M: float
    C: float
    T: int
    c: float
    loss_star: float
    final_losses: list


def empirical_bound_check(instance, config, n_seeds=20, G=None, reference_steps=100_000, loss_star=None):
    """Compare the seed-averaged optimality gap after ``config.T`` steps with the bound.

    Runs single-example SGD on the mask logits with weights fixed and no
    penalty.  ``G`` defaults to :func:`estimate_G`; ``M`` is the largest
    ``|w_i|`` seen on any trajectory.
    """
    config = config.replace(train_theta=False, gamma=0.0, target_sparsity=0.0, batch_size=1)
    if G is None:
        G = estimate_G(instance)
    if loss_star is None:
        loss_star, _ = reference_minimum(instance, reference_steps)
    finals, M = [], 0.0
    for k in range(n_seeds):
        _, state, _ = run_ap(instance.model, instance.data, config.replace(seed=config.seed + k), init="w")
        finals.append(instance.loss_at_v(relax_mask(state.model.w, config.t_l)))
        M = max(M, state.max_abs_w)
    C = bound_constant_C(config.t_l, config.t_s, M)
    bound = convergence_bound(config.T, config.c, G, C)
    gap = float(np.mean(finals) - loss_star)
    return BoundCheckReport(gap=gap, bound=float(bound), satisfied=bool(gap <= bound), G=G, M=M, C=C,
                            T=config.T, c=config.c, loss_star=float(loss_star), final_losses=finals)
