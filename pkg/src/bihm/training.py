"""Importance-weighted wake-sleep training of both model directions at once.

For each datapoint ``x``, K latent samples ``h ~ q(h | x)`` are drawn
ancestrally and weighted by ``w_k = sqrt(p(x, h_k) / q(h_k | x))``.  The
update direction is the self-normalized estimate

    sum_k wtilde_k d/dtheta [ log p(x, h_k) + log q(h_k | x) ]

which ascends ``log ptilde(x)``: differentiating twice the log of the sum of
square roots routes exactly half the posterior weight through each stack, and
the factor of two cancels the half.  No gradient crosses layer boundaries;
each layer sees only its own (input, target) pair.

Updates use bias-corrected Adam in ascent form, followed by an L1 subgradient
shrink on weight matrices only (biases are never regularized).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from bihm.estimators import ZEstimateConfig, est_log_z2
from bihm.model import (
    BihmModel,
    LayerGradient,
    ModelGradient,
    ShapeError,
    log_joint_p,
    log_q_given_x,
    sample_q_rows,
    sigmoid,
    zero_model,
)

__all__ = [
    "AdamState",
    "TrainConfig",
    "TrainingDiverged",
    "init_model",
    "minibatch_gradient",
    "adam_update",
    "train",
]


class TrainingDiverged(RuntimeError):
    """Parameters left the finite range during training."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training phase.

    Defaults follow the reference recipe for binary benchmark data:
    minibatches of 100, L1 strength 1e-3 on the weights, Adam at 1e-3.
    ``learning_rate = 0`` is allowed (useful as a no-op check) even though a
    real run wants it positive.
    """

    k_train: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 100
    l1_lambda: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.k_train < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("k_train, batch_size and epochs must be positive")
        if self.learning_rate < 0 or self.l1_lambda < 0:
            raise ValueError("learning_rate and l1_lambda must be nonnegative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")


@dataclass
class AdamState:
    """Running first/second moments, one array per parameter in model order."""

    first_moment: list
    second_moment: list
    step_count: int = 0

    @classmethod
    def zeros_for(cls, model: BihmModel) -> "AdamState":
        shapes = [a for _, a in model.param_items()]
        return cls(
            first_moment=[np.zeros_like(a) for a in shapes],
            second_moment=[np.zeros_like(a) for a in shapes],
            step_count=0,
        )


def init_model(layer_sizes: Sequence[int], seed: int) -> BihmModel:
    """Fresh model: Glorot-uniform weights, every bias (layers and prior) -1.

    Weights are drawn from ``Uniform(+-sqrt(6 / (fan_in + fan_out)))``; the
    -1 biases start every unit mildly off, which keeps early samples sparse.
    Deterministic given ``seed``.
    """
    base = zero_model(layer_sizes)
    rng = np.random.default_rng(seed)
    arrays = []
    for name, a in base.param_items():
        if name.endswith(".weights"):
            fan_out, fan_in = a.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays.append(rng.uniform(-bound, bound, size=a.shape))
        else:
            arrays.append(np.full_like(a, -1.0))
    return base.with_params(arrays)


def minibatch_gradient(
    model: BihmModel, batch, k: int, rng: np.random.Generator
) -> ModelGradient:
    """Average ascent gradient over a minibatch, K importance samples each.

    Per datapoint: draw ``h_1..h_K ~ q(. | x)``, softmax-normalize the
    log-weights ``(log p - log q) / 2``, and accumulate the weighted layer
    gradients of ``log p(x,h) + log q(h|x)``.  Batch axis is averaged.
    """
    if k < 1:
        raise ValueError("k must be positive")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"batch must be a nonempty 2-D array, got shape {x.shape}")
    b = x.shape[0]
    layers = sample_q_rows(model, x, k, rng)
    x_exp = np.broadcast_to(x[:, None, :], (b, k, x.shape[1]))
    lw = 0.5 * (log_joint_p(model, x_exp, layers) - log_q_given_x(model, x_exp, layers))
    w = np.exp(lw - lw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    w /= b

    L = model.num_latent_layers

    def weighted(layer, inputs, targets):
        delta = targets - sigmoid(layer.activation(inputs))
        d_w = np.einsum("bk,bko,bki->oi", w, delta, inputs, optimize=True)
        d_b = np.einsum("bk,bko->o", w, delta, optimize=True)
        return LayerGradient(d_w, d_b)

    d_prior = np.einsum(
        "bk,bkd->d", w, layers[L - 1] - sigmoid(model.prior.biases), optimize=True
    )
    p_grads = []
    for i in range(L):
        targets = x_exp if i == 0 else layers[i - 1]
        p_grads.append(weighted(model.p_layers[i], layers[i], targets))
    q_grads = []
    for i in range(L):
        inputs = x_exp if i == 0 else layers[i - 1]
        q_grads.append(weighted(model.q_layers[i], inputs, layers[i]))
    return ModelGradient(d_prior_biases=d_prior, p_layers=p_grads, q_layers=q_grads)


def adam_update(
    model: BihmModel, state: AdamState, gradient: ModelGradient, config: TrainConfig
):
    """One bias-corrected Adam ascent step, then L1 shrink on weights only.

    The L1 term is a post-step subgradient move ``w -= lr * lambda * sign(w)``
    so the Adam moments track the likelihood gradient alone.  Returns
    ``(new_model, new_state)``; inputs are untouched.  Raises
    :class:`TrainingDiverged` if the step produces non-finite values.
    """
    t = state.step_count + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_params = []
    new_m = []
    new_v = []
    items = model.param_items()
    grads = gradient.param_items()
    if len(items) != len(grads):
        raise ShapeError("gradient layout does not match the model")
    for (name, theta), (_, g), m, v in zip(
        items, grads, state.first_moment, state.second_moment
    ):
        if g.shape != theta.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + config.adam_eps)
        theta = theta + step
        if not np.all(np.isfinite(theta)):
            raise TrainingDiverged(f"non-finite values in {name} after the Adam step")
        if name.endswith(".weights") and config.l1_lambda > 0:
            theta = theta - config.learning_rate * config.l1_lambda * np.sign(theta)
        new_params.append(theta)
        new_m.append(m)
        new_v.append(v)
    return model.with_params(new_params), AdamState(new_m, new_v, t)


def _eval_rows(model, xs, k, rng, max_floats=2**22):
    """Mean est_log_ptilde over rows plus the mean effective-sample-size %."""
    x = np.asarray(xs, dtype=np.float64)
    n = x.shape[0]
    per_row = max(1, k * (model.visible_dim + model.num_latent_bits))
    block = max(1, max_floats // per_row)
    total = 0.0
    ess_total = 0.0
    for start in range(0, n, block):
        rows = x[start : start + block]
        layers = sample_q_rows(model, rows, k, rng)
        r_exp = rows[:, None, :]
        lw = 0.5 * (log_joint_p(model, r_exp, layers) - log_q_given_x(model, r_exp, layers))
        u = np.exp(lw - lw.max(axis=1, keepdims=True))
        mean_u = u.mean(axis=1)
        total += np.sum(2.0 * (lw.max(axis=1) + np.log(mean_u)))
        s1 = u.sum(axis=1)
        s2 = np.einsum("bk,bk->b", u, u)
        ess_total += np.sum(s1 * s1 / s2)
    return total / n, 100.0 * ess_total / (n * k)


def train(
    model: BihmModel,
    dataset,
    config: TrainConfig,
    valid=None,
    callbacks: Optional[Sequence[Callable]] = None,
    z_outer: int = 1000,
    start_epoch: int = 0,
    start_updates: int = 0,
):
    """Run epochs of shuffled-minibatch updates; returns (model, history).

    After each epoch the history gains one metrics dict with keys matching
    the metrics CSV schema: epoch, updates, train_logptilde, valid_logptilde
    (NaN when no validation set is given), two_log_z (estimated with
    ``z_outer`` outer samples), ess_pct (mean over the training set at
    K = k_train), seconds (wall time of the epoch including evaluation).
    Each callback is called as ``callback(metrics, model)`` after the row is
    appended.  ``start_epoch``/``start_updates`` offset the reported counters
    so a fine-tuning phase can continue the numbering of a first phase.

    Raises :class:`TrainingDiverged` if any parameter leaves the finite
    range; the message pinpoints the epoch and update.
    """
    x = np.asarray(dataset, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"dataset must be a nonempty 2-D array, got {x.shape}")
    if x.shape[1] != model.visible_dim:
        raise ShapeError(
            f"dataset has {x.shape[1]} columns, model expects {model.visible_dim}"
        )
    if not np.all((x == 0.0) | (x == 1.0)):
        raise ValueError("dataset entries must be 0 or 1")
    valid_x = None
    if valid is not None:
        valid_x = np.asarray(valid, dtype=np.float64)
        if valid_x.ndim != 2 or valid_x.shape[1] != model.visible_dim:
            raise ShapeError("validation set does not match the model's visible layer")

    root = np.random.default_rng(config.seed)
    # One substream per purpose, split up front: reordering evaluation work
    # never perturbs the training sample stream.
    shuffle_rng, sample_rng, eval_rng = root.spawn(3)

    state = AdamState.zeros_for(model)
    history = []
    n = x.shape[0]
    updates = start_updates
    for epoch_i in range(config.epochs):
        epoch = start_epoch + epoch_i + 1
        started = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            rows = x[perm[lo : lo + config.batch_size]]
            grad = minibatch_gradient(model, rows, config.k_train, sample_rng)
            try:
                model, state = adam_update(model, state, grad, config)
            except TrainingDiverged as exc:
                raise TrainingDiverged(
                    f"non-finite parameters at epoch {epoch}, update {updates + 1}"
                ) from exc
            updates += 1
        train_ll, ess_pct = _eval_rows(model, x, config.k_train, eval_rng)
        if valid_x is not None:
            valid_ll, _ = _eval_rows(model, valid_x, config.k_train, eval_rng)
        else:
            valid_ll = float("nan")
        two_log_z = est_log_z2(model, ZEstimateConfig(z_outer, 1), eval_rng).value
        metrics = {
            "epoch": epoch,
            "updates": updates,
            "train_logptilde": float(train_ll),
            "valid_logptilde": float(valid_ll),
            "two_log_z": float(two_log_z),
            "ess_pct": float(ess_pct),
            "seconds": time.perf_counter() - started,
        }
        history.append(metrics)
        for cb in callbacks or ():
            cb(metrics, model)
    return model, history
