"""Core model: stacked conditional-Bernoulli layers used in both directions.

A bidirectional Helmholtz machine (BiHM) pairs a top-down generative stack
``p`` (factorized Bernoulli prior over the deepest layer, then conditional
Bernoulli layers down to the visibles) with a bottom-up recognition stack
``q`` (conditional Bernoulli layers from the visibles upward).  The model
distribution is proportional to the geometric mean ``sqrt(p * q)`` of the two
joints; everything in this module is one of the two directed constituents.

All probability arithmetic is carried out in the log domain (nats).  Bernoulli
means are clamped to ``[SIGMOID_EPS, 1 - SIGMOID_EPS]`` before taking logs so
every log-probability is finite; sampling and gradients use the unclamped
sigmoid.  Parameters are float64 throughout.

Array arguments may carry leading batch axes: log-probability functions reduce
over the last axis only, so ``layer_log_prob(layer, V, T)`` with ``V`` of shape
``(k, in_dim)`` returns ``k`` values.  Every stochastic operation takes an
explicit ``numpy.random.Generator``; independent substreams for concurrent
work should be derived with ``Generator.spawn``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

SIGMOID_EPS = 1e-7


class ShapeError(ValueError):
    """An argument's dimensions do not match the layer or model."""


def sigmoid(a):
    """Logistic function, unclamped."""
    return expit(a)


def clamped_sigmoid(a):
    """Logistic function clamped to ``[SIGMOID_EPS, 1 - SIGMOID_EPS]``."""
    return np.clip(expit(a), SIGMOID_EPS, 1.0 - SIGMOID_EPS)


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_last_dim(what: str, arr: np.ndarray, dim: int) -> None:
    if arr.ndim < 1 or arr.shape[-1] != dim:
        raise ShapeError(f"{what}: expected last dimension {dim}, got shape {arr.shape}")


def _check_binary(what: str, arr: np.ndarray) -> None:
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{what}: entries must be 0 or 1")


def _bernoulli_log_prob(mu: np.ndarray, target: np.ndarray) -> np.ndarray:
    # mu must already be clamped away from {0, 1}
    return np.sum(target * np.log(mu) + (1.0 - target) * np.log1p(-mu), axis=-1)


@dataclass(frozen=True)
class BeliefLayer:
    """One conditional Bernoulli layer: ``P(t_i = 1 | v) = sigmoid(W v + b)_i``.

    Parameters are in logit units.  ``weights`` has shape
    ``(out_dim, in_dim)``; ``biases`` has length ``out_dim``.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = _as_float_array(self.weights)
        b = _as_float_array(self.biases)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ShapeError(
                f"layer weights {w.shape} and biases {b.shape} are inconsistent"
            )
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ShapeError("layer dimensions must be at least 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def activation(self, inputs: np.ndarray) -> np.ndarray:
        """Pre-sigmoid logits ``W v + b`` for inputs with last dim ``in_dim``."""
        return inputs @ self.weights.T + self.biases


@dataclass(frozen=True)
class FactorizedPrior:
    """Factorized Bernoulli distribution ``P(h_i = 1) = sigmoid(b_i)``."""

    biases: np.ndarray

    def __post_init__(self):
        b = _as_float_array(self.biases)
        if b.ndim != 1 or b.shape[0] < 1:
            raise ShapeError(f"prior biases must be a nonempty vector, got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("prior biases must be finite")
        object.__setattr__(self, "biases", b)

    @property
    def dim(self) -> int:
        return self.biases.shape[0]


@dataclass(frozen=True)
class LatentConfig:
    """One joint binary assignment to the latent layers ``h_1 .. h_L``.

    ``layers[0]`` is the layer closest to the visibles.
    """

    layers: tuple

    def __init__(self, layers: Sequence[np.ndarray]):
        arrays = []
        for i, h in enumerate(layers):
            a = _as_float_array(h)
            if a.ndim != 1:
                raise ShapeError(f"latent layer {i + 1} must be a vector, got {a.shape}")
            _check_binary(f"latent layer {i + 1}", a)
            arrays.append(a)
        if not arrays:
            raise ShapeError("a latent configuration needs at least one layer")
        object.__setattr__(self, "layers", tuple(arrays))

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class BihmModel:
    """Full parameter set: prior over the top layer plus both layer stacks.

    ``layer_sizes`` is ``[visible, h_1, ..., h_L]``.  ``p_layers[i]`` maps
    ``h_{i+1}`` down to ``h_i`` (with ``h_0`` meaning the visibles), and
    ``q_layers[i]`` maps ``h_i`` up to ``h_{i+1}``.

    A model is immutable: inference operations never mutate it and are safe
    to run concurrently.  Training produces updated copies.
    """

    layer_sizes: tuple
    prior: FactorizedPrior
    p_layers: tuple
    q_layers: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ShapeError("need at least one visible and one latent layer")
        if any(s < 1 for s in sizes):
            raise ShapeError(f"layer sizes must be positive, got {sizes}")
        p = tuple(self.p_layers)
        q = tuple(self.q_layers)
        L = len(sizes) - 1
        if len(p) != L or len(q) != L:
            raise ShapeError(f"expected {L} layers in each stack, got {len(p)} p / {len(q)} q")
        for i in range(L):
            if p[i].out_dim != sizes[i] or p[i].in_dim != sizes[i + 1]:
                raise ShapeError(
                    f"p layer {i + 1} has shape {p[i].out_dim}x{p[i].in_dim}, "
                    f"expected {sizes[i]}x{sizes[i + 1]}"
                )
            if q[i].out_dim != sizes[i + 1] or q[i].in_dim != sizes[i]:
                raise ShapeError(
                    f"q layer {i + 1} has shape {q[i].out_dim}x{q[i].in_dim}, "
                    f"expected {sizes[i + 1]}x{sizes[i]}"
                )
        if self.prior.dim != sizes[-1]:
            raise ShapeError(
                f"prior has {self.prior.dim} units, top layer has {sizes[-1]}"
            )
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "p_layers", p)
        object.__setattr__(self, "q_layers", q)

    @property
    def num_latent_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def visible_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def latent_sizes(self) -> tuple:
        return self.layer_sizes[1:]

    @property
    def num_latent_bits(self) -> int:
        return sum(self.layer_sizes[1:])

    def param_items(self):
        """Ordered ``(name, array)`` pairs for every parameter array.

        The order is fixed and shared by checkpoints, gradients and the
        optimizer: prior biases first, then the p stack from the top layer
        down, then the q stack from the bottom up.
        """
        L = self.num_latent_layers
        items = [("prior.biases", self.prior.biases)]
        for i in range(L - 1, -1, -1):
            items.append((f"p{i + 1}.weights", self.p_layers[i].weights))
            items.append((f"p{i + 1}.biases", self.p_layers[i].biases))
        for i in range(L):
            items.append((f"q{i + 1}.weights", self.q_layers[i].weights))
            items.append((f"q{i + 1}.biases", self.q_layers[i].biases))
        return items

    def with_params(self, arrays: Sequence[np.ndarray]) -> "BihmModel":
        """New model with parameter arrays replaced, in ``param_items`` order."""
        expected = len(self.param_items())
        if len(arrays) != expected:
            raise ShapeError(f"expected {expected} parameter arrays, got {len(arrays)}")
        L = self.num_latent_layers
        it = iter(arrays)
        prior = FactorizedPrior(next(it))
        p = [None] * L
        for i in range(L - 1, -1, -1):
            w = next(it)
            b = next(it)
            p[i] = BeliefLayer(w, b)
        q = []
        for _ in range(L):
            w = next(it)
            b = next(it)
            q.append(BeliefLayer(w, b))
        return BihmModel(self.layer_sizes, prior, tuple(p), tuple(q))


@dataclass(frozen=True)
class LayerGradient:
    """Gradient of one layer's log-probability term."""

    d_weights: np.ndarray
    d_biases: np.ndarray


@dataclass
class ModelGradient:
    """Per-parameter gradient arrays mirroring a model's layout."""

    d_prior_biases: np.ndarray
    p_layers: list = field(default_factory=list)
    q_layers: list = field(default_factory=list)

    @classmethod
    def zeros_for(cls, model: BihmModel) -> "ModelGradient":
        return cls(
            d_prior_biases=np.zeros_like(model.prior.biases),
            p_layers=[
                LayerGradient(np.zeros_like(l.weights), np.zeros_like(l.biases))
                for l in model.p_layers
            ],
            q_layers=[
                LayerGradient(np.zeros_like(l.weights), np.zeros_like(l.biases))
                for l in model.q_layers
            ],
        )

    def param_items(self):
        """Same ordering as :meth:`BihmModel.param_items`."""
        L = len(self.p_layers)
        items = [("prior.biases", self.d_prior_biases)]
        for i in range(L - 1, -1, -1):
            items.append((f"p{i + 1}.weights", self.p_layers[i].d_weights))
            items.append((f"p{i + 1}.biases", self.p_layers[i].d_biases))
        for i in range(L):
            items.append((f"q{i + 1}.weights", self.q_layers[i].d_weights))
            items.append((f"q{i + 1}.biases", self.q_layers[i].d_biases))
        return items


def _latent_arrays(h) -> list:
    if isinstance(h, LatentConfig):
        return list(h.layers)
    return [_as_float_array(a) for a in h]


# ---------------------------------------------------------------------------
# Layer-level operations
# ---------------------------------------------------------------------------


def layer_log_prob(layer: BeliefLayer, inputs, targets) -> np.ndarray:
    """Log-probability of ``targets`` under the layer's conditional, in nats.

    Computes ``sum_i [t_i log mu_i + (1 - t_i) log(1 - mu_i)]`` with
    ``mu = sigmoid(W v + b)`` clamped away from 0 and 1, so the result is
    always finite and nonpositive.  Leading batch axes broadcast.
    """
    v = _as_float_array(inputs)
    t = _as_float_array(targets)
    _check_last_dim("layer input", v, layer.in_dim)
    _check_last_dim("layer target", t, layer.out_dim)
    mu = clamped_sigmoid(layer.activation(v))
    return _bernoulli_log_prob(mu, t)


def layer_sample(layer: BeliefLayer, inputs, rng: np.random.Generator) -> np.ndarray:
    """Draw each output bit independently from ``Bernoulli(sigmoid(W v + b))``."""
    v = _as_float_array(inputs)
    _check_last_dim("layer input", v, layer.in_dim)
    mu = sigmoid(layer.activation(v))
    return (rng.random(mu.shape) < mu).astype(np.float64)


def prior_log_prob(prior: FactorizedPrior, h) -> np.ndarray:
    """Log-probability of ``h`` under the factorized Bernoulli prior."""
    t = _as_float_array(h)
    _check_last_dim("prior target", t, prior.dim)
    mu = np.clip(expit(prior.biases), SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return _bernoulli_log_prob(mu, t)


def prior_sample(prior: FactorizedPrior, shape, rng: np.random.Generator) -> np.ndarray:
    """Sample from the prior; ``shape`` gives the leading batch dimensions."""
    mu = sigmoid(prior.biases)
    full = tuple(shape) + (prior.dim,)
    return (rng.random(full) < mu).astype(np.float64)


def layer_grad(layer: BeliefLayer, inputs, targets) -> LayerGradient:
    """Exact gradient of ``layer_log_prob`` for one (input, target) pair.

    With ``mu = sigmoid(W v + b)``: the bias gradient is ``t - mu`` and the
    weight gradient is the outer product ``(t - mu) v^T``.
    """
    v = _as_float_array(inputs)
    t = _as_float_array(targets)
    _check_last_dim("layer input", v, layer.in_dim)
    _check_last_dim("layer target", t, layer.out_dim)
    if v.ndim != 1 or t.ndim != 1:
        raise ShapeError("layer_grad expects single vectors; batch paths accumulate directly")
    delta = t - sigmoid(layer.activation(v))
    return LayerGradient(d_weights=np.outer(delta, v), d_biases=delta)


# ---------------------------------------------------------------------------
# Joint log-probabilities
# ---------------------------------------------------------------------------


def log_joint_p(model: BihmModel, x, h) -> np.ndarray:
    """Log of the top-down joint: prior times the p-stack conditionals.

    ``log p(x, h) = log p(h_L) + sum_l log p(h_{l-1} | h_l)`` with
    ``h_0 = x``.  Accepts a :class:`LatentConfig` or a sequence of layer
    arrays; leading batch axes broadcast across all of them.
    """
    xs = _as_float_array(x)
    hs = _latent_arrays(h)
    L = model.num_latent_layers
    if len(hs) != L:
        raise ShapeError(f"expected {L} latent layers, got {len(hs)}")
    total = prior_log_prob(model.prior, hs[L - 1])
    for i in range(L):
        target = xs if i == 0 else hs[i - 1]
        total = total + layer_log_prob(model.p_layers[i], hs[i], target)
    return total


def log_q_given_x(model: BihmModel, x, h) -> np.ndarray:
    """Log of the bottom-up conditional ``q(h | x)``, layer by layer upward."""
    xs = _as_float_array(x)
    hs = _latent_arrays(h)
    L = model.num_latent_layers
    if len(hs) != L:
        raise ShapeError(f"expected {L} latent layers, got {len(hs)}")
    total = 0.0
    for i in range(L):
        inputs = xs if i == 0 else hs[i - 1]
        total = total + layer_log_prob(model.q_layers[i], inputs, hs[i])
    return total


# ---------------------------------------------------------------------------
# Ancestral sampling
# ---------------------------------------------------------------------------


def sample_q_batch(model: BihmModel, x, k: int, rng: np.random.Generator) -> list:
    """Draw ``k`` latent configurations from ``q(h | x)`` for one visible ``x``.

    Returns one ``(k, d_l)`` array per latent layer, bottom-up.  This is the
    sampling path used by the estimators and by training.
    """
    xs = _as_float_array(x)
    _check_last_dim("visible input", xs, model.visible_dim)
    if xs.ndim != 1:
        raise ShapeError("sample_q_batch expects a single visible vector")
    cur = np.broadcast_to(xs, (k, xs.shape[0]))
    layers = []
    for layer in model.q_layers:
        cur = layer_sample(layer, cur, rng)
        layers.append(cur)
    return layers


def sample_q(model: BihmModel, x, rng: np.random.Generator) -> LatentConfig:
    """Draw one latent configuration from ``q(h | x)``."""
    layers = sample_q_batch(model, x, 1, rng)
    return LatentConfig([a[0] for a in layers])


def sample_q_rows(model: BihmModel, xs, k: int, rng: np.random.Generator) -> list:
    """Draw ``k`` configurations from ``q(h | x_n)`` for each row of ``xs``.

    ``xs`` has shape ``(n, visible_dim)``; returns one ``(n, k, d_l)`` array
    per latent layer.  Each call consumes generator draws layer by layer in
    row-major order, so results are reproducible for a fixed generator state
    and row count.
    """
    x = _as_float_array(xs)
    _check_last_dim("visible input", x, model.visible_dim)
    if x.ndim != 2:
        raise ShapeError(f"expected a (rows, {model.visible_dim}) array, got {x.shape}")
    cur = np.broadcast_to(x[:, None, :], (x.shape[0], k, x.shape[1]))
    layers = []
    for layer in model.q_layers:
        cur = layer_sample(layer, cur, rng)
        layers.append(cur)
    return layers


def sample_p_batch(model: BihmModel, k: int, rng: np.random.Generator):
    """Draw ``k`` joint samples from the top-down model.

    Returns ``(x, layers)`` where ``x`` has shape ``(k, visible_dim)`` and
    ``layers`` lists one ``(k, d_l)`` array per latent layer, bottom-up.
    """
    L = model.num_latent_layers
    layers = [None] * L
    layers[L - 1] = prior_sample(model.prior, (k,), rng)
    for i in range(L - 2, -1, -1):
        layers[i] = layer_sample(model.p_layers[i + 1], layers[i + 1], rng)
    x = layer_sample(model.p_layers[0], layers[0], rng)
    return x, layers


def sample_p(model: BihmModel, rng: np.random.Generator):
    """Draw one ``(x, h)`` pair from the top-down model."""
    x, layers = sample_p_batch(model, 1, rng)
    return x[0], LatentConfig([a[0] for a in layers])


# ---------------------------------------------------------------------------
# Model construction helpers
# ---------------------------------------------------------------------------


def random_model(
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
    weight_scale: float = 1.0,
    bias_scale: float = 1.0,
) -> BihmModel:
    """Random model for tests and oracle checks.

    Weights are Gaussian with standard deviation ``weight_scale / sqrt(in_dim)``
    and biases Gaussian with standard deviation ``bias_scale``, so activations
    stay well inside the unsaturated sigmoid range.  The two stacks are drawn
    independently, which makes the p and q joints genuinely different.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeError(f"invalid layer sizes {sizes}")
    L = len(sizes) - 1

    def _layer(out_dim, in_dim):
        w = rng.normal(0.0, weight_scale / np.sqrt(in_dim), size=(out_dim, in_dim))
        b = rng.normal(0.0, bias_scale, size=out_dim)
        return BeliefLayer(w, b)

    p = tuple(_layer(sizes[i], sizes[i + 1]) for i in range(L))
    q = tuple(_layer(sizes[i + 1], sizes[i]) for i in range(L))
    prior = FactorizedPrior(rng.normal(0.0, bias_scale, size=sizes[-1]))
    return BihmModel(tuple(sizes), prior, p, q)


def zero_model(layer_sizes: Sequence[int]) -> BihmModel:
    """Model with all parameters zero: every conditional is uniform."""
    sizes = [int(s) for s in layer_sizes]
    L = len(sizes) - 1
    p = tuple(
        BeliefLayer(np.zeros((sizes[i], sizes[i + 1])), np.zeros(sizes[i]))
        for i in range(L)
    )
    q = tuple(
        BeliefLayer(np.zeros((sizes[i + 1], sizes[i])), np.zeros(sizes[i + 1]))
        for i in range(L)
    )
    return BihmModel(tuple(sizes), FactorizedPrior(np.zeros(sizes[-1])), p, q)
