"""Approximate Gibbs sampling from the combined model, plus inpainting.

The combined model's joint is ``p*(x, h) propto sqrt(ptilde(x) p(x,h) q(h|x))``.
Its single-layer conditionals factor over neighboring layers only:

    p*(h_l | rest) propto sqrt( p(h_l|h_{l+1}) p(h_{l-1}|h_l)
                                q(h_{l+1}|h_l) q(h_l|h_{l-1}) )

with ``h_0 = x``, the prior standing in for ``p(h_L|h_{L+1})``, and the
``q(h_{L+1}|h_L)`` factor absent at the top.  Each update draws
``proposals_per_step`` candidates from the mixture
``(p(h_l|h_{l+1}) + q(h_l|h_{l-1})) / 2`` and keeps one with probability
proportional to the importance weight

    w = sqrt(p(h_l|.) p(.|h_l) q(.|h_l) q(h_l|.)) / (p(h_l|.) + q(h_l|.))

so the resampled value approaches the exact conditional as the proposal count
grows.  Additive shifts of the log-weights cancel in the resampling.

The visible conditional follows from the joint: the x-dependent factors are
``sqrt(ptilde(x)) * sqrt(p(x|h_1) q(h_1|x))``, so with proposals drawn from
``p(x|h_1)`` the weight is ``sqrt(ptilde(x) q(h_1|x) / p(x|h_1))``.
``ptilde(x)`` is itself estimated (``ptilde_k`` recognition samples per
candidate), which makes the visible update approximate beyond the resampling
approximation; exactness claims are therefore reserved for the hidden
updates.

A sweep updates all odd layers, then all even layers with the visibles
counted as layer 0.  During inpainting the visible update only overwrites
unobserved positions: candidates are composited with the observed bits before
weighing, which leaves the weight formula intact because the observed bits
contribute identical factors to every candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from bihm.estimators import est_log_ptilde_rows
from bihm.model import (
    BihmModel,
    LatentConfig,
    ShapeError,
    layer_log_prob,
    layer_sample,
    prior_log_prob,
    sample_p_batch,
    sigmoid,
)

__all__ = [
    "GibbsConfig",
    "GibbsState",
    "gibbs_update_hidden",
    "gibbs_update_visible",
    "gibbs_sample",
    "gibbs_sample_chains",
    "inpaint",
    "inpaint_chains",
    "expected_visible",
]


@dataclass(frozen=True)
class GibbsConfig:
    """Chain parameters. The proposal counts trade cost against accuracy."""

    num_sweeps: int = 10
    proposals_per_step: int = 25
    ptilde_k: int = 25

    def __post_init__(self):
        if self.num_sweeps < 1 or self.proposals_per_step < 1 or self.ptilde_k < 1:
            raise ValueError("all Gibbs counts must be positive")


@dataclass(frozen=True)
class GibbsState:
    """One chain state: visible vector plus one binary vector per layer."""

    x: np.ndarray
    latents: LatentConfig

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeError(f"state x must be a vector, got shape {x.shape}")
        if not np.all((x == 0.0) | (x == 1.0)):
            raise ValueError("state x entries must be 0 or 1")
        object.__setattr__(self, "x", x)


def _check_state(model: BihmModel, state: GibbsState) -> None:
    if state.x.shape[0] != model.visible_dim:
        raise ShapeError("state x length does not match the model")
    if len(state.latents) != model.num_latent_layers:
        raise ShapeError("state latent count does not match the model")
    for i, h in enumerate(state.latents.layers):
        if h.shape[0] != model.layer_sizes[i + 1]:
            raise ShapeError(f"state latent layer {i + 1} has wrong size")


def _categorical_rows(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One index per row, drawn proportionally to exp(log_w) (Gumbel trick)."""
    u = rng.random(log_w.shape)
    return np.argmax(log_w - np.log(-np.log(u)), axis=1)


def _update_hidden_chains(
    model: BihmModel, chains: list, l: int, config: GibbsConfig, rng: np.random.Generator
) -> None:
    """Resample layer ``l`` (1-based) for every chain; mutates ``chains[l]``."""
    L = model.num_latent_layers
    c = chains[0].shape[0]
    p = config.proposals_per_step
    d = model.layer_sizes[l]
    below = chains[l - 1]

    if l == L:
        mu_p = np.broadcast_to(sigmoid(model.prior.biases), (c, d))
    else:
        mu_p = sigmoid(model.p_layers[l].activation(chains[l + 1]))
    mu_q = sigmoid(model.q_layers[l - 1].activation(below))
    coin = rng.random((c, p, 1)) < 0.5
    mu_mix = np.where(coin, mu_p[:, None, :], mu_q[:, None, :])
    cand = (rng.random((c, p, d)) < mu_mix).astype(np.float64)

    if l == L:
        lp_self = prior_log_prob(model.prior, cand)
        lq_above = 0.0
    else:
        above = chains[l + 1][:, None, :]
        lp_self = layer_log_prob(model.p_layers[l], above, cand)
        lq_above = layer_log_prob(model.q_layers[l], cand, above)
    below_exp = below[:, None, :]
    lp_below = layer_log_prob(model.p_layers[l - 1], cand, below_exp)
    lq_self = layer_log_prob(model.q_layers[l - 1], below_exp, cand)

    log_w = 0.5 * (lp_self + lp_below + lq_above + lq_self) - np.logaddexp(lp_self, lq_self)
    idx = _categorical_rows(log_w, rng)
    chains[l] = cand[np.arange(c), idx]


def _update_visible_chains(
    model: BihmModel,
    chains: list,
    config: GibbsConfig,
    rng: np.random.Generator,
    mask: Optional[np.ndarray] = None,
    observed: Optional[np.ndarray] = None,
) -> None:
    """Resample the visibles for every chain; mutates ``chains[0]``."""
    c = chains[0].shape[0]
    p = config.proposals_per_step
    d0 = model.visible_dim
    h1 = chains[1]

    if mask is not None and mask.all():
        chains[0] = np.broadcast_to(observed, (c, d0)).copy()
        return

    mu_x = sigmoid(model.p_layers[0].activation(h1))
    cand = (rng.random((c, p, d0)) < mu_x[:, None, :]).astype(np.float64)
    if mask is not None:
        cand = np.where(mask.astype(bool), observed, cand)

    h1_exp = h1[:, None, :]
    lq = layer_log_prob(model.q_layers[0], cand, h1_exp)
    lp = layer_log_prob(model.p_layers[0], h1_exp, cand)
    lpt, _ = est_log_ptilde_rows(model, cand.reshape(c * p, d0), config.ptilde_k, rng)
    log_w = 0.5 * (lpt.reshape(c, p) + lq - lp)
    idx = _categorical_rows(log_w, rng)
    chains[0] = cand[np.arange(c), idx]


def _sweep_chains(model, chains, config, rng, mask=None, observed=None) -> None:
    L = model.num_latent_layers
    for l in range(1, L + 1, 2):
        _update_hidden_chains(model, chains, l, config, rng)
    _update_visible_chains(model, chains, config, rng, mask=mask, observed=observed)
    for l in range(2, L + 1, 2):
        _update_hidden_chains(model, chains, l, config, rng)


# ---------------------------------------------------------------------------
# Public single-state operations
# ---------------------------------------------------------------------------


def _state_to_chains(state: GibbsState) -> list:
    return [state.x[None, :].copy()] + [h[None, :].copy() for h in state.latents.layers]


def _chains_to_state(chains: list) -> GibbsState:
    return GibbsState(x=chains[0][0], latents=LatentConfig([h[0] for h in chains[1:]]))


def gibbs_update_hidden(
    model: BihmModel, state: GibbsState, l: int, config: GibbsConfig, rng: np.random.Generator
) -> np.ndarray:
    """Propose-and-resample update of hidden layer ``l`` (1-based); returns new h_l."""
    _check_state(model, state)
    if not 1 <= l <= model.num_latent_layers:
        raise ValueError(f"layer index {l} out of range 1..{model.num_latent_layers}")
    chains = _state_to_chains(state)
    _update_hidden_chains(model, chains, l, config, rng)
    return chains[l][0]


def gibbs_update_visible(
    model: BihmModel, state: GibbsState, config: GibbsConfig, rng: np.random.Generator
) -> np.ndarray:
    """Propose-and-resample update of the visibles; returns the new x."""
    _check_state(model, state)
    chains = _state_to_chains(state)
    _update_visible_chains(model, chains, config, rng)
    return chains[0][0]


def gibbs_sample(
    model: BihmModel,
    init: Optional[GibbsState],
    config: GibbsConfig,
    rng: np.random.Generator,
) -> GibbsState:
    """Run ``num_sweeps`` full sweeps from ``init`` (or a fresh model sample)."""
    if init is None:
        x, layers = sample_p_batch(model, 1, rng)
        chains = [x] + layers
    else:
        _check_state(model, init)
        chains = _state_to_chains(init)
    for _ in range(config.num_sweeps):
        _sweep_chains(model, chains, config, rng)
    return _chains_to_state(chains)


# Chains are processed in blocks so candidate arrays (rows x proposals x dim)
# stay within a fixed float budget regardless of the chain count.
_CHAIN_BLOCK_FLOATS = 2**21


def _chain_block_rows(model: BihmModel, config: GibbsConfig) -> int:
    widest = max(model.layer_sizes)
    return max(1, _CHAIN_BLOCK_FLOATS // (config.proposals_per_step * widest))


def gibbs_sample_chains(
    model: BihmModel, count: int, config: GibbsConfig, rng: np.random.Generator
) -> list:
    """Run ``count`` independent chains at once; returns ``[X, H1, ..., HL]``.

    All chains are initialized from model samples and share the generator;
    per-row draws are independent.  This is the bulk path behind sample
    generation and the stationarity checks.
    """
    if count < 1:
        raise ValueError("count must be positive")
    block = _chain_block_rows(model, config)
    outs = None
    for start in range(0, count, block):
        rows = min(block, count - start)
        x, layers = sample_p_batch(model, rows, rng)
        chains = [x] + layers
        for _ in range(config.num_sweeps):
            _sweep_chains(model, chains, config, rng)
        if outs is None:
            outs = [[a] for a in chains]
        else:
            for acc, a in zip(outs, chains):
                acc.append(a)
    return [np.concatenate(acc) for acc in outs]


# ---------------------------------------------------------------------------
# Inpainting
# ---------------------------------------------------------------------------


def _check_mask(model: BihmModel, x_corrupt, mask):
    x = np.asarray(x_corrupt, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if x.shape != (model.visible_dim,) or m.shape != (model.visible_dim,):
        raise ShapeError("x_corrupt and mask must match the visible layer")
    if not np.all((x == 0.0) | (x == 1.0)) or not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("x_corrupt and mask entries must be 0 or 1")
    return x, m


def inpaint_chains(
    model: BihmModel,
    x_corrupt,
    mask,
    count: int,
    config: GibbsConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """``count`` independent completions of ``x_corrupt``; returns ``(count, d)``.

    ``mask`` marks observed positions with 1; those bits are never altered.
    Latents start from ``q(h | x_corrupt)`` and the chain runs with the
    observed bits clamped.
    """
    x, m = _check_mask(model, x_corrupt, mask)
    block = _chain_block_rows(model, config)
    outs = []
    done = 0
    while done < count:
        rows = min(block, count - done)
        chains = [np.broadcast_to(x, (rows, x.shape[0])).copy()]
        for layer in model.q_layers:
            chains.append(layer_sample(layer, chains[-1], rng))
        for _ in range(config.num_sweeps):
            _sweep_chains(model, chains, config, rng, mask=m, observed=x)
        outs.append(chains[0])
        done += rows
    return np.concatenate(outs)


def inpaint(
    model: BihmModel,
    x_corrupt,
    mask,
    config: GibbsConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Complete the unobserved positions of one corrupted visible vector."""
    return inpaint_chains(model, x_corrupt, mask, 1, config, rng)[0]


# ---------------------------------------------------------------------------
# Display helper
# ---------------------------------------------------------------------------


def expected_visible(model: BihmModel, h1) -> np.ndarray:
    """Mean of ``p(x | h_1)``: grayscale pixels instead of a hard sample."""
    h = np.asarray(h1, dtype=np.float64)
    return sigmoid(model.p_layers[0].activation(h))
