"""Importance-sampling estimators with Monte-Carlo standard errors.

The model assigns ``p*(x, h) = sqrt(p(x, h) q(x, h)) / Z``.  Marginalizing the
square root of the two joints over ``h`` gives the unnormalized quantity

    ptilde(x) = ( sum_h sqrt(p(x, h) q(h | x)) )^2 = Z^2 p*(x)

which both lower-bounds ``p*(x)`` (because ``Z <= 1``) and lower-bounds the
directed marginal ``p(x)`` (Cauchy-Schwarz).  Everything here estimates these
quantities from samples ``h ~ q(h | x)`` with weights

    log_w = (log p(x, h) - log q(h | x)) / 2

so that ``mean(w)^2`` estimates ``ptilde(x)`` and ``mean(w^2)`` estimates
``p(x)``.  All sums run through log-sum-exp; standard errors come from the
delta method on the linear-domain sample variance, computed on max-shifted
weights so the ratio ``std/mean`` never overflows.  Estimates of a log of a
mean are consistent but biased low for finite K (Jensen); the linear-domain
means themselves are unbiased.

``est_log_z2`` targets the normalizer: with ``(x, h) ~ p`` and
``h' ~ q(. | x)``, the statistic ``sqrt(p(x,h') q(h|x) / (p(x,h) q(h'|x)))``
has expectation exactly ``Z^2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from bihm.model import (
    BihmModel,
    LatentConfig,
    ShapeError,
    log_joint_p,
    log_q_given_x,
    sample_p_batch,
    sample_q_batch,
    sample_q_rows,
)

__all__ = [
    "EstimateWithError",
    "WeightedSampleSet",
    "ZEstimateConfig",
    "importance_weights",
    "draw_weighted_samples",
    "log_ptilde_from_weights",
    "log_p_from_weights",
    "est_log_ptilde",
    "est_log_p",
    "est_log_z2",
    "est_log_pstar",
    "est_log_ptilde_rows",
    "est_log_p_rows",
    "ess",
    "ess_pct",
]


@dataclass(frozen=True)
class EstimateWithError:
    """A scalar estimate, its standard error, and the sample count behind it."""

    value: float
    std_error: float
    num_samples: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")
        if np.isnan(self.std_error) or self.std_error < 0:
            raise ValueError("std_error must be a nonnegative number")


@dataclass(frozen=True)
class ZEstimateConfig:
    """Sample counts for the normalizer estimate.

    ``k_inner = 1`` is the default because one recognition sample per
    generative sample converges fastest for a fixed total budget.
    """

    k_outer: int
    k_inner: int = 1

    def __post_init__(self):
        if self.k_outer < 1 or self.k_inner < 1:
            raise ValueError("k_outer and k_inner must be positive")


@dataclass(frozen=True)
class WeightedSampleSet:
    """K latent samples for one visible vector, with importance weights.

    Samples are stored stacked, one ``(K, d_l)`` array per latent layer, so
    the estimators can stay vectorized; the ``samples`` property materializes
    the list-of-configurations view on demand (O(K) work, intended for
    inspection rather than inner loops).

    ``log_w`` holds the unnormalized log-weights; ``log_w_normalized`` the
    log of the softmax-normalized weights, which exponentiate to a vector
    summing to 1.
    """

    layer_arrays: tuple
    log_w: np.ndarray
    log_w_normalized: np.ndarray

    @property
    def num_samples(self) -> int:
        return self.log_w.shape[0]

    @property
    def samples(self) -> list:
        return [
            LatentConfig([a[i] for a in self.layer_arrays])
            for i in range(self.num_samples)
        ]


def _stacked_layers(model: BihmModel, samples) -> list:
    """Normalize samples to one (K, d_l) float array per latent layer."""
    seq = list(samples)
    if not seq:
        raise ValueError("need at least one sample")
    if isinstance(seq[0], LatentConfig):
        L = model.num_latent_layers
        if any(len(s) != L for s in seq):
            raise ShapeError(f"every sample must have {L} layers")
        return [
            np.stack([s.layers[i] for s in seq]).astype(np.float64)
            for i in range(L)
        ]
    arrays = [np.asarray(a, dtype=np.float64) for a in seq]
    if len(arrays) != model.num_latent_layers or any(a.ndim != 2 for a in arrays):
        raise ShapeError(
            "samples must be a list of latent configurations or one "
            "(K, d_l) array per latent layer"
        )
    return arrays


def log_importance_weights(model: BihmModel, x, layer_arrays: Sequence[np.ndarray]) -> np.ndarray:
    """``(log p(x,h) - log q(h|x)) / 2`` for stacked samples, shape ``(K,)``."""
    lp = log_joint_p(model, x, layer_arrays)
    lq = log_q_given_x(model, x, layer_arrays)
    return 0.5 * (lp - lq)


def importance_weights(model: BihmModel, x, samples) -> WeightedSampleSet:
    """Weight the given latent samples for visible vector ``x``.

    ``samples`` is a nonempty list of latent configurations (or equivalently
    one stacked ``(K, d_l)`` array per layer).  Deterministic given inputs.
    """
    layers = _stacked_layers(model, samples)
    log_w = log_importance_weights(model, np.asarray(x, dtype=np.float64), layers)
    log_w_normalized = log_w - logsumexp(log_w)
    return WeightedSampleSet(tuple(layers), log_w, log_w_normalized)


def draw_weighted_samples(model: BihmModel, x, k: int, rng: np.random.Generator) -> WeightedSampleSet:
    """Draw ``k`` samples from ``q(h | x)`` and weight them."""
    if k < 1:
        raise ValueError("k must be positive")
    return importance_weights(model, x, sample_q_batch(model, x, k, rng))


# ---------------------------------------------------------------------------
# Log-mean-exp with delta-method standard errors
# ---------------------------------------------------------------------------


def _log_mean_se(log_terms: np.ndarray):
    """log of mean(exp(log_terms)) and the delta-method SE of that log.

    SE(log m) ~ SE(m) / m, computed as std(u)/ (sqrt(K) mean(u)) on the
    max-shifted terms u, which is invariant to the shift.
    """
    lt = np.asarray(log_terms, dtype=np.float64)
    if lt.ndim != 1 or lt.size == 0:
        raise ValueError("log terms must be a nonempty vector")
    if np.any(np.isnan(lt)) or np.any(lt == np.inf):
        raise ValueError("log terms must be < inf and not NaN")
    k = lt.shape[0]
    m = np.max(lt)
    if not np.isfinite(m):
        warnings.warn("all terms are zero; log-mean is -inf", RuntimeWarning)
        return -np.inf, 0.0
    u = np.exp(lt - m)
    mean_u = u.mean()
    value = m + np.log(mean_u)
    if k < 2:
        return value, 0.0
    se = u.std(ddof=1) / (np.sqrt(k) * mean_u)
    return value, float(se)


def log_ptilde_from_weights(log_w: np.ndarray) -> EstimateWithError:
    """``2 (logsumexp(log_w) - log K)`` with its standard error.

    Twice the log of the mean weight; squaring doubles the delta-method SE.
    """
    value, se = _log_mean_se(log_w)
    return EstimateWithError(2.0 * value, 2.0 * se, np.asarray(log_w).shape[0])


def log_p_from_weights(log_w: np.ndarray) -> EstimateWithError:
    """``logsumexp(2 log_w) - log K``: the directed-marginal estimate.

    On any shared weight vector this is >= the ptilde estimate, exactly
    (power-mean inequality on the same samples).
    """
    lw = np.asarray(log_w, dtype=np.float64)
    value, se = _log_mean_se(2.0 * lw)
    return EstimateWithError(value, se, lw.shape[0])


def est_log_ptilde(model: BihmModel, x, k: int, rng: np.random.Generator) -> EstimateWithError:
    """Estimate ``log ptilde(x)`` from ``k`` recognition samples."""
    return log_ptilde_from_weights(draw_weighted_samples(model, x, k, rng).log_w)


def est_log_p(model: BihmModel, x, k: int, rng: np.random.Generator) -> EstimateWithError:
    """Estimate the directed marginal ``log p(x)`` from ``k`` recognition samples."""
    return log_p_from_weights(draw_weighted_samples(model, x, k, rng).log_w)


def est_log_z2(model: BihmModel, config: ZEstimateConfig, rng: np.random.Generator) -> EstimateWithError:
    """Estimate ``log Z^2`` (twice the log-normalizer).

    For each of ``k_outer`` draws ``(x, h) ~ p``, draws ``k_inner`` samples
    ``h' ~ q(. | x)`` and averages
    ``sqrt(p(x,h') q(h|x) / (p(x,h) q(h'|x)))``, whose expectation is exactly
    ``Z^2``.  Returns the log of the grand mean; the SE is the delta-method
    error of the linear-domain mean, computed over per-outer-sample means so
    inner correlation is accounted for.  The log of an unbiased estimate
    underestimates ``log Z^2`` on average.
    """
    ko, ki = config.k_outer, config.k_inner
    x_outer, h_outer = sample_p_batch(model, ko, rng)
    lp_outer = log_joint_p(model, x_outer, h_outer)
    lq_outer = log_q_given_x(model, x_outer, h_outer)
    h_inner = sample_q_rows(model, x_outer, ki, rng)
    x_exp = x_outer[:, None, :]
    lp_inner = log_joint_p(model, x_exp, h_inner)
    lq_inner = log_q_given_x(model, x_exp, h_inner)
    # Grouped as differences of like terms: when p = q the ratio is exactly 1
    # and the estimate is exactly zero.
    log_terms = 0.5 * ((lp_inner - lp_outer[:, None]) + (lq_outer[:, None] - lq_inner))

    m = np.max(log_terms)
    if not np.isfinite(m):
        warnings.warn("all normalizer terms are zero", RuntimeWarning)
        return EstimateWithError(-np.inf, 0.0, ko * ki)
    u = np.exp(log_terms - m)
    per_outer = u.mean(axis=1)
    grand = per_outer.mean()
    value = float(m + np.log(grand))
    if ko < 2:
        se = 0.0
    else:
        se = float(per_outer.std(ddof=1) / (np.sqrt(ko) * grand))
    return EstimateWithError(value, se, ko * ki)


def est_log_pstar(model: BihmModel, x, k: int, log_z2, rng: np.random.Generator) -> EstimateWithError:
    """Estimate ``log p*(x) = log ptilde(x) - log Z^2``.

    ``log_z2`` is a previously computed normalizer estimate, either a plain
    float (treated as exact) or an :class:`EstimateWithError`, in which case
    the two standard errors combine in quadrature.
    """
    if isinstance(log_z2, EstimateWithError):
        z_value, z_se = log_z2.value, log_z2.std_error
    else:
        z_value, z_se = float(log_z2), 0.0
    pt = est_log_ptilde(model, x, k, rng)
    se = float(np.hypot(pt.std_error, z_se))
    return EstimateWithError(pt.value - z_value, se, pt.num_samples)


# ---------------------------------------------------------------------------
# Row-batched estimates
# ---------------------------------------------------------------------------


def _row_block_size(model: BihmModel, k: int, max_floats: int) -> int:
    per_row = k * (model.visible_dim + model.num_latent_bits)
    return max(1, max_floats // max(per_row, 1))


def _rows_log_mean_se(log_terms: np.ndarray):
    """Row-wise version of :func:`_log_mean_se` for a (rows, K) matrix."""
    m = log_terms.max(axis=1)
    u = np.exp(log_terms - m[:, None])
    mean_u = u.mean(axis=1)
    values = m + np.log(mean_u)
    k = log_terms.shape[1]
    if k < 2:
        ses = np.zeros_like(values)
    else:
        ses = u.std(axis=1, ddof=1) / (np.sqrt(k) * mean_u)
    return values, ses


def _est_rows(model: BihmModel, xs, k, rng, double_log_w: bool, max_floats: int):
    x = np.asarray(xs, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D dataset array, got shape {x.shape}")
    n = x.shape[0]
    values = np.empty(n)
    ses = np.empty(n)
    block = _row_block_size(model, k, max_floats)
    for start in range(0, n, block):
        rows = x[start : start + block]
        layers = sample_q_rows(model, rows, k, rng)
        lw = 0.5 * (
            log_joint_p(model, rows[:, None, :], layers)
            - log_q_given_x(model, rows[:, None, :], layers)
        )
        if double_log_w:
            v, s = _rows_log_mean_se(2.0 * lw)
        else:
            v, s = _rows_log_mean_se(lw)
            v, s = 2.0 * v, 2.0 * s
        values[start : start + block] = v
        ses[start : start + block] = s
    return values, ses


def est_log_ptilde_rows(
    model: BihmModel, xs, k: int, rng: np.random.Generator, max_floats: int = 2**22
):
    """``est_log_ptilde`` for every row of a dataset, vectorized.

    Returns ``(values, std_errors)`` arrays of length ``rows``.  Work is
    chunked so intermediate sample arrays stay under ``max_floats`` float64
    entries.
    """
    return _est_rows(model, xs, k, rng, double_log_w=False, max_floats=max_floats)


def est_log_p_rows(
    model: BihmModel, xs, k: int, rng: np.random.Generator, max_floats: int = 2**22
):
    """``est_log_p`` for every row of a dataset, vectorized."""
    return _est_rows(model, xs, k, rng, double_log_w=True, max_floats=max_floats)


# ---------------------------------------------------------------------------
# Effective sample size
# ---------------------------------------------------------------------------


def ess(log_w) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2`` of log-domain weights.

    Computed on max-shifted weights, which makes the statistic invariant to
    adding a constant to all log-weights and returns exactly K for equal
    weights.  Always in ``[1, K]``.  If every weight is zero (all entries
    -inf) the answer is 1 with a warning: one hypothetical nonzero weight
    would dominate.
    """
    lw = np.asarray(log_w, dtype=np.float64)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log weights must be a nonempty vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log weights must be < inf and not NaN")
    k = lw.shape[0]
    m = lw.max()
    if not np.isfinite(m):
        warnings.warn("all importance weights are zero; reporting ess = 1", RuntimeWarning)
        return 1.0
    u = np.exp(lw - m)
    s1 = u.sum()
    s2 = u @ u
    return float(min(max(s1 * s1 / s2, 1.0), k))


def ess_pct(log_w) -> float:
    """Effective sample size as a percentage of the number of weights."""
    lw = np.asarray(log_w, dtype=np.float64)
    return 100.0 * ess(lw) / lw.shape[0]
