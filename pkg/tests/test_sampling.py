"""Gibbs chains over the combined model and mask-constrained inpainting."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from bihm.model import (
    BeliefLayer,
    BihmModel,
    FactorizedPrior,
    LatentConfig,
    ShapeError,
    random_model,
    sigmoid,
    zero_model,
)
from bihm.oracle import exact_conditional_pstar
from bihm.sampling import (
    GibbsConfig,
    GibbsState,
    _categorical_rows,
    _update_hidden_chains,
    expected_visible,
    gibbs_sample,
    gibbs_sample_chains,
    gibbs_update_hidden,
    gibbs_update_visible,
    inpaint,
    inpaint_chains,
)


def joint_codes(chains):
    """Lexicographic state index for each chain row over (x, h1, ..., hL)."""
    bits = np.concatenate(chains, axis=1)
    weights = 2.0 ** np.arange(bits.shape[1] - 1, -1, -1)
    return (bits @ weights).astype(np.int64)


def empirical_hidden_conditional(model, clamps, l, n, proposals, rng, block=2000):
    """Frequencies of layer ``l`` after one resampling step, neighbors fixed."""
    d = model.layer_sizes[l]
    config = GibbsConfig(num_sweeps=1, proposals_per_step=proposals, ptilde_k=1)
    counts = np.zeros(1 << d)
    code_w = 2.0 ** np.arange(d - 1, -1, -1)
    for start in range(0, n, block):
        rows = min(block, n - start)
        chains = [
            np.tile(c, (rows, 1)) if c is not None else np.zeros((rows, model.layer_sizes[i]))
            for i, c in enumerate(clamps)
        ]
        _update_hidden_chains(model, chains, l, config, rng)
        counts += np.bincount((chains[l] @ code_w).astype(np.int64), minlength=1 << d)
    return counts / n


class TestConfigAndState:
    def test_config_defaults_and_validation(self):
        config = GibbsConfig()
        assert (config.num_sweeps, config.proposals_per_step, config.ptilde_k) == (10, 25, 25)
        for bad in (
            dict(num_sweeps=0),
            dict(proposals_per_step=0),
            dict(ptilde_k=0),
        ):
            with pytest.raises(ValueError):
                GibbsConfig(**bad)

    def test_state_validation(self):
        GibbsState(np.array([1.0, 0.0]), LatentConfig([np.array([1.0])]))
        with pytest.raises(ValueError):
            GibbsState(np.array([0.5, 0.0]), LatentConfig([np.array([1.0])]))
        with pytest.raises(ShapeError):
            GibbsState(np.zeros((2, 2)), LatentConfig([np.array([1.0])]))

    def test_state_model_mismatch(self):
        model = zero_model([3, 2])
        config = GibbsConfig(num_sweeps=1, proposals_per_step=2, ptilde_k=2)
        bad_x = GibbsState(np.zeros(2), LatentConfig([np.zeros(2)]))
        with pytest.raises(ShapeError):
            gibbs_update_hidden(model, bad_x, 1, config, np.random.default_rng(0))
        bad_h = GibbsState(np.zeros(3), LatentConfig([np.zeros(3)]))
        with pytest.raises(ShapeError):
            gibbs_update_visible(model, bad_h, config, np.random.default_rng(0))

    def test_layer_index_range(self):
        model = zero_model([3, 2])
        state = GibbsState(np.zeros(3), LatentConfig([np.zeros(2)]))
        config = GibbsConfig(num_sweeps=1, proposals_per_step=2, ptilde_k=2)
        with pytest.raises(ValueError):
            gibbs_update_hidden(model, state, 0, config, np.random.default_rng(0))
        with pytest.raises(ValueError):
            gibbs_update_hidden(model, state, 2, config, np.random.default_rng(0))


class TestResampling:
    def test_shift_invariant_selection(self):
        rng = np.random.default_rng(110)
        log_w = rng.normal(size=(1000, 8))
        a = _categorical_rows(log_w, np.random.default_rng(111))
        b = _categorical_rows(log_w + 123.0, np.random.default_rng(111))
        c = _categorical_rows(log_w - 500.0, np.random.default_rng(111))
        assert_array_equal(a, b)
        assert_array_equal(a, c)

    def test_deterministic_selection_when_one_weight_dominates(self):
        log_w = np.full((50, 4), -1e6)
        winners = np.random.default_rng(112).integers(4, size=50)
        log_w[np.arange(50), winners] = 0.0
        picks = _categorical_rows(log_w, np.random.default_rng(113))
        assert_array_equal(picks, winners)

    def test_single_proposal_update_is_deterministic_given_rng(self):
        model = random_model([3, 2], np.random.default_rng(114))
        state = GibbsState(np.array([1.0, 0.0, 1.0]), LatentConfig([np.zeros(2)]))
        config = GibbsConfig(num_sweeps=1, proposals_per_step=1, ptilde_k=1)
        a = gibbs_update_hidden(model, state, 1, config, np.random.default_rng(115))
        b = gibbs_update_hidden(model, state, 1, config, np.random.default_rng(115))
        assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 1.0}


class TestUniformModel:
    """With p = q uniform, every update is exactly uniform at any proposal count."""

    def test_chain_joint_is_uniform(self):
        model = zero_model([3, 2])
        config = GibbsConfig(num_sweeps=2, proposals_per_step=5, ptilde_k=3)
        chains = gibbs_sample_chains(model, 4000, config, np.random.default_rng(120))
        counts = np.bincount(joint_codes(chains), minlength=32)
        expected = 4000 / 32
        chi2 = np.sum((counts - expected) ** 2 / expected)
        # 31 degrees of freedom; 61.1 is the 0.1% point
        assert chi2 < 61.1

    def test_hidden_update_is_uniform(self):
        model = zero_model([3, 2])
        emp = empirical_hidden_conditional(
            model,
            [np.array([1.0, 0.0, 1.0]), None],
            l=1,
            n=100_000,
            proposals=3,
            rng=np.random.default_rng(121),
        )
        expected = 100_000 / 4
        chi2 = np.sum((emp * 100_000 - expected) ** 2 / expected)
        # 3 degrees of freedom; 16.3 is the 0.1% point
        assert chi2 < 16.3


class TestHiddenConditionalAccuracy:
    """One resampling step targets the exact conditional of the combined model."""

    def test_middle_layer(self):
        model = random_model([3, 2, 2], np.random.default_rng(100), weight_scale=1.2)
        x = np.array([1.0, 0.0, 1.0])
        h2 = np.array([1.0, 0.0])
        exact = exact_conditional_pstar(model, [x, None, h2])
        n = 60_000
        emp = empirical_hidden_conditional(
            model, [x, None, h2], l=1, n=n, proposals=200, rng=np.random.default_rng(101)
        )
        se = np.sqrt(exact * (1.0 - exact) / n)
        assert np.all(np.abs(emp - exact) <= 4.0 * se + 1.0 / n)
        assert 0.5 * np.abs(emp - exact).sum() <= 0.02

    def test_top_layer(self):
        # The top layer has no recognition term above it; the prior fills in.
        model = random_model([3, 2, 2], np.random.default_rng(100), weight_scale=1.2)
        x = np.array([1.0, 0.0, 1.0])
        h1 = np.array([0.0, 1.0])
        exact = exact_conditional_pstar(model, [x, h1, None])
        n = 60_000
        emp = empirical_hidden_conditional(
            model, [x, h1, None], l=2, n=n, proposals=150, rng=np.random.default_rng(102)
        )
        se = np.sqrt(exact * (1.0 - exact) / n)
        assert np.all(np.abs(emp - exact) <= 4.0 * se + 1.0 / n)
        assert 0.5 * np.abs(emp - exact).sum() <= 0.02


class TestChainStationarity:
    def test_joint_distribution_matches_combined_model(self):
        model = random_model([3, 2], np.random.default_rng(103))
        exact = exact_conditional_pstar(model, None)
        config = GibbsConfig(num_sweeps=5, proposals_per_step=10, ptilde_k=10)
        chains = gibbs_sample_chains(model, 20_000, config, np.random.default_rng(104))
        emp = np.bincount(joint_codes(chains), minlength=32) / 20_000
        assert 0.5 * np.abs(emp - exact).sum() <= 0.05

    def test_shapes_and_binary_output(self):
        model = zero_model([4, 3, 2])
        config = GibbsConfig(num_sweeps=1, proposals_per_step=3, ptilde_k=2)
        chains = gibbs_sample_chains(model, 7, config, np.random.default_rng(122))
        assert [a.shape for a in chains] == [(7, 4), (7, 3), (7, 2)]
        for a in chains:
            assert set(np.unique(a)) <= {0.0, 1.0}

    def test_deterministic_given_seed(self):
        model = random_model([3, 2], np.random.default_rng(123))
        config = GibbsConfig(num_sweeps=2, proposals_per_step=4, ptilde_k=3)
        a = gibbs_sample_chains(model, 11, config, np.random.default_rng(124))
        b = gibbs_sample_chains(model, 11, config, np.random.default_rng(124))
        for x, y in zip(a, b):
            assert_array_equal(x, y)
        with pytest.raises(ValueError):
            gibbs_sample_chains(model, 0, config, np.random.default_rng(0))

    def test_single_state_paths(self):
        model = random_model([3, 2], np.random.default_rng(125))
        config = GibbsConfig(num_sweeps=2, proposals_per_step=4, ptilde_k=3)
        state = gibbs_sample(model, None, config, np.random.default_rng(126))
        assert state.x.shape == (3,)
        assert state.latents.layers[0].shape == (2,)
        again = gibbs_sample(model, state, config, np.random.default_rng(127))
        assert again.x.shape == (3,)
        new_x = gibbs_update_visible(model, state, config, np.random.default_rng(128))
        assert set(np.unique(new_x)) <= {0.0, 1.0}


class TestInpainting:
    def test_fully_observed_mask_returns_input(self):
        model = random_model([4, 3], np.random.default_rng(130))
        x = np.array([1.0, 0.0, 1.0, 1.0])
        config = GibbsConfig(num_sweeps=3, proposals_per_step=5, ptilde_k=4)
        out = inpaint(model, x, np.ones(4), config, np.random.default_rng(131))
        assert_array_equal(out, x)

    def test_observed_bits_never_change(self):
        model = random_model([4, 3], np.random.default_rng(132))
        x = np.array([1.0, 1.0, 0.0, 0.0])
        mask = np.array([1.0, 0.0, 0.0, 1.0])
        config = GibbsConfig(num_sweeps=4, proposals_per_step=6, ptilde_k=5)
        out = inpaint_chains(model, x, mask, 100, config, np.random.default_rng(133))
        assert out.shape == (100, 4)
        assert np.all(out[:, 0] == 1.0)
        assert np.all(out[:, 3] == 0.0)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_inputs_not_mutated(self):
        model = random_model([4, 3], np.random.default_rng(134))
        x = np.array([1.0, 1.0, 0.0, 0.0])
        mask = np.array([0.0, 1.0, 1.0, 0.0])
        config = GibbsConfig(num_sweeps=2, proposals_per_step=3, ptilde_k=3)
        inpaint_chains(model, x, mask, 20, config, np.random.default_rng(135))
        assert_array_equal(x, [1.0, 1.0, 0.0, 0.0])
        assert_array_equal(mask, [0.0, 1.0, 1.0, 0.0])

    def test_all_free_mask_allowed(self):
        model = random_model([3, 2], np.random.default_rng(136))
        config = GibbsConfig(num_sweeps=2, proposals_per_step=4, ptilde_k=3)
        out = inpaint(model, np.zeros(3), np.zeros(3), config, np.random.default_rng(137))
        assert out.shape == (3,)

    def test_strong_model_completes_the_pattern(self):
        # A hand-built model that maps h = (1,1) to the all-ones image and
        # back; observing two on-pixels should complete the other two.
        p1 = BeliefLayer(np.full((4, 2), 8.0), np.full(4, -8.0))
        q1 = BeliefLayer(np.full((2, 4), 6.0), np.full(2, -6.0))
        model = BihmModel((4, 2), FactorizedPrior(np.array([3.0, 3.0])), (p1,), (q1,))
        x = np.array([1.0, 1.0, 0.0, 0.0])
        mask = np.array([1.0, 1.0, 0.0, 0.0])
        config = GibbsConfig(num_sweeps=5, proposals_per_step=20, ptilde_k=10)
        out = inpaint_chains(model, x, mask, 200, config, np.random.default_rng(138))
        completed = np.all(out == 1.0, axis=1).mean()
        assert completed >= 0.95

    def test_completion_distribution_matches_exact_conditional(self):
        model = random_model([3, 2], np.random.default_rng(103))
        x_corrupt = np.array([1.0, 0.0, 0.0])
        mask = np.array([1.0, 0.0, 0.0])
        # conditional over (x2, x3, h); marginalize the latents
        cond = exact_conditional_pstar(model, [np.array([1, -1, -1]), None])
        cond_x = cond.reshape(4, 4).sum(axis=1)
        config = GibbsConfig(num_sweeps=5, proposals_per_step=60, ptilde_k=30)
        out = inpaint_chains(model, x_corrupt, mask, 4000, config, np.random.default_rng(139))
        codes = (out[:, 1:] @ np.array([2.0, 1.0])).astype(np.int64)
        emp = np.bincount(codes, minlength=4) / 4000
        assert 0.5 * np.abs(emp - cond_x).sum() <= 0.05

    def test_validation(self):
        model = zero_model([3, 2])
        config = GibbsConfig(num_sweeps=1, proposals_per_step=2, ptilde_k=2)
        with pytest.raises(ShapeError):
            inpaint(model, np.zeros(4), np.zeros(4), config, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            inpaint(model, np.zeros(3), np.zeros(2), config, np.random.default_rng(0))
        with pytest.raises(ValueError):
            inpaint(model, np.full(3, 0.5), np.zeros(3), config, np.random.default_rng(0))
        with pytest.raises(ValueError):
            inpaint(model, np.zeros(3), np.full(3, 2.0), config, np.random.default_rng(0))


class TestExpectedVisible:
    def test_matches_sigmoid_of_activation(self):
        model = random_model([4, 3], np.random.default_rng(140))
        h1 = np.array([1.0, 0.0, 1.0])
        expected = sigmoid(model.p_layers[0].activation(h1))
        assert_array_equal(expected_visible(model, h1), expected)

    def test_batch_shape(self):
        model = zero_model([4, 3])
        out = expected_visible(model, np.zeros((5, 3)))
        assert out.shape == (5, 4)
        assert_array_equal(out, np.full((5, 4), 0.5))
