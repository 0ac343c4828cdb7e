"""Branch fusion: block scoring against a full-sort oracle, hard-selection
semantics, and the spatial alignment helper."""

import numpy as np
import pytest

from radixnet.errors import ConfigurationError, DimensionError
from radixnet.fusion import (BranchScores, FusionConfig, align_spatial,
                             block_scores, fuse, init_fusion_params,
                             top_half_blocks)
from radixnet.tensor import Tensor, global_avg_pool, concat_channels


def sort_oracle_kept(scores):
    """Keep the top half by (score desc, index asc), exhaustive sort."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[:len(scores) // 2]))


class TestConfig:
    def test_published_geometry(self):
        cfg = FusionConfig(4096, 64)
        assert cfg.block_channels == 64
        assert cfg.mid_channels == 512
        assert cfg.kept_channels == 2048
        params = init_fusion_params(cfg, seed=0)
        assert params.gate_w1.shape == (512, 4096)
        assert params.gate_w2.shape == (64, 512)

    @pytest.mark.parametrize("total,blocks", [(100, 3), (64, 7), (64, 0)])
    def test_invalid(self, total, blocks):
        with pytest.raises(ConfigurationError):
            FusionConfig(total, blocks)


class TestScores:
    def test_constant_scores_keep_first_half(self):
        cfg = FusionConfig(16, 4)
        params = init_fusion_params(cfg, seed=1)
        params.gate_w1.data = np.zeros_like(params.gate_w1.data)
        params.gate_w2.data = np.zeros_like(params.gate_w2.data)
        result = block_scores(np.ones(16), cfg, params)
        assert np.all(result.scores == 0.5)
        assert result.kept == (0, 1)

    def test_top_half_by_definition(self):
        assert top_half_blocks([0.9, 0.1, 0.8, 0.2]) == (0, 2)

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.choice([4, 8, 16, 64]))
            scores = rng.uniform(size=n)
            if rng.random() < 0.3:  # exercise ties
                scores = np.round(scores, 1)
            assert top_half_blocks(scores) == sort_oracle_kept(scores)

    def test_gate_matches_formula(self):
        cfg = FusionConfig(16, 4)
        params = init_fusion_params(cfg, seed=3)
        rng = np.random.default_rng(4)
        u = rng.normal(size=16)
        result = block_scores(u, cfg, params)
        hidden = np.maximum(params.gate_w1.data @ u, 0.0)
        expected = 1.0 / (1.0 + np.exp(-(params.gate_w2.data @ hidden)))
        assert np.abs(result.scores - expected).max() <= 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        transforms = [lambda s: 2 * s + 1, np.exp,
                      lambda s: np.tanh(s) * 3, lambda s: s ** 3 + 5 * s]
        for _ in range(100):
            scores = rng.normal(size=8)
            base = top_half_blocks(scores)
            for f in transforms:
                assert top_half_blocks(f(scores)) == base

    def test_kept_must_dominate(self):
        with pytest.raises(ConfigurationError):
            BranchScores(np.array([0.9, 0.1, 0.8, 0.2]), (1, 3))


class TestFuse:
    def _setup(self, seed=6, hw=2, width=8):
        cfg = FusionConfig(2 * width, 4)
        params = init_fusion_params(cfg, seed=seed)
        rng = np.random.default_rng(seed + 1)
        local = Tensor(rng.normal(size=(width, hw, hw)))
        glob = Tensor(rng.normal(size=(width, hw, hw)))
        return cfg, params, local, glob

    def test_output_channel_count(self):
        cfg, params, local, glob = self._setup()
        out = fuse(local, glob, cfg, params)
        assert out.shape == (cfg.kept_channels, 2, 2)

    def test_published_widths_keep_half(self):
        cfg = FusionConfig(4096, 64)
        params = init_fusion_params(cfg, seed=7)
        rng = np.random.default_rng(8)
        local = Tensor(rng.normal(size=(2048, 1, 1)))
        glob = Tensor(rng.normal(size=(2048, 1, 1)))
        u = global_avg_pool(concat_channels([local, glob]))
        scores = block_scores(u, cfg, params)
        assert len(scores.kept) == 32
        out = fuse(local, glob, cfg, params, scores=scores)
        assert out.shape == (2048, 1, 1)

    def test_identity_conv_passthrough(self):
        cfg, params, local, glob = self._setup()
        params.fuse_w.data = np.eye(cfg.kept_channels)
        forced = BranchScores(np.array([0.9, 0.8, 0.2, 0.1]), (0, 1))
        out = fuse(local, glob, cfg, params, scores=forced)
        stacked = np.concatenate([local.data, glob.data])
        assert np.array_equal(out.data, stacked[:cfg.kept_channels])

    def test_discarded_block_cannot_influence_output(self):
        cfg, params, local, glob = self._setup(seed=9)
        u = global_avg_pool(concat_channels([local, glob]))
        scores = block_scores(u, cfg, params)
        dropped = sorted(set(range(cfg.blocks)) - set(scores.kept))[0]
        base = fuse(local, glob, cfg, params, scores=scores).data
        bc = cfg.block_channels
        lo = dropped * bc
        stacked = np.concatenate([local.data, glob.data])
        stacked[lo:lo + bc] += np.random.default_rng(10).normal(
            size=(bc, 2, 2))
        local2 = Tensor(stacked[:cfg.total_channels // 2])
        glob2 = Tensor(stacked[cfg.total_channels // 2:])
        out = fuse(local2, glob2, cfg, params, scores=scores).data
        assert np.array_equal(base, out)

    def test_spatial_mismatch_rejected(self):
        cfg, params, local, _ = self._setup()
        with pytest.raises(DimensionError):
            fuse(local, Tensor(np.zeros((8, 4, 4))), cfg, params)

    def test_channel_sum_must_match(self):
        cfg, params, local, glob = self._setup()
        with pytest.raises(DimensionError):
            fuse(local, Tensor(np.zeros((4, 2, 2))), cfg, params)


class TestAlign:
    def test_equal_dims_unchanged(self):
        a = Tensor(np.ones((2, 4, 4)))
        b = Tensor(np.zeros((2, 4, 4)))
        a2, b2 = align_spatial(a, b)
        assert a2 is a and b2 is b

    def test_larger_pooled_down(self):
        rng = np.random.default_rng(11)
        a = Tensor(rng.normal(size=(2, 8, 8)))
        b = Tensor(rng.normal(size=(2, 4, 4)))
        a2, b2 = align_spatial(a, b)
        assert a2.shape == (2, 4, 4) and b2 is b
        pooled = a.data.reshape(2, 4, 2, 4, 2).mean(axis=(2, 4))
        assert np.abs(a2.data - pooled).max() <= 1e-15

    def test_order_independent(self):
        rng = np.random.default_rng(12)
        big = Tensor(rng.normal(size=(2, 8, 8)))
        small = Tensor(rng.normal(size=(2, 2, 2)))
        a2, b2 = align_spatial(small, big)
        assert a2 is small and b2.shape == (2, 2, 2)

    def test_non_integral_factor_rejected(self):
        with pytest.raises(DimensionError):
            align_spatial(Tensor(np.zeros((1, 6, 6))),
                          Tensor(np.zeros((1, 4, 4))))

    def test_non_power_of_two_rejected(self):
        with pytest.raises(DimensionError):
            align_spatial(Tensor(np.zeros((1, 12, 12))),
                          Tensor(np.zeros((1, 4, 4))))
