import numpy as np
import pytest

from pointattn import AttentionConfig, LocalAttention, knn_search
from pointattn.attention import NORMALIZE, OPERATORS, POS_MODES
from pointattn.core import CHECK_DTYPE
from pointattn.geometry import NeighborTable

from oracles import mlp_pool_ref, mlp_ref, scalar_attention_ref, vector_attention_ref


def make_layer(operator="vector", pos_mode="relative", normalize="softmax",
               n=6, k=3, d=4, seed=0, scaled=False):
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0, 2, (n, 3))
    x = rng.standard_normal((n, d))
    table = knn_search(positions, positions, k)
    cfg = AttentionConfig(d=d, k=k, operator=operator, pos_mode=pos_mode,
                          normalize=normalize, scaled=scaled)
    layer = LocalAttention(cfg, rng, dtype=CHECK_DTYPE)
    return layer, x, positions, table


class TestVectorAttention:
    def test_self_only_neighborhood(self):
        # k=1 with softmax: the single weight is exactly 1 per channel, so
        # y_i = alpha(x_i) + theta(0).
        layer, x, positions, table = make_layer(k=1)
        y = layer.forward(x, positions, table)
        alpha = x @ layer.alpha.W.value + layer.alpha.b.value
        theta0 = layer.theta.forward(np.zeros((1, 3)))
        np.testing.assert_allclose(y, alpha + theta0, atol=1e-12)

    def test_neighbor_row_permutation_bit_identical(self):
        layer, x, positions, table = make_layer(n=8, k=4)
        y = layer.forward(x, positions, table)
        rng = np.random.default_rng(3)
        perm = np.argsort(rng.random(table.indices.shape), axis=1)
        shuffled = NeighborTable(
            indices=np.take_along_axis(table.indices, perm, axis=1),
            sq_dists=np.take_along_axis(table.sq_dists, perm, axis=1),
        )
        y2 = layer.forward(x, positions, shuffled)
        np.testing.assert_array_equal(y, y2)

    @pytest.mark.parametrize("pos_mode", POS_MODES)
    @pytest.mark.parametrize("normalize", NORMALIZE)
    def test_matches_loop_oracle(self, pos_mode, normalize):
        layer, x, positions, table = make_layer(
            pos_mode=pos_mode, normalize=normalize, n=4, k=2, d=3, seed=7
        )
        y = layer.forward(x, positions, table)
        ref = vector_attention_ref(x, positions, table.indices, layer)
        np.testing.assert_allclose(y, ref, atol=1e-10)

    def test_weights_sum_to_one(self):
        layer, x, positions, table = make_layer(n=10, k=5, seed=2)
        layer.forward(x, positions, table)
        w = layer.rho._probs
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("pos_mode", ["relative", "relative_attn_only", "relative_feat_only"])
    def test_translation_invariance_relative_modes(self, pos_mode):
        layer, x, positions, table = make_layer(pos_mode=pos_mode, seed=5)
        y = layer.forward(x, positions, table)
        shift = np.array([4.0, -2.0, 8.0])
        y2 = layer.forward(x, positions + shift, knn_search(positions + shift, positions + shift, 3))
        np.testing.assert_allclose(y, y2, atol=1e-6)

    def test_absolute_mode_not_translation_invariant(self):
        layer, x, positions, table = make_layer(pos_mode="absolute", seed=5)
        y = layer.forward(x, positions, table)
        y2 = layer.forward(x, positions + 3.0, table)
        assert np.abs(y - y2).max() > 1e-4

    def test_point_permutation_equivariance(self):
        layer, x, positions, table = make_layer(n=12, k=4, seed=9)
        y = layer.forward(x, positions, table)
        perm = np.random.default_rng(10).permutation(12)
        table_p = knn_search(positions[perm], positions[perm], 4)
        y2 = layer.forward(x[perm], positions[perm], table_p)
        np.testing.assert_allclose(y2, y[perm], atol=1e-6)

    def test_k_mismatch_rejected(self):
        layer, x, positions, table = make_layer(n=6, k=3)
        with pytest.raises(ValueError, match="point count"):
            layer.forward(x[:4], positions[:4], table)


class TestScalarAttention:
    def test_identical_neighbors_give_uniform_weights(self):
        # Equal logits need equal features and no per-neighbor position term.
        layer, x, positions, table = make_layer(operator="scalar", pos_mode="none", n=5, k=4, seed=1)
        x[:] = x[0]  # every neighbor feature identical
        layer.forward(x, positions, table)
        np.testing.assert_allclose(layer.rho._probs, 0.25, atol=1e-9)

    def test_self_only_neighborhood(self):
        layer, x, positions, table = make_layer(operator="scalar", k=1, pos_mode="none")
        y = layer.forward(x, positions, table)
        alpha = x @ layer.alpha.W.value + layer.alpha.b.value
        np.testing.assert_allclose(y, alpha, atol=1e-12)

    @pytest.mark.parametrize("pos_mode", POS_MODES)
    @pytest.mark.parametrize("normalize", NORMALIZE)
    def test_matches_loop_oracle(self, pos_mode, normalize):
        layer, x, positions, table = make_layer(
            operator="scalar", pos_mode=pos_mode, normalize=normalize, n=5, k=3, d=4, seed=11
        )
        y = layer.forward(x, positions, table)
        ref = scalar_attention_ref(x, positions, table.indices, layer)
        np.testing.assert_allclose(y, ref, atol=1e-10)

    def test_scaled_flag_divides_logits(self):
        plain, x, positions, table = make_layer(operator="scalar", n=5, k=3, seed=13)
        scaled, *_ = make_layer(operator="scalar", n=5, k=3, seed=13, scaled=True)
        ref = scalar_attention_ref(x, positions, table.indices, scaled)
        np.testing.assert_allclose(scaled.forward(x, positions, table), ref, atol=1e-10)
        assert np.abs(plain.forward(x, positions, table) - ref).max() > 1e-8


class TestBaselines:
    def test_mlp_is_pointwise(self):
        layer, x, positions, table = make_layer(operator="mlp", n=6, k=3, seed=15)
        y = layer.forward(x, positions, table)
        x2 = x.copy()
        x2[3] += 10.0  # perturb one point; other outputs must not move
        y2 = layer.forward(x2, positions, table)
        untouched = [i for i in range(6) if i != 3]
        np.testing.assert_array_equal(y[untouched], y2[untouched])
        assert np.abs(y[3] - y2[3]).max() > 0

    def test_mlp_matches_reference(self):
        layer, x, positions, table = make_layer(operator="mlp", seed=16)
        np.testing.assert_allclose(
            layer.forward(x, positions, table), mlp_ref(x, layer.gamma), atol=1e-10
        )

    def test_mlp_pool_with_self_only_reduces_to_mlp(self):
        pool_layer, x, positions, _ = make_layer(operator="mlp_pool", k=1, seed=17)
        table = knn_search(positions, positions, 1)
        y = pool_layer.forward(x, positions, table)
        np.testing.assert_allclose(y, mlp_ref(x, pool_layer.gamma), atol=1e-10)

    def test_mlp_pool_matches_loop_oracle(self):
        layer, x, positions, table = make_layer(operator="mlp_pool", n=7, k=3, seed=18)
        y = layer.forward(x, positions, table)
        np.testing.assert_allclose(y, mlp_pool_ref(x, table.indices, layer), atol=1e-10)


class TestConfigValidation:
    def test_rejects_unknown_operator(self):
        with pytest.raises(ValueError, match="operator"):
            AttentionConfig(d=4, k=2, operator="conv")

    def test_rejects_unknown_pos_mode(self):
        with pytest.raises(ValueError, match="pos_mode"):
            AttentionConfig(d=4, k=2, pos_mode="fourier")

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            AttentionConfig(d=0, k=2)

    def test_enumeration_counts(self):
        assert len(OPERATORS) * len(POS_MODES) * len(NORMALIZE) == 40
