import math

import numpy as np
import pytest

import rehabattn.tensor as T
from rehabattn import model as M
from rehabattn.model import (ModelConfig, attention_logits_j2j, attention_logits_j2s,
                             attentive_bias, forward, hyper_attention_layer,
                             init_weights, load_weights, positional_bias,
                             predict_proba, save_weights)
from rehabattn.skeleton import (HypergraphPartition, default_partition,
                                default_topology, membership_matrix, spd)
from rehabattn.tensor import Tensor

from conftest import finite_difference_check


def tiny_config(**kw):
    base = dict(num_layers=1, channels=4, num_heads=2, t_frames=6, use_batch_norm=False)
    base.update(kw)
    return ModelConfig(**base)


# -- joint-to-joint logits ----------------------------------------------

class TestJ2J:
    def test_orthonormal_identity(self):
        eye = np.eye(4)[None, None]                    # [1,1,4,4] one-hot rows
        out = attention_logits_j2j(Tensor(eye), Tensor(eye))
        assert np.allclose(out.data[0, 0], np.eye(4) / 2.0)   # 1/sqrt(d)=1/2

    def test_zero_query_zero_logits(self, rng):
        k = Tensor(rng.normal(size=(1, 2, 3, 5, 4)))
        q = Tensor(np.zeros((1, 2, 3, 5, 4)))
        assert np.array_equal(attention_logits_j2j(q, k).data, np.zeros((1, 2, 3, 5, 5)))

    def test_against_pair_loop_oracle(self, rng):
        q = rng.normal(size=(2, 2, 3, 5, 4))
        k = rng.normal(size=(2, 2, 3, 5, 4))
        out = attention_logits_j2j(Tensor(q), Tensor(k)).data
        for n in range(2):
            for h in range(2):
                for t in range(3):
                    for i in range(5):
                        for j in range(5):
                            dot = sum(q[n, h, t, i, l] * k[n, h, t, j, l] for l in range(4))
                            assert abs(out[n, h, t, i, j] - dot / 2.0) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(T.ShapeMismatchError):
            attention_logits_j2j(Tensor(np.zeros((1, 1, 2, 5, 4))),
                                 Tensor(np.zeros((1, 1, 2, 4, 4))))


# -- joint-to-subgraph logits ------------------------------------------

class TestJ2S:
    def test_same_group_keys_get_identical_logits(self, rng):
        m = membership_matrix(default_partition())
        q = Tensor(rng.normal(size=(1, 2, 3, 25, 4)))
        k = Tensor(rng.normal(size=(1, 2, 3, 25, 4)))
        out = attention_logits_j2s(q, k, m).data
        p = default_partition()
        for group in p.groups:
            members = sorted(group)
            ref = out[..., :, members[0]]
            for j in members[1:]:
                assert np.allclose(out[..., :, j], ref, atol=1e-12)

    def test_single_group_partition_constant_per_query(self, rng):
        part = HypergraphPartition(groups=(frozenset(range(25)),), group_names=("all",))
        m = membership_matrix(part)
        q = Tensor(rng.normal(size=(1, 1, 2, 25, 4)))
        k = Tensor(rng.normal(size=(1, 1, 2, 25, 4)))
        out = attention_logits_j2s(q, k, m).data
        assert np.allclose(out, out[..., :1], atol=1e-12)

    def test_against_pool_then_score_oracle(self, rng):
        p = default_partition()
        m = membership_matrix(p)
        q = rng.normal(size=(1, 2, 2, 25, 4))
        k = rng.normal(size=(1, 2, 2, 25, 4))
        out = attention_logits_j2s(Tensor(q), Tensor(k), m).data
        group_of = p.group_of()
        for n in range(1):
            for h in range(2):
                for t in range(2):
                    pooled = np.stack([k[n, h, t][sorted(g)].mean(axis=0) for g in p.groups])
                    for i in range(25):
                        for j in range(25):
                            expected = q[n, h, t, i] @ pooled[group_of[j]] / 2.0
                            assert abs(out[n, h, t, i, j] - expected) < 1e-12


# -- positional bias -----------------------------------------------------

class TestPositionalBias:
    def test_zero_table(self):
        d = spd(default_topology())
        out = positional_bias(d, Tensor(np.zeros((3, 25))))
        assert np.array_equal(out.data, np.zeros((3, 25, 25)))

    def test_identity_on_index_recovers_spd(self):
        d = spd(default_topology())
        table = np.tile(np.arange(25.0), (2, 1))
        out = positional_bias(d, Tensor(table))
        assert np.array_equal(out.data[0], d.astype(float))
        assert np.array_equal(out.data[1], d.astype(float))

    def test_symmetric_on_tree(self, rng):
        d = spd(default_topology())
        out = positional_bias(d, Tensor(rng.normal(size=(2, 25)))).data
        assert np.array_equal(out, np.swapaxes(out, -1, -2))

    def test_index_overflow(self):
        with pytest.raises(IndexError, match="exceed"):
            positional_bias(np.full((3, 3), 9), Tensor(np.zeros((1, 5))))

    def test_gradient_is_count_weighted_and_matches_fd(self, rng):
        d = spd(default_topology())
        table = T.parameter(rng.normal(size=(2, 25)))
        upstream = rng.normal(size=(2, 25, 25))
        finite_difference_check(
            [table],
            lambda: T.sum_reduce(T.mul(positional_bias(d, table), Tensor(upstream))))
        # analytic form: per-bucket sum of upstream gradients
        expected = np.zeros((2, 25))
        for h in range(2):
            for i in range(25):
                for j in range(25):
                    expected[h, d[i, j]] += upstream[h, i, j]
        assert np.allclose(table.grad, expected, atol=1e-12)


# -- attentive bias -------------------------------------------------------

class TestAttentiveBias:
    def test_query_independent_for_every_head_and_key(self, rng):
        m = membership_matrix(default_partition())
        table = Tensor(rng.normal(size=(3, 6)))
        out = attentive_bias(m, table).data          # [H,1,V]
        assert out.shape == (3, 1, 25)
        full = np.broadcast_to(out, (3, 25, 25))
        for h in range(3):
            for j in range(25):
                assert np.all(full[h, :, j] == full[h, 0, j])

    def test_zero_table(self):
        m = membership_matrix(default_partition())
        out = attentive_bias(m, Tensor(np.zeros((2, 6))))
        assert np.array_equal(out.data, np.zeros((2, 1, 25)))

    def test_against_direct_lookup_oracle(self, rng):
        p = default_partition()
        m = membership_matrix(p)
        table = rng.normal(size=(2, 6))
        out = attentive_bias(m, Tensor(table)).data
        group_of = p.group_of()
        for h in range(2):
            for j in range(25):
                assert out[h, 0, j] == pytest.approx(table[h, group_of[j]], abs=1e-15)


# -- layer ----------------------------------------------------------------

def straight_line_layer_oracle(x, weights, layer):
    """Independent numpy re-implementation of one attention+temporal block."""
    cfg = weights.config
    p = {k: v.data for k, v in weights.params.items()}
    pre = f"layer{layer}."
    n, c, t, v = x.shape
    heads, d = cfg.num_heads, cfg.head_dim
    m = weights.membership.data
    group_of = m.argmax(axis=1)

    def proj(name):
        w = p[pre + name][:, :, 0, 0]
        b = p[pre + name + "_b"]
        out = np.einsum("nctv,oc->notv", x, w) + b[None, :, None, None]
        return out.reshape(n, heads, d, t, v).transpose(0, 1, 3, 4, 2)

    q, k, val = proj("wq"), proj("wk"), proj("wv")
    logits = np.einsum("nhtid,nhtjd->nhtij", q, k) / math.sqrt(d)
    if cfg.use_joint2subgraph:
        ks = proj("wks")
        pooled = np.stack([np.stack([ks[:, :, :, sorted(g)].mean(axis=3)
                                     for g in weights_partition_groups(weights)], axis=3)])[0]
        logits_vg = np.einsum("nhtid,nhtgd->nhtig", q, pooled) / math.sqrt(d)
        logits = logits + logits_vg[..., group_of]
    if cfg.use_pos_embedding:
        tab = p[pre + "pos_table"]
        logits = logits + tab[:, weights.spd_matrix][None, :, None]
    if cfg.use_attentive_bias:
        tab = p[pre + "att_table"]
        logits = logits + tab[:, group_of][None, :, None, None, :]
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    attn = e / e.sum(axis=-1, keepdims=True)
    out = np.einsum("nhtij,nhtjd->nhtid", attn, val)
    out = out.transpose(0, 1, 4, 2, 3).reshape(n, c, t, v)
    wo = p[pre + "wo"][:, :, 0, 0]
    out = np.einsum("nctv,oc->notv", out, wo) + p[pre + "wo_b"][None, :, None, None]
    out = np.maximum(out + x, 0.0)

    # temporal block
    cb = c // 4
    kt = cfg.temporal_kernel

    def pointwise(j, src):
        w = p[pre + f"tcn.b{j}.wp"][:, :, 0, 0]
        return np.einsum("nctv,oc->notv", src, w) + \
            p[pre + f"tcn.b{j}.wp_b"][None, :, None, None]

    def tconv(src, w, b, dil):
        pad = dil * (kt - 1) // 2
        xp = np.pad(src, ((0, 0), (0, 0), (pad, pad), (0, 0)))
        res = np.zeros_like(src)
        for u in range(kt):
            res += np.einsum("nctv,oc->notv", xp[:, :, u * dil: u * dil + t, :], w[:, :, u, 0])
        return res + b[None, :, None, None]

    b0 = tconv(np.maximum(pointwise(0, out), 0.0), p[pre + "tcn.b0.wt"],
               p[pre + "tcn.b0.wt_b"], 1)
    b1 = tconv(np.maximum(pointwise(1, out), 0.0), p[pre + "tcn.b1.wt"],
               p[pre + "tcn.b1.wt_b"], 2)
    src2 = np.maximum(pointwise(2, out), 0.0)
    xp = np.pad(src2, ((0, 0), (0, 0), (1, 1), (0, 0)), constant_values=-np.inf)
    b2 = np.stack([xp[:, :, i: i + 3, :].max(axis=2) for i in range(t)], axis=2)
    b3 = pointwise(3, out)
    y = np.concatenate([b0, b1, b2, b3], axis=1)
    return np.maximum(y + out, 0.0), attn


def weights_partition_groups(weights):
    m = weights.membership.data
    groups = []
    for g in range(m.shape[1]):
        groups.append(frozenset(np.where(m[:, g] == 1.0)[0].tolist()))
    return groups


class TestLayer:
    def test_attention_rows_sum_to_one(self, rng):
        cfg = tiny_config()
        w = init_weights(cfg, seed=3)
        x = Tensor(rng.normal(size=(2, 4, 6, 25)))
        _, attn = hyper_attention_layer(x, w, 0)
        assert np.abs(attn.sum(axis=-1) - 1.0).max() < 1e-9
        assert attn.min() >= 0.0

    def test_matches_straight_line_oracle(self, rng):
        cfg = tiny_config()
        w = init_weights(cfg, seed=5)
        x = rng.normal(size=(2, 4, 6, 25))
        out, attn = hyper_attention_layer(Tensor(x), w, 0)
        oracle_out, oracle_attn = straight_line_layer_oracle(x, w, 0)
        assert np.abs(attn - oracle_attn).max() < 1e-12
        assert np.abs(out.data - oracle_out).max() < 1e-12

    def test_two_joint_toy_vs_oracle(self, rng):
        from rehabattn.skeleton import SkeletonTopology
        topo = SkeletonTopology(joint_names=("a", "b"), edges=((0, 1),))
        part = HypergraphPartition(groups=(frozenset({0}), frozenset({1})),
                                   group_names=("ga", "gb"))
        cfg = ModelConfig(num_layers=1, channels=4, num_heads=2, t_frames=3,
                          num_joints=2, num_groups=2, use_batch_norm=False)
        w = init_weights(cfg, seed=1, topology=topo, partition=part)
        x = rng.normal(size=(1, 4, 3, 2))
        out, attn = hyper_attention_layer(Tensor(x), w, 0)
        oracle_out, oracle_attn = straight_line_layer_oracle(x, w, 0)
        assert np.abs(attn - oracle_attn).max() < 1e-12
        assert np.abs(out.data - oracle_out).max() < 1e-12

    def test_single_joint_degenerate_attention_is_one(self, rng):
        from rehabattn.skeleton import SkeletonTopology
        topo = SkeletonTopology(joint_names=("solo",), edges=())
        part = HypergraphPartition(groups=(frozenset({0}),), group_names=("g",))
        cfg = ModelConfig(num_layers=1, channels=4, num_heads=2, t_frames=4,
                          num_joints=1, num_groups=1, use_batch_norm=False)
        w = init_weights(cfg, seed=2, topology=topo, partition=part)
        x = rng.normal(size=(1, 4, 4, 1))
        out, attn = hyper_attention_layer(Tensor(x), w, 0)
        assert np.allclose(attn, 1.0)
        oracle_out, _ = straight_line_layer_oracle(x, w, 0)
        assert np.abs(out.data - oracle_out).max() < 1e-12


# -- full model ------------------------------------------------------------

class TestForward:
    def test_probabilities_sum_to_one(self, rng):
        cfg = tiny_config(num_layers=2, use_batch_norm=True)
        w = init_weights(cfg, seed=0)
        x = rng.normal(size=(3, 3, 6, 25))
        probs = predict_proba(x, w)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9

    def test_batch_permutation_equivariance(self, rng):
        cfg = tiny_config(use_batch_norm=True)
        w = init_weights(cfg, seed=0)
        x = rng.normal(size=(4, 3, 6, 25))
        perm = np.array([2, 0, 3, 1])
        a, _ = forward(x, w, training=False)
        b, _ = forward(x[perm], w, training=False)
        assert np.abs(a.data[perm] - b.data).max() < 1e-9

    def test_batch_invariance_in_inference(self, rng):
        cfg = tiny_config(num_layers=2, use_batch_norm=True)
        w = init_weights(cfg, seed=4)
        a = rng.normal(size=(2, 3, 6, 25))
        b = rng.normal(size=(3, 3, 6, 25))
        joint, _ = forward(np.concatenate([a, b]), w, training=False)
        fa, _ = forward(a, w, training=False)
        fb, _ = forward(b, w, training=False)
        assert np.abs(joint.data - np.concatenate([fa.data, fb.data])).max() < 1e-9

    def test_attention_stack_shape(self, rng):
        cfg = tiny_config(num_layers=3)
        w = init_weights(cfg, seed=0)
        _, stack = forward(rng.normal(size=(2, 3, 6, 25)), w)
        assert len(stack) == 3
        for a in stack:
            assert a.shape == (2, 2, 6, 25, 25)
            assert np.abs(a.sum(axis=-1) - 1.0).max() < 1e-9

    def test_tiny_output_vs_primitive_composition(self, rng):
        cfg = tiny_config(num_layers=2)
        w = init_weights(cfg, seed=7)
        x = rng.normal(size=(2, 3, 6, 25))
        logits, _ = forward(x, w)
        # compose the oracle: embed -> layers -> pool -> head
        we = w.params["embed.w"].data[:, :, 0, 0]
        h = np.einsum("nctv,oc->notv", x, we) + \
            w.params["embed.w_b"].data[None, :, None, None]
        for i in range(2):
            h, _ = straight_line_layer_oracle(h, w, i)
        pooled = h.mean(axis=(2, 3))
        expected = pooled @ w.params["head.w"].data + w.params["head.b"].data
        assert np.abs(logits.data - expected).max() < 1e-10

    def test_config_mismatch_raises(self, rng):
        w = init_weights(tiny_config(), seed=0)
        with pytest.raises(T.ShapeMismatchError):
            forward(rng.normal(size=(1, 5, 6, 25)), w)

    def test_temporal_stride_downsamples(self, rng):
        cfg = tiny_config(num_layers=2, temporal_strides=(2, 1), t_frames=8)
        w = init_weights(cfg, seed=0)
        logits, stack = forward(rng.normal(size=(1, 3, 8, 25)), w)
        assert logits.shape == (1, 4)
        assert stack[0].shape[2] == 8 and stack[1].shape[2] == 4


class TestAblation:
    def test_flag_removal_changes_param_count_analytically(self):
        base = init_weights(tiny_config(num_layers=2), seed=0).num_parameters()
        cfg = tiny_config(num_layers=2)
        no_pos = init_weights(tiny_config(num_layers=2, use_pos_embedding=False),
                              seed=0).num_parameters()
        assert base - no_pos == 2 * cfg.num_heads * (cfg.spd_max + 1)
        no_att = init_weights(tiny_config(num_layers=2, use_attentive_bias=False),
                              seed=0).num_parameters()
        assert base - no_att == 2 * cfg.num_heads * cfg.num_groups
        no_j2s = init_weights(tiny_config(num_layers=2, use_joint2subgraph=False),
                              seed=0).num_parameters()
        assert base - no_j2s == 2 * (cfg.channels * cfg.channels + cfg.channels)

    def test_disabled_parts_absent_from_logits(self, rng):
        cfg = tiny_config(use_pos_embedding=False, use_attentive_bias=False,
                          use_joint2subgraph=False)
        w = init_weights(cfg, seed=1)
        assert not any("pos_table" in k or "att_table" in k or "wks" in k
                       for k in w.params)
        x = rng.normal(size=(1, 3, 6, 25))
        logits, _ = forward(x, w)
        assert np.isfinite(logits.data).all()


class TestEndToEndGradient:
    def test_full_model_fd_check(self, rng):
        cfg = tiny_config(num_layers=1, use_batch_norm=True, t_frames=4)
        w = init_weights(cfg, seed=9)
        # jitter away from zero-initialized biases: exact zeros park ReLU
        # pre-activations on the kink, where central differences are invalid
        for p in w.parameters():
            p.data += rng.uniform(-0.05, 0.05, p.data.shape)
        x = rng.normal(size=(2, 3, 4, 25))
        labels = np.array([1, 3])
        from rehabattn.training import cross_entropy

        def build():
            logits, _ = forward(x, w, training=True)
            return cross_entropy(logits, labels)

        finite_difference_check(w.parameters(), build, tol=1e-3)


class TestCheckpoint:
    def test_round_trip_byte_identical(self, tmp_path, rng):
        w = init_weights(tiny_config(num_layers=2, use_batch_norm=True), seed=6)
        # dirty the running stats so they are exercised too
        w.running["layer0.bn1.mean"] += rng.normal(size=4)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_weights(w, p1)
        save_weights(load_weights(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_weights_reproduce_forward(self, tmp_path, rng):
        w = init_weights(tiny_config(num_layers=2, use_batch_norm=True), seed=6)
        x = rng.normal(size=(2, 3, 6, 25))
        ref, _ = forward(x, w)
        save_weights(w, tmp_path / "w.json")
        again, _ = forward(x, load_weights(tmp_path / "w.json"))
        assert np.array_equal(ref.data, again.data)

    def test_version_check(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"version": 99}\n')
        with pytest.raises(ValueError, match="version"):
            load_weights(tmp_path / "bad.json")


class TestConfigValidation:
    def test_heads_divide_channels(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(channels=10, num_heads=3)

    def test_full_scale_config(self):
        cfg = M.full_scale_config()
        assert cfg.num_layers == 10
        w = init_weights(cfg, seed=0)
        assert w.num_parameters() > 100000
