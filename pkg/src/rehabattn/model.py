"""Per-exercise error classifier.

Stacked layers of hyper self-attention (four additive logit terms:
joint-to-joint, joint-to-subgraph, hop-distance positional bias,
query-independent subgraph bias) followed by multi-scale temporal
convolution, then global pooling and a linear head.

Attention is spatial: each frame attends over the 25 joints; temporal
mixing happens in the convolution block.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .skeleton import (NUM_JOINTS, default_partition, default_topology,
                       membership_matrix, spd)
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 3
    channels: int = 16
    num_heads: int = 2
    t_frames: int = 40
    num_joints: int = NUM_JOINTS
    in_channels: int = 3
    num_classes: int = 4
    spd_max: int = 24
    num_groups: int = 6
    use_joint2subgraph: bool = True
    use_pos_embedding: bool = True
    use_attentive_bias: bool = True
    use_batch_norm: bool = True
    temporal_kernel: int = 5
    temporal_strides: tuple = ()

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.channels % self.num_heads:
            raise ValueError(f"channels {self.channels} not divisible by heads {self.num_heads}")
        if self.channels % 4:
            raise ValueError(f"channels {self.channels} not divisible by 4 (temporal branches)")
        strides = self.temporal_strides or (1,) * self.num_layers
        if len(strides) != self.num_layers:
            raise ValueError("temporal_strides length must equal num_layers")
        object.__setattr__(self, "temporal_strides", tuple(strides))

    @property
    def head_dim(self) -> int:
        return self.channels // self.num_heads


def desk_config(**overrides) -> ModelConfig:
    """Small configuration for laptop-scale experiments."""
    return ModelConfig(**overrides)


def full_scale_config(**overrides) -> ModelConfig:
    kw = dict(num_layers=10, channels=64, num_heads=4, t_frames=100)
    kw.update(overrides)
    return ModelConfig(**kw)


@dataclass
class ModelWeights:
    config: ModelConfig
    params: dict                 # name -> Tensor (requires_grad)
    running: dict                # name -> np.ndarray (batch-norm statistics)
    spd_matrix: np.ndarray
    membership: Tensor           # [V, G] one-hot, constant

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def named_parameters(self):
        return [(k, self.params[k]) for k in sorted(self.params)]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def init_weights(config: ModelConfig, seed: int = 0,
                 topology=None, partition=None) -> ModelWeights:
    """Fan-in scaled uniform initialization, deterministic in seed."""
    rng = np.random.default_rng(seed)
    topology = topology or default_topology()
    partition = partition or default_partition()
    d = spd(topology)
    if d.max() > config.spd_max:
        raise ValueError(f"topology SPD {d.max()} exceeds spd_max {config.spd_max}")
    m = membership_matrix(partition, config.num_joints)
    if m.shape[1] != config.num_groups:
        raise ValueError(f"partition has {m.shape[1]} groups, config expects {config.num_groups}")

    params = {}
    running = {}

    def conv_param(name, cout, cin, kh, kw):
        bound = 1.0 / math.sqrt(cin * kh * kw)
        params[name] = T.parameter(rng.uniform(-bound, bound, (cout, cin, kh, kw)), name)
        params[name + "_b"] = T.parameter(np.zeros(cout), name + "_b")

    def bn_param(name, c):
        params[name + ".gamma"] = T.parameter(np.ones(c), name + ".gamma")
        params[name + ".beta"] = T.parameter(np.zeros(c), name + ".beta")
        running[name + ".mean"] = np.zeros(c)
        running[name + ".var"] = np.ones(c)

    c = config.channels
    conv_param("embed.w", c, config.in_channels, 1, 1)
    for i in range(config.num_layers):
        pre = f"layer{i}."
        conv_param(pre + "wq", c, c, 1, 1)
        conv_param(pre + "wk", c, c, 1, 1)
        conv_param(pre + "wv", c, c, 1, 1)
        if config.use_joint2subgraph:
            conv_param(pre + "wks", c, c, 1, 1)
        if config.use_pos_embedding:
            params[pre + "pos_table"] = T.parameter(
                rng.uniform(-0.01, 0.01, (config.num_heads, config.spd_max + 1)),
                pre + "pos_table")
        if config.use_attentive_bias:
            params[pre + "att_table"] = T.parameter(
                rng.uniform(-0.01, 0.01, (config.num_heads, config.num_groups)),
                pre + "att_table")
        conv_param(pre + "wo", c, c, 1, 1)
        if config.use_batch_norm:
            bn_param(pre + "bn1", c)
            bn_param(pre + "bn2", c)
        cb = c // 4
        kt = config.temporal_kernel
        for j in range(4):
            conv_param(pre + f"tcn.b{j}.wp", cb, c, 1, 1)
        conv_param(pre + "tcn.b0.wt", cb, cb, kt, 1)
        conv_param(pre + "tcn.b1.wt", cb, cb, kt, 1)

    bound = 1.0 / math.sqrt(c)
    params["head.w"] = T.parameter(rng.uniform(-bound, bound, (c, config.num_classes)), "head.w")
    params["head.b"] = T.parameter(np.zeros(config.num_classes), "head.b")

    return ModelWeights(config=config, params=params, running=running,
                        spd_matrix=d, membership=m)


# -- attention building blocks -----------------------------------------

def _conv1x1(x, w, b):
    out = T.conv2d(x, w)
    return out + T.reshape(b, (1, b.shape[0], 1, 1))


def _to_heads(x, heads):
    """[N,C,T,V] -> [N,H,T,V,d]"""
    n, c, t, v = x.shape
    x = T.reshape(x, (n, heads, c // heads, t, v))
    return T.transpose(x, (0, 1, 3, 4, 2))


def _from_heads(x):
    """[N,H,T,V,d] -> [N,C,T,V]"""
    n, h, t, v, d = x.shape
    x = T.transpose(x, (0, 1, 4, 2, 3))
    return T.reshape(x, (n, h * d, t, v))


def attention_logits_j2j(q, k):
    """Scaled per-frame joint-to-joint dot products: [.,V,d] x [.,V,d] -> [.,V,V]."""
    d = q.shape[-1]
    if k.shape != q.shape:
        raise T.ShapeMismatchError(f"q {q.shape} vs k {k.shape}")
    logits = T.matmul(q, T.transpose(k, tuple(range(q.ndim - 2)) + (q.ndim - 1, q.ndim - 2)))
    return logits * (1.0 / math.sqrt(d))


def attention_logits_j2s(q, k_sub, membership):
    """Joint-to-subgraph logits broadcast back to a V x V map.

    Subgraph keys are membership-weighted means of per-joint keys; each
    key-joint column receives the logit of its group.
    """
    d = q.shape[-1]
    m = membership.data
    m_norm = Tensor((m / m.sum(axis=0, keepdims=True)).T)     # [G,V], rows mean-pool
    group_keys = T.matmul(m_norm, k_sub)                      # [..,G,d]
    axes = tuple(range(group_keys.ndim - 2)) + (group_keys.ndim - 1, group_keys.ndim - 2)
    logits_vg = T.matmul(q, T.transpose(group_keys, axes)) * (1.0 / math.sqrt(d))
    return T.matmul(logits_vg, Tensor(m.T))                   # [..,V,V]


def positional_bias(spd_matrix, table):
    """bias[h,i,j] = table[h, spd[i,j]] -> [H,V,V]."""
    return T.embedding_lookup(table, np.asarray(spd_matrix))


def attentive_bias(membership, table):
    """bias[h,i,j] = table[h, group(j)], identical for every query i -> [H,1,V]."""
    per_key = T.matmul(table, Tensor(membership.data.T))      # [H,V]
    h, v = per_key.shape
    return T.reshape(per_key, (h, 1, v))


# -- layers ---------------------------------------------------------------

def hyper_attention_layer(x, weights: ModelWeights, layer: int, training: bool = False):
    """One attention + multi-scale temporal convolution block.

    Returns (output [N,C,T',V], attention weights [N,H,T,V,V] as a plain array).
    """
    cfg = weights.config
    p = weights.params
    pre = f"layer{layer}."
    n, c, t, v = x.shape
    heads = cfg.num_heads

    q = _to_heads(_conv1x1(x, p[pre + "wq"], p[pre + "wq_b"]), heads)
    k = _to_heads(_conv1x1(x, p[pre + "wk"], p[pre + "wk_b"]), heads)
    val = _to_heads(_conv1x1(x, p[pre + "wv"], p[pre + "wv_b"]), heads)

    logits = attention_logits_j2j(q, k)
    if cfg.use_joint2subgraph:
        k_sub = _to_heads(_conv1x1(x, p[pre + "wks"], p[pre + "wks_b"]), heads)
        logits = logits + attention_logits_j2s(q, k_sub, weights.membership)
    if cfg.use_pos_embedding:
        pos = positional_bias(weights.spd_matrix, p[pre + "pos_table"])
        logits = logits + T.reshape(pos, (1, heads, 1, v, v))
    if cfg.use_attentive_bias:
        att = attentive_bias(weights.membership, p[pre + "att_table"])
        logits = logits + T.reshape(att, (1, heads, 1, 1, v))

    attn = T.softmax(logits, axis=-1)
    out = _from_heads(T.matmul(attn, val))
    out = _conv1x1(out, p[pre + "wo"], p[pre + "wo_b"])
    if cfg.use_batch_norm:
        if training:
            _update_running(weights, pre + "bn1", out)
        out = T.batch_norm(out, p[pre + "bn1.gamma"], p[pre + "bn1.beta"],
                           running_mean=weights.running[pre + "bn1.mean"],
                           running_var=weights.running[pre + "bn1.var"],
                           training=training)
    out = T.relu(out + x)

    y = _temporal_block(out, weights, layer, training)
    return y, attn.data


def _update_running(weights, name, x, momentum=0.1):
    # running stats track the pre-normalization batch statistics
    data = x.data
    mean = data.mean(axis=(0, 2, 3))
    var = data.var(axis=(0, 2, 3))
    weights.running[name + ".mean"] *= 1.0 - momentum
    weights.running[name + ".mean"] += momentum * mean
    weights.running[name + ".var"] *= 1.0 - momentum
    weights.running[name + ".var"] += momentum * var


def _temporal_block(x, weights: ModelWeights, layer: int, training: bool):
    """Four parallel temporal branches on a channel split, concatenated, residual."""
    cfg = weights.config
    p = weights.params
    pre = f"layer{layer}."
    stride = cfg.temporal_strides[layer]
    kt = cfg.temporal_kernel

    def pointwise(j, stride_=1):
        return _conv1x1_strided(x, p[pre + f"tcn.b{j}.wp"], p[pre + f"tcn.b{j}.wp_b"], stride_)

    b0 = T.relu(pointwise(0))
    b0 = T.conv2d(b0, p[pre + "tcn.b0.wt"], stride=(stride, 1),
                  padding=((kt - 1) // 2, 0), dilation=(1, 1))
    b0 = b0 + T.reshape(p[pre + "tcn.b0.wt_b"], (1, -1, 1, 1))
    b1 = T.relu(pointwise(1))
    b1 = T.conv2d(b1, p[pre + "tcn.b1.wt"], stride=(stride, 1),
                  padding=(kt - 1, 0), dilation=(2, 1))
    b1 = b1 + T.reshape(p[pre + "tcn.b1.wt_b"], (1, -1, 1, 1))
    b2 = T.max_pool_time(T.relu(pointwise(2)), kernel=3, stride=stride, padding=1)
    b3 = pointwise(3, stride)

    y = T.concat([b0, b1, b2, b3], axis=1)
    if cfg.use_batch_norm:
        if training:
            _update_running(weights, pre + "bn2", y)
        y = T.batch_norm(y, p[pre + "bn2.gamma"], p[pre + "bn2.beta"],
                         running_mean=weights.running[pre + "bn2.mean"],
                         running_var=weights.running[pre + "bn2.var"],
                         training=training)
    res = x if stride == 1 else _subsample_time(x, stride)
    return T.relu(y + res)


def _conv1x1_strided(x, w, b, stride):
    out = T.conv2d(x, w, stride=(stride, 1))
    return out + T.reshape(b, (1, b.shape[0], 1, 1))


def _subsample_time(x, stride):
    n, c, t, v = x.shape
    to = (t - 1) // stride + 1
    idx = np.arange(to) * stride
    # realized as a 1x1 conv with identity kernel would be wasteful; slice directly
    data = x.data[:, :, idx, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, :, idx, :] = g
        x._accumulate(gx)

    if not (x.requires_grad or x._parents):
        return Tensor(data)
    return Tensor(data, parents=(x,), backward=backward)


def forward(x, weights: ModelWeights, training: bool = False):
    """Full model: returns (class logits [N,num_classes], per-layer attention arrays)."""
    cfg = weights.config
    if isinstance(x, np.ndarray):
        x = Tensor(x)
    n, c, t, v = x.shape
    if c != cfg.in_channels or v != cfg.num_joints:
        raise T.ShapeMismatchError(
            f"input {x.shape} does not match config (C={cfg.in_channels}, V={cfg.num_joints})")
    p = weights.params
    h = _conv1x1(x, p["embed.w"], p["embed.w_b"])
    attention_stack = []
    for i in range(cfg.num_layers):
        h, attn = hyper_attention_layer(h, weights, i, training)
        attention_stack.append(attn)
    pooled = T.mean_reduce(h, axis=(2, 3))                     # [N,C]
    logits = T.matmul(pooled, p["head.w"]) + p["head.b"]
    return logits, attention_stack


def predict_proba(x, weights: ModelWeights) -> np.ndarray:
    logits, _ = forward(x, weights, training=False)
    return T.softmax(logits, axis=-1).data


def predict(x, weights: ModelWeights) -> np.ndarray:
    return predict_proba(x, weights).argmax(axis=1)


# -- checkpoint format ----------------------------------------------------

_CHECKPOINT_VERSION = 1


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": base64.b64encode(np.ascontiguousarray(a, dtype=np.float64)
                                     .tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(d["data"]), dtype=np.float64)
    return a.reshape(d["shape"]).copy()


def save_weights(weights: ModelWeights, path):
    doc = {
        "version": _CHECKPOINT_VERSION,
        "config": asdict(weights.config),
        "params": {k: _encode(v.data) for k, v in sorted(weights.params.items())},
        "running": {k: _encode(v) for k, v in sorted(weights.running.items())},
        "spd": _encode(weights.spd_matrix.astype(np.float64)),
        "membership": _encode(weights.membership.data),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_weights(path) -> ModelWeights:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    cfg_dict = dict(doc["config"])
    cfg_dict["temporal_strides"] = tuple(cfg_dict.get("temporal_strides") or ())
    cfg = ModelConfig(**cfg_dict)
    params = {k: T.parameter(_decode(v), k) for k, v in doc["params"].items()}
    running = {k: _decode(v) for k, v in doc["running"].items()}
    return ModelWeights(config=cfg, params=params, running=running,
                        spd_matrix=_decode(doc["spd"]).astype(np.int64),
                        membership=Tensor(_decode(doc["membership"])))
