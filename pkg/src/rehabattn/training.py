"""Adam optimization of the per-exercise classifier with cross-entropy loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dataio import Corpus, interpolate
from .model import ModelConfig, ModelWeights, forward, init_weights
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.5e-3
    epochs: int = 600
    batch_size: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the true classes; stable log-sum-exp."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k - 1}], got range "
                         f"[{labels.min()}, {labels.max()}]")
    logp = T.log_softmax(logits, axis=-1)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    return T.mul(T.sum_reduce(T.mul(logp, Tensor(onehot))), -1.0 / n)


class AdamState:
    """First/second moment estimates, one slot per parameter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


def adam_step(params, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update in place; parameters with no grad are skipped."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    for p, m, v in zip(params, state.m, state.v):
        if p.grad is None:
            continue
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)       # dicts: epoch, loss, accuracy

    def record(self, epoch: int, loss: float, accuracy: float):
        self.epochs.append({"epoch": epoch, "loss": loss, "accuracy": accuracy})

    def final_loss(self) -> float:
        return self.epochs[-1]["loss"]

    def lines(self):
        for e in self.epochs:
            yield f"epoch={e['epoch']} loss={e['loss']:.6f} accuracy={e['accuracy']:.4f}"


def _prepare(corpus: Corpus, t_frames: int):
    xs = np.stack([np.transpose(interpolate(s, t_frames).frames, (2, 0, 1))
                   for s in corpus])
    return xs, corpus.labels()


def train(corpus: Corpus, model_config: ModelConfig, train_config: TrainConfig,
          weights: ModelWeights | None = None, callback=None):
    """Train one per-exercise classifier; deterministic in (seed, corpus, configs).

    ``callback(epoch, weights, log)`` runs after each epoch; returning True
    stops training early.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    exercises = {s.exercise for s in corpus}
    if len(exercises) != 1:
        raise ValueError(f"corpus mixes exercises {sorted(exercises)}; train one model per exercise")

    xs, labels = _prepare(corpus, model_config.t_frames)
    if weights is None:
        weights = init_weights(model_config, seed=train_config.seed)
    params = weights.parameters()
    state = AdamState(params)
    rng = np.random.default_rng(train_config.seed)
    log = TrainLog()
    n = len(corpus)
    bs = train_config.batch_size

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        total_loss = 0.0
        correct = 0
        for lo in range(0, n, bs):
            idx = order[lo: lo + bs]
            x = Tensor(xs[idx])
            y = labels[idx]
            logits, _ = forward(x, weights, training=True)
            loss = cross_entropy(logits, y)
            weights.zero_grad()
            loss.backward()
            adam_step(params, state, train_config)
            total_loss += loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == y).sum())
        log.record(epoch, total_loss / n, correct / n)
        if callback is not None and callback(epoch, weights, log):
            break
    return weights, log
