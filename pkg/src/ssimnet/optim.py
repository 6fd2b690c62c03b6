"""Mini-batch SGD with classical momentum and L2 weight decay."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError, UsageError
from .layers import softmax_xent


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 500
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")


def is_decayed(name):
    """Weight decay covers weights and SSIM filters, never biases."""
    return not name.endswith(".bias")


def global_loss(per_sample_losses, params, weight_decay):
    """Mean per-sample loss plus ``weight_decay * sum(w ** 2)`` over the decayed tensors.

    ``params`` is a name -> array mapping or a plain sequence of arrays (all decayed).
    """
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    if losses.size == 0:
        raise UsageError("global loss of an empty batch")
    if hasattr(params, "items"):
        tensors = [v for k, v in params.items() if is_decayed(k)]
    else:
        tensors = list(params)
    reg = sum(float(np.sum(np.square(w))) for w in tensors)
    return float(losses.mean()) + weight_decay * reg


class SGD:
    def __init__(self, params, config):
        self.params = params
        self.config = config
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        """v <- m v + (g + 2 lambda w); w <- w - lr v; then zero the grads."""
        cfg = self.config
        for name, w in self.params.items():
            g = grads[name]
            v = self.velocity[name]
            if g.shape != w.shape or v.shape != w.shape:
                raise StateError(f"shape mismatch for {name}: param {w.shape}, grad {g.shape}")
            d = g + 2 * cfg.weight_decay * w if is_decayed(name) else g
            v *= cfg.momentum
            v += d
            w -= cfg.learning_rate * v
            g[...] = 0.0

    def state_dict(self):
        return {f"velocity/{k}": v for k, v in self.velocity.items()}

    def load_state_dict(self, state):
        for k, v in self.velocity.items():
            v[...] = state[f"velocity/{k}"]


def epoch_rng(seed, epoch):
    return np.random.default_rng(seed + epoch)


def train_epoch(model, images, labels, optimizer, epoch, config=None):
    """One shuffled pass over the data. Returns ``(mean_loss, accuracy)``.

    Loss and accuracy are accumulated from each batch's forward pass before its
    update. Shuffle order and flips come from a generator seeded with
    ``seed + epoch``.
    """
    config = config or optimizer.config
    n = len(images)
    if n == 0:
        raise UsageError("empty training set")
    rng = epoch_rng(config.seed, epoch)
    order = rng.permutation(n)
    flips = rng.random(n) < 0.5 if config.augment else np.zeros(n, dtype=bool)

    total_loss = 0.0
    correct = 0
    grads = model.named_gradients()
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        x = images[idx]
        fl = flips[start:start + config.batch_size]
        if fl.any():
            x = x.copy()
            x[fl] = x[fl][..., ::-1]
        loss, logits, _ = model.loss_and_grads(x, labels[idx])
        total_loss += loss * len(idx)
        correct += int(np.sum(logits.argmax(axis=1) == labels[idx]))
        optimizer.step(grads)
    return total_loss / n, correct / n


def evaluate(model, images, labels, batch_size=32):
    """Mean cross-entropy and top-1 accuracy, no augmentation."""
    if len(images) == 0:
        raise UsageError("empty evaluation set")
    logits = model.predict_logits(images, batch_size)
    _, _, per_sample = softmax_xent(logits, labels)
    return float(per_sample.mean()), float(np.mean(logits.argmax(axis=1) == labels))
