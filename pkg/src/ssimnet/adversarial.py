"""FGSM adversarial examples and TOP-K robustness evaluation."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import UsageError

DEFAULT_EPSILONS = (0.0, 0.003, 0.005, 0.007, 0.01, 0.02)


@dataclass(frozen=True)
class AttackConfig:
    epsilon_sweep: Tuple[float, ...] = DEFAULT_EPSILONS
    # "pixel": epsilon is in raw [0, 1] units and is divided by the per-channel
    # std before being applied to normalised inputs. "normalized": applied as-is.
    domain: str = "pixel"

    def __post_init__(self):
        sweep = tuple(float(e) for e in self.epsilon_sweep)
        if not sweep:
            raise UsageError("epsilon sweep is empty")
        if any(e < 0 for e in sweep):
            raise UsageError("epsilons must be non-negative")
        if list(sweep) != sorted(sweep):
            raise UsageError("epsilon sweep must be sorted ascending")
        if self.domain not in ("pixel", "normalized"):
            raise UsageError(f"unknown epsilon domain {self.domain!r}")
        object.__setattr__(self, "epsilon_sweep", sweep)


@dataclass
class RobustnessRow:
    epsilon: float
    split: str
    top1: float
    top5: float


@dataclass
class RobustnessReport:
    rows: List[RobustnessRow] = field(default_factory=list)
    domain: str = "pixel"


def sign(g):
    """-1 where g < 0, 0 where g == 0, +1 where g > 0."""
    g = np.asarray(g, dtype=np.float64)
    return np.where(g > 0, 1.0, np.where(g < 0, -1.0, 0.0))


def fgsm(model, x, y, epsilon, batch_size=32):
    """``x + epsilon * sign(grad_x J)`` with J the mean cross-entropy of each batch.

    ``epsilon`` may be a scalar or broadcast against (N, C, H, W), e.g. a
    per-channel step of shape (1, C, 1, 1). No clipping is applied.
    """
    eps = np.asarray(epsilon, dtype=np.float64)
    if np.any(eps < 0):
        raise UsageError("epsilon must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if not np.any(eps):
        return x.copy()
    y = np.asarray(y)
    grad = np.concatenate(
        [model.input_gradient(x[i:i + batch_size], y[i:i + batch_size])
         for i in range(0, len(x), batch_size)]
    )
    return x + eps * sign(grad)


def topk_accuracy(logits, targets, k):
    """Fraction of rows whose target is among the k largest logits (ties favour lower index)."""
    logits = np.asarray(logits, dtype=np.float64)
    n_classes = logits.shape[1]
    if not 1 <= k <= n_classes:
        raise UsageError(f"k must lie in [1, {n_classes}], got {k}")
    ranked = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(ranked == np.asarray(targets)[:, None], axis=1)))


def epsilon_step(epsilon, attack, channel_std=None):
    if attack.domain == "normalized" or channel_std is None:
        return epsilon
    return epsilon / np.asarray(channel_std, dtype=np.float64)[None, :, None, None]


def robustness_sweep(model, splits, attack, channel_std=None, batch_size=32):
    """Attack each split at every epsilon with this model's own gradients.

    ``splits`` maps a split name to ``(images, labels)`` in the model's input domain.
    """
    report = RobustnessReport(domain=attack.domain)
    for eps in attack.epsilon_sweep:
        step = epsilon_step(eps, attack, channel_std)
        for name, (images, labels) in splits.items():
            adv = fgsm(model, images, labels, step, batch_size=batch_size)
            logits = model.predict_logits(adv, batch_size)
            k5 = min(5, logits.shape[1])
            report.rows.append(RobustnessRow(
                epsilon=eps,
                split=name,
                top1=topk_accuracy(logits, labels, 1),
                top5=topk_accuracy(logits, labels, k5),
            ))
    return report
