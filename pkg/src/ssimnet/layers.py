"""Standard layers with explicit forward and backward passes.

Every layer exposes ``params`` and ``grads`` dicts (same keys, same shapes).
``backward`` accumulates into ``grads``; callers zero them between batches.
``backward(..., need_input=False)`` may return None instead of the input gradient.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError, StateError
from .tensor import DTYPE, col2im, conv_output_size, im2col

LAYER_KINDS = ("conv", "ssim", "relu", "maxpool", "fc", "softmax-xent")
_WINDOWED = ("conv", "ssim", "maxpool")
_WITH_CHANNELS = ("conv", "ssim", "fc")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: Optional[int] = None
    kernel: Optional[Tuple[int, int]] = None
    stride: Optional[int] = None
    padding: Optional[int] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        windowed = self.kind in _WINDOWED
        has_window = (self.kernel, self.stride, self.padding) != (None, None, None)
        if windowed and None in (self.kernel, self.stride, self.padding):
            raise ConfigError(f"{self.kind} layer needs kernel, stride and padding")
        if not windowed and has_window:
            raise ConfigError(f"{self.kind} layer takes no kernel/stride/padding")
        if (self.kind in _WITH_CHANNELS) != (self.out_channels is not None):
            raise ConfigError(f"out_channels is required exactly for conv, ssim and fc")
        if self.out_channels is not None and self.out_channels < 1:
            raise ConfigError("out_channels must be positive")
        if windowed:
            object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
            if min(self.kernel) < 1 or self.stride < 1 or self.padding < 0:
                raise ConfigError(f"invalid window geometry in {self}")

    def describe(self):
        if self.kind in ("conv", "ssim"):
            kh, kw = self.kernel
            return f"{kh}x{kw} {self.kind.upper()}, {self.out_channels}, S {self.stride}, P {self.padding}"
        if self.kind == "maxpool":
            return f"MaxPOOL {self.kernel[0]}x{self.kernel[1]}, S {self.stride}"
        if self.kind == "fc":
            return f"FC {self.out_channels}"
        return self.kind.upper() if self.kind == "relu" else self.kind


class Layer:
    spec: LayerSpec

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a cached forward")
        cache, self._cache = self._cache, None
        return cache

    def output_shape(self, input_shape):
        return input_shape


class Conv2D(Layer):
    """Cross-correlation with bias, via im2col."""

    def __init__(self, spec, in_channels, seed=0):
        super().__init__()
        self.spec = spec
        kh, kw = spec.kernel
        fan_in = in_channels * kh * kw
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((spec.out_channels, in_channels, kh, kw)) * np.sqrt(2.0 / fan_in)
        self.params = {"weight": w, "bias": np.zeros(spec.out_channels, dtype=DTYPE)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_shape(self, input_shape):
        c, h, w = input_shape
        kh, kw = self.spec.kernel
        s, p = self.spec.stride, self.spec.padding
        return (self.spec.out_channels, conv_output_size(h, kh, s, p), conv_output_size(w, kw, s, p))

    def forward(self, x):
        w, b = self.params["weight"], self.params["bias"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv expects (N, {w.shape[1]}, H, W), got {x.shape}")
        kh, kw = self.spec.kernel
        cols, oh, ow = im2col(x, kh, kw, self.spec.stride, self.spec.padding)
        out = cols @ w.reshape(w.shape[0], -1).T + b
        self._cache = (cols, x.shape)
        return out.reshape(x.shape[0], oh, ow, -1).transpose(0, 3, 1, 2)

    def backward(self, grad_out, need_input=True):
        cols, in_shape = self._take_cache()
        w = self.params["weight"]
        g = grad_out.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])
        self.grads["weight"] += (g.T @ cols).reshape(w.shape)
        self.grads["bias"] += g.sum(axis=0)
        if not need_input:
            return None
        dcols = g @ w.reshape(w.shape[0], -1)
        kh, kw = self.spec.kernel
        return col2im(dcols, in_shape, kh, kw, self.spec.stride, self.spec.padding)


class ReLU(Layer):
    spec = LayerSpec("relu")

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, grad_out, need_input=True):
        mask = self._take_cache()
        return np.where(mask, grad_out, 0.0)


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""

    def __init__(self, window=2, stride=2):
        super().__init__()
        if window != stride:
            raise ConfigError("only non-overlapping pooling (window == stride) is supported")
        self.spec = LayerSpec("maxpool", kernel=(window, window), stride=stride, padding=0)
        self.window = window

    def output_shape(self, input_shape):
        c, h, w = input_shape
        k = self.window
        if h < k or w < k:
            raise ConfigError(f"pool window {k} larger than input {h}x{w}")
        return (c, h // k, w // k)

    def forward(self, x):
        n, c, h, w = x.shape
        k = self.window
        if h < k or w < k:
            raise ConfigError(f"pool window {k} larger than input {h}x{w}")
        oh, ow = h // k, w // k
        win = x[:, :, :oh * k, :ow * k].reshape(n, c, oh, k, ow, k)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
        # argmax returns the first maximum in row-major window order
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, grad_out, need_input=True):
        idx, in_shape = self._take_cache()
        n, c, h, w = in_shape
        k = self.window
        oh, ow = idx.shape[2:]
        win = np.zeros((n, c, oh, ow, k * k), dtype=DTYPE)
        np.put_along_axis(win, idx[..., None], grad_out[..., None], axis=-1)
        win = win.reshape(n, c, oh, ow, k, k).transpose(0, 1, 2, 4, 3, 5)
        grad_in = np.zeros(in_shape, dtype=DTYPE)
        grad_in[:, :, :oh * k, :ow * k] = win.reshape(n, c, oh * k, ow * k)
        return grad_in


class Dense(Layer):
    """Fully-connected layer; flattens its input."""

    def __init__(self, spec, in_features, seed=0):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((spec.out_channels, in_features)) * np.sqrt(2.0 / in_features)
        self.params = {"weight": w, "bias": np.zeros(spec.out_channels, dtype=DTYPE)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_shape(self, input_shape):
        return (self.spec.out_channels,)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        w = self.params["weight"]
        if flat.shape[1] != w.shape[1]:
            raise ShapeError(f"fc expects {w.shape[1]} input features, got {flat.shape[1]}")
        self._cache = (flat, x.shape)
        return flat @ w.T + self.params["bias"]

    def backward(self, grad_out, need_input=True):
        flat, in_shape = self._take_cache()
        self.grads["weight"] += grad_out.T @ flat
        self.grads["bias"] += grad_out.sum(axis=0)
        if not need_input:
            return None
        return (grad_out @ self.params["weight"]).reshape(in_shape)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, targets):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Returns ``(loss, grad_logits, per_sample_losses)``.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    targets = np.asarray(targets)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"expected {n} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= k):
        raise DataFormatError(f"targets must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    per_sample = log_norm - z[np.arange(n), targets]
    grad = np.exp(z - log_norm[:, None])
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return per_sample.mean(), grad, per_sample
