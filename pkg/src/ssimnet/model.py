"""Declarative architectures and the sequential network that runs them."""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import ConfigError, NumericFault, ShapeError
from .layers import Conv2D, Dense, LayerSpec, MaxPool2D, ReLU, softmax, softmax_xent
from .ssim import SSIMLayer, SsimConstants
from .tensor import conv_output_size


@dataclass(frozen=True)
class ModelSpec:
    layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, int, int] = (3, 32, 32)
    num_classes: int = 10
    ssim: SsimConstants = field(default_factory=SsimConstants)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    def shapes(self):
        """Per-layer output shapes (without batch). Raises ConfigError if the chain does not type-check."""
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigError(f"input_shape must be (C, H, W), got {self.input_shape}")
        if not self.layers:
            raise ConfigError("model has no layers")
        shape = self.input_shape
        out = []
        for i, ls in enumerate(self.layers):
            if ls.kind == "softmax-xent":
                raise ConfigError("softmax-xent is the training loss, not a model layer")
            if len(shape) != 3 and ls.kind != "fc":
                raise ConfigError(f"layer {i} ({ls.kind}) follows a flat feature vector")
            try:
                if ls.kind in ("conv", "ssim"):
                    shape = window_output_shape(ls, shape)
                elif ls.kind == "maxpool":
                    shape = MaxPool2D(ls.kernel[0], ls.stride).output_shape(shape)
                elif ls.kind == "fc":
                    shape = (ls.out_channels,)
            except ShapeError as exc:
                raise ConfigError(f"layer {i} ({ls.describe()}): {exc}") from exc
            out.append(shape)
        if shape != (self.num_classes,):
            raise ConfigError(
                f"model must end in {self.num_classes} logits, final shape is {shape}"
            )
        return out

    def validate(self):
        self.shapes()
        return self

    def describe(self):
        return " - ".join(ls.describe() for ls in self.layers)


def window_output_shape(ls, input_shape):
    c, h, w = input_shape
    kh, kw = ls.kernel
    return (
        ls.out_channels,
        conv_output_size(h, kh, ls.stride, ls.padding),
        conv_output_size(w, kw, ls.stride, ls.padding),
    )


class Network:
    """A chain of layers ending in logits."""

    def __init__(self, spec, seed=0):
        self.spec = spec.validate()
        seeds = np.random.SeedSequence(seed).spawn(len(spec.layers))
        self.layers = []
        shape = spec.input_shape
        for ls, ss in zip(spec.layers, seeds):
            layer_seed = int(ss.generate_state(1)[0])
            if ls.kind == "conv":
                layer = Conv2D(ls, shape[0], seed=layer_seed)
            elif ls.kind == "ssim":
                layer = SSIMLayer(ls, shape[0], spec.ssim, seed=layer_seed)
            elif ls.kind == "relu":
                layer = ReLU()
            elif ls.kind == "maxpool":
                layer = MaxPool2D(ls.kernel[0], ls.stride)
            else:
                layer = Dense(ls, int(np.prod(shape)), seed=layer_seed)
            shape = layer.output_shape(shape)
            self.layers.append(layer)

    def named_parameters(self):
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                out[f"layer{i}.{name}"] = value
        return out

    def named_gradients(self):
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for name, value in layer.grads.items():
                out[f"layer{i}.{name}"] = value
        return out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x, check_finite=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"expected inputs of shape (N, {self.spec.input_shape}), got {x.shape}")
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if check_finite and not np.all(np.isfinite(x)):
                raise NumericFault(
                    f"non-finite activation in layer {i} ({layer.spec.describe()})", layer=i
                )
        return x

    def backward(self, grad, need_input=True):
        for i in range(len(self.layers) - 1, -1, -1):
            grad = self.layers[i].backward(grad, need_input=need_input or i > 0)
        return grad

    def loss_and_grads(self, x, y, need_input=False):
        """Forward, cross-entropy, backward. Accumulates parameter grads and returns
        ``(mean_loss, logits, grad_input)``; grad_input is None unless requested."""
        logits = self.forward(x, check_finite=True)
        loss, grad, _ = softmax_xent(logits, y)
        if not np.isfinite(loss):
            raise NumericFault("non-finite loss", layer=len(self.layers) - 1)
        grad_input = self.backward(grad, need_input=need_input)
        return loss, logits, grad_input

    def input_gradient(self, x, y):
        """d(mean loss)/dx, leaving parameter gradients exactly as they were."""
        saved = {k: v.copy() for k, v in self.named_gradients().items()}
        try:
            _, _, grad_input = self.loss_and_grads(x, y, need_input=True)
        finally:
            for k, v in self.named_gradients().items():
                v[...] = saved[k]
        return grad_input

    def predict_logits(self, x, batch_size=32):
        x = np.asarray(x, dtype=np.float64)
        parts = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        for layer in self.layers:
            layer._cache = None
        return np.concatenate(parts, axis=0) if parts else np.zeros((0, self.spec.num_classes))

    def predict_proba(self, x, batch_size=32):
        return softmax(self.predict_logits(x, batch_size))

    def ssim_layers(self):
        return [(i, l) for i, l in enumerate(self.layers) if isinstance(l, SSIMLayer)]
