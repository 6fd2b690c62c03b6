"""Structural-similarity layer.

Each output unit is the SSIM between one trainable filter ``y`` and the
flattened multi-channel input window ``x`` under it::

    SSIM(x, y) = (2 mu_x mu_y + C1)(2 cov_xy + C2)
                 / ((mu_x^2 + mu_y^2 + C1)(var_x + var_y + C2))

With ``A1, A2`` the numerator factors and ``B1, B2`` the denominator factors,
the derivative with respect to the filter is::

    dSSIM/dy = 2 [A1 B1 (B2 x - A2 y) + B1 B2 (A2 - A1) mu_x + A1 A2 (B1 - B2) mu_y]
               / (n B1^2 B2^2)

which is exact when the variances and covariance divide by ``n`` (not
``n - 1``). The layer therefore uses that normalisation in both passes.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import Layer, LayerSpec
from .tensor import DTYPE, col2im, conv_output_size, im2col

VARIANCE_MODES = ("biased", "paper-unbiased")


@dataclass(frozen=True)
class SsimConstants:
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    c3: Optional[float] = None
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.c3 is None:
            object.__setattr__(self, "c3", self.c2 / 2)
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ConfigError("SSIM stability constants must be positive")
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ConfigError("SSIM exponents must be positive")

    @classmethod
    def for_dynamic_range(cls, dynamic_range=1.0, k1=0.01, k2=0.03):
        return cls(c1=(k1 * dynamic_range) ** 2, c2=(k2 * dynamic_range) ** 2)


@dataclass(frozen=True)
class PatchStatistics:
    mu_x: float
    mu_y: float
    var_x: float
    var_y: float
    cov_xy: float
    n_p: int


@dataclass(frozen=True)
class SsimGradTerms:
    a1: float
    a2: float
    b1: float
    b2: float

    @classmethod
    def from_stats(cls, stats, k):
        return cls(
            a1=2 * stats.mu_x * stats.mu_y + k.c1,
            a2=2 * stats.cov_xy + k.c2,
            b1=stats.mu_x * stats.mu_x + stats.mu_y * stats.mu_y + k.c1,
            b2=stats.var_x + stats.var_y + k.c2,
        )


def patch_stats(x, y, variance_mode="biased"):
    x = np.asarray(x, dtype=DTYPE).ravel()
    y = np.asarray(y, dtype=DTYPE).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"patch and filter differ in length: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise ConfigError("patch statistics need at least two elements")
    if variance_mode not in VARIANCE_MODES:
        raise ConfigError(f"variance_mode must be one of {VARIANCE_MODES}")
    denom = n if variance_mode == "biased" else n - 1
    mu_x, mu_y = x.mean(), y.mean()
    xc, yc = x - mu_x, y - mu_y
    return PatchStatistics(
        mu_x=float(mu_x),
        mu_y=float(mu_y),
        var_x=float(np.dot(xc, xc) / denom),
        var_y=float(np.dot(yc, yc) / denom),
        cov_xy=float(np.dot(xc, yc) / denom),
        n_p=n,
    )


def ssim_components(stats, k=SsimConstants(), structure="standard"):
    """Luminance, contrast and structure terms.

    ``structure="standard"`` uses ``(cov + C3) / (sd_x sd_y + C3)``, under which
    ``l * c * s`` reduces to the simplified SSIM when ``C3 = C2 / 2``.
    ``structure="doubled"`` uses ``(2 cov + C3) / (sd_x sd_y + C3)``; kept for
    inspection only since it does not reduce that way.
    """
    sd_x, sd_y = np.sqrt(stats.var_x), np.sqrt(stats.var_y)
    lum = (2 * stats.mu_x * stats.mu_y + k.c1) / (stats.mu_x ** 2 + stats.mu_y ** 2 + k.c1)
    con = (2 * sd_x * sd_y + k.c2) / (stats.var_x + stats.var_y + k.c2)
    if structure == "standard":
        st = (stats.cov_xy + k.c3) / (sd_x * sd_y + k.c3)
    elif structure == "doubled":
        st = (2 * stats.cov_xy + k.c3) / (sd_x * sd_y + k.c3)
    else:
        raise ConfigError(f"unknown structure variant {structure!r}")
    return float(lum), float(con), float(st)


def ssim_weighted(stats, k=SsimConstants(), structure="standard"):
    """``l^alpha * c^beta * s^gamma``. Not used for training."""
    lum, con, st = ssim_components(stats, k, structure)
    return lum ** k.alpha * con ** k.beta * np.sign(st) * abs(st) ** k.gamma


def ssim_simplified(stats, k=SsimConstants()):
    t = SsimGradTerms.from_stats(stats, k)
    return (t.a1 * t.a2) / (t.b1 * t.b2)


def ssim(x, y, k=SsimConstants(), variance_mode="biased"):
    return ssim_simplified(patch_stats(x, y, variance_mode), k)


def ssim_closed_form_grad(x, y, stats=None, k=SsimConstants()):
    """Analytic dSSIM/dy for one patch/filter pair (biased statistics)."""
    x = np.asarray(x, dtype=DTYPE).ravel()
    y = np.asarray(y, dtype=DTYPE).ravel()
    if stats is None:
        stats = patch_stats(x, y, "biased")
    t = SsimGradTerms.from_stats(stats, k)
    n = stats.n_p
    num = (
        t.a1 * t.b1 * (t.b2 * x - t.a2 * y)
        + t.b1 * t.b2 * (t.a2 - t.a1) * stats.mu_x
        + t.a1 * t.a2 * (t.b1 - t.b2) * stats.mu_y
    )
    return 2 * num / (n * t.b1 ** 2 * t.b2 ** 2)


class SSIMLayer(Layer):
    """Sliding-window SSIM between each filter and each input patch.

    Filters are stored flat as ``(F, C*kh*kw)`` and initialised from N(0, 1).
    There is no bias term.
    """

    def __init__(self, spec, in_channels, constants=SsimConstants(), seed=0):
        super().__init__()
        if spec.kind != "ssim":
            raise ConfigError(f"SSIMLayer needs an ssim LayerSpec, got {spec.kind!r}")
        kh, kw = spec.kernel
        if in_channels * kh * kw < 2:
            raise ConfigError("SSIM patches need at least two elements")
        self.spec = spec
        self.in_channels = in_channels
        self.constants = constants
        rng = np.random.default_rng(seed)
        filters = rng.standard_normal((spec.out_channels, in_channels * kh * kw))
        self.params = {"weight": filters}
        self.grads = {"weight": np.zeros_like(filters)}

    @property
    def filters(self):
        return self.params["weight"]

    def filter_images(self):
        kh, kw = self.spec.kernel
        return self.filters.reshape(-1, self.in_channels, kh, kw)

    def output_shape(self, input_shape):
        c, h, w = input_shape
        kh, kw = self.spec.kernel
        s, p = self.spec.stride, self.spec.padding
        return (self.spec.out_channels, conv_output_size(h, kh, s, p), conv_output_size(w, kw, s, p))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"ssim layer expects (N, {self.in_channels}, H, W), got {x.shape}")
        kh, kw = self.spec.kernel
        cols, oh, ow = im2col(x, kh, kw, self.spec.stride, self.spec.padding)
        y = self.filters
        n_p = cols.shape[1]
        k = self.constants

        mu_x = cols.mean(axis=1)
        mu_y = y.mean(axis=1)
        yc = y - mu_y[:, None]
        # sum(yc) == 0, so x need not be centred for the covariance; the
        # mean-of-squares variance error is far below C2
        var_x = np.maximum(np.einsum("ij,ij->i", cols, cols) / n_p - mu_x * mu_x, 0.0)
        var_y = np.einsum("ij,ij->i", yc, yc) / n_p
        cov = (cols @ yc.T) / n_p

        a1 = 2 * mu_x[:, None] * mu_y[None, :] + k.c1
        a2 = 2 * cov + k.c2
        b1 = (mu_x * mu_x)[:, None] + (mu_y * mu_y)[None, :] + k.c1
        b2 = var_x[:, None] + var_y[None, :] + k.c2
        out = (a1 * a2) / (b1 * b2)

        self._cache = (cols, x.shape, mu_x, mu_y, a1, a2, b1, b2, out)
        return out.reshape(x.shape[0], oh, ow, -1).transpose(0, 3, 1, 2)

    def backward(self, grad_out, need_input=True):
        cols, in_shape, mu_x, mu_y, a1, a2, b1, b2, out = self._take_cache()
        y = self.filters
        n_p = cols.shape[1]
        g = grad_out.transpose(0, 2, 3, 1).reshape(-1, y.shape[0])

        # dS/dy_f = sum_m [p x_m - q y_f + r] with per-(m, f) coefficients
        # p = 2 g A1 / (n B1 B2), q = 2 g S / (n B2) and
        # r = 2 g [(A2 - A1) mu_x + S (B1 - B2) mu_y] / (n B1 B2);
        # dS/dx_m is the same with the roles of x and y swapped.
        u = (2.0 / n_p) * g / (b1 * b2)
        p = u * a1
        q = (2.0 / n_p) * g * out / b2
        common = u * (a2 - a1)
        skew = u * out * (b1 - b2)

        r_y = mu_x @ common + mu_y * skew.sum(axis=0)
        self.grads["weight"] += p.T @ cols - q.sum(axis=0)[:, None] * y + r_y[:, None]
        if not need_input:
            return None
        r_x = common @ mu_y + mu_x * skew.sum(axis=1)
        dcols = p @ y - q.sum(axis=1)[:, None] * cols + r_x[:, None]
        kh, kw = self.spec.kernel
        return col2im(dcols, in_shape, kh, kw, self.spec.stride, self.spec.padding)
