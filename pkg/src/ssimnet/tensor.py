"""Array primitives.

Tensors are plain float64 numpy arrays in (N, C, H, W) layout. The helpers
here add the shape checks and the patch extraction (im2col / col2im) the
sliding-window layers need.
"""
import numpy as np

from .errors import ShapeError

DTYPE = np.float64


def _check_shape(shape):
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    return shape


def zeros(shape):
    return np.zeros(_check_shape(shape), dtype=DTYPE)


def randn(shape, seed):
    """Standard-normal tensor from a seeded generator; same seed, same draw."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(_check_shape(shape), dtype=DTYPE)


_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op, a, b):
    a = np.asarray(a, dtype=DTYPE)
    if op == "scalar-mul":
        if np.ndim(b) != 0:
            raise ShapeError("scalar-mul expects a scalar operand")
        return a * float(b)
    if op not in _OPS:
        raise ValueError(f"unknown elementwise op {op!r}")
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _OPS[op](a, b)


def conv_output_size(size, kernel, stride, padding):
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"kernel {kernel} larger than padded input {size + 2 * padding}")
    if span % stride:
        raise ShapeError(
            f"non-integral output size: ({size} + 2*{padding} - {kernel}) / {stride}"
        )
    return span // stride + 1


def extract_patch(image, center, kernel, padding):
    """Flattened (channel-major) window of a (C, H, W) image around `center`.

    For even kernels the center sits at index kh // 2 of the window. Positions
    falling in the zero padding contribute 0.
    """
    image = np.asarray(image, dtype=DTYPE)
    if image.ndim != 3:
        raise ShapeError(f"expected (C, H, W) image, got shape {image.shape}")
    c, h, w = image.shape
    kh, kw = kernel
    r0 = center[0] - kh // 2
    c0 = center[1] - kw // 2
    if r0 < -padding or c0 < -padding or r0 + kh > h + padding or c0 + kw > w + padding:
        raise IndexError(
            f"window at {tuple(center)} with kernel {tuple(kernel)} exceeds padded bounds"
        )
    padded = np.pad(image, ((0, 0), (padding, padding), (padding, padding)))
    r0 += padding
    c0 += padding
    return padded[:, r0:r0 + kh, c0:c0 + kw].reshape(-1)


def im2col(x, kh, kw, stride=1, padding=0):
    """Rows are flattened (C*kh*kw) patches ordered (n, out_row, out_col)."""
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    # (n, c, oh, ow, kh, kw) -> (n, oh, ow, c, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return cols, oh, ow


def col2im(cols, input_shape, kh, kw, stride=1, padding=0):
    """Adjoint of im2col: scatter-add patch rows back into image layout."""
    n, c, h, w = input_shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=DTYPE)
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            out[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return out
