"""Filter-grid images (binary PPM) and per-filter norm listings."""
import math
from pathlib import Path

import numpy as np

from .errors import UsageError

SEPARATOR = 0


def normalize_cell(f):
    """Min-max scale one filter to [0, 1]; a constant filter maps to 0.5."""
    lo, hi = f.min(), f.max()
    if hi == lo:
        return np.full(f.shape, 0.5)
    return (f - lo) / (hi - lo)


def filter_grid(filters, columns=None):
    """Tile (F, C, kh, kw) filters with C in {1, 3} into an (H, W, 3) uint8 image.

    Cells are separated by 1-pixel lines of value ``SEPARATOR``.
    """
    filters = np.asarray(filters, dtype=np.float64)
    if filters.ndim != 4 or filters.shape[1] not in (1, 3):
        raise UsageError(
            f"need spatial filters over 1 or 3 input channels, got shape {filters.shape}"
        )
    n, c, kh, kw = filters.shape
    cols = columns or math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    img = np.full((rows * (kh + 1) - 1, cols * (kw + 1) - 1, 3), SEPARATOR, dtype=np.uint8)
    for i, f in enumerate(filters):
        cell = np.rint(normalize_cell(f) * 255).astype(np.uint8).transpose(1, 2, 0)
        if c == 1:
            cell = np.repeat(cell, 3, axis=2)
        r, q = divmod(i, cols)
        img[r * (kh + 1):r * (kh + 1) + kh, q * (kw + 1):q * (kw + 1) + kw] = cell
    return img


def write_ppm(path, img):
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path):
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    pixels = data[len(data) - w * h * 3:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)


def filter_norms(filters):
    filters = np.asarray(filters, dtype=np.float64)
    return np.sqrt(np.sum(filters.reshape(len(filters), -1) ** 2, axis=1))


def write_norms(path, filters):
    lines = [f"{i} {n!r}" for i, n in enumerate(filter_norms(filters).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
