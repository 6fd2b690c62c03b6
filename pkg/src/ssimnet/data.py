"""CIFAR-10 binary batches, augmentation, normalisation and subsetting.

A binary batch is 10000 records of 3073 bytes: one label byte followed by
3072 pixel bytes laid out as R, G and B planes of 32x32, row-major.
"""
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataFormatError, UsageError

RECORD_BYTES = 3073
RECORDS_PER_BATCH = 10000
IMAGE_SHAPE = (3, 32, 32)
NUM_CLASSES = 10
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
CLASS_NAMES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)


@dataclass(frozen=True)
class ImageRecord:
    label: int
    pixels: np.ndarray


@dataclass
class DatasetSplit:
    """Images as a (N, 3, 32, 32) float64 array plus int64 labels."""

    images: np.ndarray
    labels: np.ndarray
    role: str = "train"

    def __len__(self):
        return len(self.labels)

    def records(self):
        return [ImageRecord(int(l), im) for l, im in zip(self.labels, self.images)]

    def class_counts(self):
        return np.bincount(self.labels, minlength=NUM_CLASSES)


def _decode(raw, path, expected_records):
    if expected_records is not None and raw.size != expected_records * RECORD_BYTES:
        raise DataFormatError(
            f"{path}: expected {expected_records * RECORD_BYTES} bytes "
            f"({expected_records} records), got {raw.size}"
        )
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DataFormatError(f"{path}: {raw.size} bytes is not a whole number of records")
    rec = raw.reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() >= NUM_CLASSES:
        bad = int(np.argmax(labels >= NUM_CLASSES))
        raise DataFormatError(f"{path}: record {bad} has label byte {labels[bad]} > 9")
    images = rec[:, 1:].reshape(-1, *IMAGE_SHAPE).astype(np.float64) / 255.0
    return images, labels


def load_cifar_batch(path, expected_records=RECORDS_PER_BATCH):
    """Decode one binary batch file into ``(images in [0, 1], labels)``."""
    raw = np.fromfile(path, dtype=np.uint8)
    return _decode(raw, path, expected_records)


def encode_cifar_batch(images, labels):
    pixels = np.rint(np.asarray(images) * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise DataFormatError("pixel values must lie in [0, 1]")
    rec = np.empty((len(labels), RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = np.asarray(labels, dtype=np.uint8)
    rec[:, 1:] = pixels.reshape(len(labels), -1).astype(np.uint8)
    return rec.tobytes()


def write_cifar_batch(path, images, labels):
    Path(path).write_bytes(encode_cifar_batch(images, labels))


def find_cifar_dir(path=None):
    """Resolve the directory holding the binary batches.

    Order: explicit path, ``$CIFAR10_DIR``, ``./cifar-10-batches-bin``.
    """
    candidates = [path, os.environ.get("CIFAR10_DIR"), "cifar-10-batches-bin"]
    for c in candidates:
        if c and (Path(c) / TEST_FILE).is_file():
            return Path(c)
    raise DataFormatError(
        "CIFAR-10 binary batches not found (looked in "
        + ", ".join(str(c) for c in candidates if c)
        + "); download cifar-10-binary.tar.gz and point CIFAR10_DIR at cifar-10-batches-bin"
    )


def load_cifar10(directory):
    """Return ``(train, validation)`` splits. Missing training batch files are skipped,
    but at least one must exist; the test batch serves as validation."""
    directory = Path(directory)
    train_paths = [directory / f for f in TRAIN_FILES if (directory / f).is_file()]
    if not train_paths:
        raise DataFormatError(f"no data_batch_*.bin files in {directory}")
    parts = [load_cifar_batch(p) for p in train_paths]
    train = DatasetSplit(
        np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), "train"
    )
    val = DatasetSplit(*load_cifar_batch(directory / TEST_FILE), role="validation")
    return train, val


def horizontal_flip(image):
    """Reverse column order in every channel. Works on single images or batches."""
    return np.ascontiguousarray(np.asarray(image)[..., ::-1])


def subset(split, per_class, seed=0):
    """Deterministic class-balanced sample of ``per_class`` images per class.

    Selected records keep their original relative order.
    """
    counts = split.class_counts()
    if per_class < 1:
        raise UsageError("per_class must be positive")
    if per_class > counts.min():
        raise UsageError(
            f"per_class={per_class} exceeds the smallest class population ({counts.min()})"
        )
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(NUM_CLASSES):
        idx = np.flatnonzero(split.labels == c)
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    keep = np.sort(np.concatenate(chosen))
    return DatasetSplit(split.images[keep], split.labels[keep], split.role)


class ChannelStandardizer(TransformerMixin, BaseEstimator):
    """Per-channel ``(x - mean_c) / std_c`` with statistics fitted on training images.

    Accepts (N, C, H, W) arrays.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4:
            raise DataFormatError(f"expected (N, C, H, W) images, got shape {X.shape}")
        mean = X.mean(axis=(0, 2, 3))
        std = X.std(axis=(0, 2, 3))
        if np.any(std == 0):
            raise DataFormatError(f"channel(s) {np.flatnonzero(std == 0).tolist()} have zero std")
        self.mean_ = mean
        self.std_ = std
        return self

    def transform(self, X):
        check_is_fitted(self, ("mean_", "std_"))
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean_[None, :, None, None]) / self.std_[None, :, None, None]

    def inverse_transform(self, X):
        check_is_fitted(self, ("mean_", "std_"))
        return np.asarray(X) * self.std_[None, :, None, None] + self.mean_[None, :, None, None]

    def save(self, path):
        lines = [f"channels={len(self.mean_)}"]
        lines += [f"mean_{i}={float(m)!r}" for i, m in enumerate(self.mean_)]
        lines += [f"std_{i}={float(s)!r}" for i, s in enumerate(self.std_)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        kv = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()
        try:
            n = int(kv["channels"])
            obj = cls()
            obj.mean_ = np.array([float(kv[f"mean_{i}"]) for i in range(n)])
            obj.std_ = np.array([float(kv[f"std_{i}"]) for i in range(n)])
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: malformed normalisation file ({exc})") from exc
        return obj


def normalize(images, standardizer):
    return standardizer.transform(images)
