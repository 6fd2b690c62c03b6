import numpy as np
import pytest

from ssimnet.data import RECORDS_PER_BATCH, write_cifar_batch


def numerical_grad(f, x, h=1e-5):
    """Central finite differences of scalar f() with respect to array x (perturbed in place)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def max_rel_error(analytic, numeric):
    """Largest elementwise error relative to the gradient's largest magnitude."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def synthetic_cifar(n, seed):
    """Learnable stand-in for CIFAR-10: each class gets a fixed random
    low-frequency colour pattern, plus per-image noise and brightness jitter."""
    rng = np.random.default_rng(seed)
    proto_rng = np.random.default_rng(1234)
    coarse = proto_rng.uniform(0.2, 0.8, size=(10, 3, 4, 4))
    protos = coarse.repeat(8, axis=2).repeat(8, axis=3)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    images = protos[labels] + rng.normal(0, 0.12, size=(n, 3, 32, 32))
    images += rng.uniform(-0.1, 0.1, size=(n, 1, 1, 1))
    images = np.rint(np.clip(images, 0, 1) * 255) / 255
    return images, labels


@pytest.fixture(scope="session")
def cifar_dir(tmp_path_factory):
    """Directory holding one synthetic training batch and a synthetic test batch."""
    d = tmp_path_factory.mktemp("cifar")
    imgs, labels = synthetic_cifar(RECORDS_PER_BATCH, seed=1)
    write_cifar_batch(d / "data_batch_1.bin", imgs, labels)
    imgs, labels = synthetic_cifar(RECORDS_PER_BATCH, seed=2)
    write_cifar_batch(d / "test_batch.bin", imgs, labels)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
