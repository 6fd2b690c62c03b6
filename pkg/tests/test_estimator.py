import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from conftest import synthetic_cifar
from ssimnet import ChannelStandardizer, SSIMNetClassifier
from ssimnet.layers import LayerSpec
from ssimnet.model import ModelSpec

TINY = ModelSpec(
    (LayerSpec("ssim", out_channels=8, kernel=(5, 5), stride=1, padding=2),
     LayerSpec("relu"), LayerSpec("maxpool", kernel=(4, 4), stride=4, padding=0),
     LayerSpec("fc", out_channels=10)),
)


def test_params_and_clone():
    clf = SSIMNetClassifier(max_epochs=3, learning_rate=0.05)
    params = clf.get_params()
    assert params["max_epochs"] == 3 and params["architecture"] == "shallow-ssim"
    twin = clone(clf)
    assert twin.get_params() == params and twin is not clf
    assert clf.set_params(c1=1e-3).c1 == 1e-3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SSIMNetClassifier().predict(np.zeros((1, 3, 32, 32)))


def test_fit_predict_learns_synthetic():
    X, y = synthetic_cifar(300, seed=21)
    names = np.array(list("abcdefghij"))[y]
    X = ChannelStandardizer().fit_transform(X)
    clf = SSIMNetClassifier(architecture=TINY, max_epochs=15, random_state=1).fit(X, names)
    assert list(clf.classes_) == list("abcdefghij")
    assert clf.n_features_in_ == 3 * 32 * 32
    assert len(clf.history_) == 15
    Xt, yt = synthetic_cifar(200, seed=22)
    Xt = ChannelStandardizer().fit(synthetic_cifar(300, seed=21)[0]).transform(Xt)
    assert clf.score(Xt, np.array(list("abcdefghij"))[yt]) > 0.5
    proba = clf.predict_proba(Xt.reshape(200, -1))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)


def test_resizes_head_to_class_count():
    X, y = synthetic_cifar(40, seed=3)
    keep = y < 3
    clf = SSIMNetClassifier(architecture=TINY, max_epochs=1).fit(X[keep], y[keep])
    assert clf.decision_function(X[:2]).shape == (2, 3)


def test_pipeline_with_standardizer():
    X, y = synthetic_cifar(100, seed=5)
    pipe = make_pipeline(ChannelStandardizer(),
                         SSIMNetClassifier(architecture=TINY, max_epochs=1))
    pipe.fit(X, y)
    assert pipe.predict(X).shape == (100,)


def test_rejects_wrong_shape():
    X, y = synthetic_cifar(20, seed=5)
    with pytest.raises(ValueError):
        SSIMNetClassifier(architecture=TINY, max_epochs=1).fit(X[:, :, :16, :16], y)
