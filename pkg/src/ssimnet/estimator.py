"""scikit-learn compatible classifier around the SSIM / conv networks."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import builtin_configs
from .errors import ConfigError
from .layers import LayerSpec
from .model import ModelSpec, Network
from .optim import SGD, TrainConfig, train_epoch
from .ssim import SsimConstants


class SSIMNetClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier trained with momentum SGD.

    Parameters
    ----------
    architecture : str or ModelSpec, default="shallow-ssim"
        A built-in config name or an explicit layer chain. The final FC layer is
        resized to the number of classes seen in ``fit``.
    learning_rate, momentum, weight_decay, batch_size, max_epochs, augment :
        Optimiser settings, see :class:`ssimnet.optim.TrainConfig`.
    c1, c2 : float
        SSIM stability constants.
    random_state : int
        Seeds weight initialisation, shuffling and flips.

    ``X`` is either (n, C, H, W) or flat (n, C*H*W) in the architecture's input
    shape.
    """

    def __init__(self, architecture="shallow-ssim", learning_rate=0.01, momentum=0.9,
                 weight_decay=1e-4, batch_size=32, max_epochs=30, augment=True,
                 c1=1e-4, c2=9e-4, random_state=0):
        self.architecture = architecture
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.augment = augment
        self.c1 = c1
        self.c2 = c2
        self.random_state = random_state

    def _base_spec(self):
        if isinstance(self.architecture, ModelSpec):
            return self.architecture
        configs = builtin_configs()
        if self.architecture not in configs:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        return configs[self.architecture].model

    def _as_images(self, X, input_shape):
        if X.ndim == 2:
            if X.shape[1] != int(np.prod(input_shape)):
                raise ValueError(
                    f"X has {X.shape[1]} features, expected {int(np.prod(input_shape))}"
                )
            return X.reshape(len(X), *input_shape)
        if X.shape[1:] != tuple(input_shape):
            raise ValueError(f"X images have shape {X.shape[1:]}, expected {tuple(input_shape)}")
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        base = self._base_spec()
        layers = list(base.layers)
        if layers[-1].kind != "fc":
            raise ConfigError("architecture must end with an fc layer")
        layers[-1] = LayerSpec("fc", out_channels=len(self.classes_))
        spec = ModelSpec(tuple(layers), base.input_shape, len(self.classes_),
                         SsimConstants(c1=self.c1, c2=self.c2))
        images = self._as_images(X, spec.input_shape)

        self.train_config_ = TrainConfig(
            learning_rate=self.learning_rate, momentum=self.momentum,
            weight_decay=self.weight_decay, batch_size=self.batch_size,
            max_epochs=self.max_epochs, augment=self.augment, seed=self.random_state,
        )
        self.model_ = Network(spec, seed=self.random_state)
        self.optimizer_ = SGD(self.model_.named_parameters(), self.train_config_)
        self.history_ = []
        for epoch in range(self.max_epochs):
            loss, acc = train_epoch(self.model_, images, y_idx, self.optimizer_, epoch)
            self.history_.append({"epoch": epoch + 1, "loss": loss, "accuracy": acc})
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        return self.model_.predict_logits(self._as_images(X, self.model_.spec.input_shape))

    def predict_proba(self, X):
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]
