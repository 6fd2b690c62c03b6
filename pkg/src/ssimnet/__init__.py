"""SSIM layers for convolutional networks, in numpy."""
from .adversarial import AttackConfig, fgsm, robustness_sweep, sign, topk_accuracy
from .data import ChannelStandardizer, horizontal_flip, load_cifar_batch, subset
from .errors import (ConfigError, DataFormatError, NumericFault, ShapeError, SsimNetError,
                     StateError, UsageError)
from .estimator import SSIMNetClassifier
from .layers import Conv2D, Dense, LayerSpec, MaxPool2D, ReLU, softmax_xent
from .model import ModelSpec, Network
from .optim import SGD, TrainConfig, evaluate, global_loss, train_epoch
from .ssim import (PatchStatistics, SSIMLayer, SsimConstants, patch_stats, ssim,
                   ssim_closed_form_grad, ssim_components, ssim_simplified)

__version__ = "0.1.0"
