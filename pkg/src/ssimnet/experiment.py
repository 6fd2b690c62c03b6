"""Training, evaluation and attack runs with on-disk outputs."""
import csv
import logging
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import config as config_io
from .adversarial import AttackConfig, robustness_sweep
from .data import ChannelStandardizer, DatasetSplit, find_cifar_dir, load_cifar10, subset
from .errors import DataFormatError, UsageError
from .export import filter_grid, write_norms, write_ppm
from .model import Network
from .optim import SGD, evaluate, train_epoch
from .ssim import SSIMLayer

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
NORMALIZATION_FILE = "normalization.txt"
CONFIG_FILE = "config.ini"


def _num(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


class CsvLog:
    """CSV with a leading ``# fingerprint=...`` comment line and a header row."""

    def __init__(self, path, columns, fingerprint):
        self.path = Path(path)
        self.columns = columns
        with open(self.path, "w", newline="") as fh:
            fh.write(f"# fingerprint={fingerprint}\n")
            csv.writer(fh, lineterminator="\n").writerow(columns)

    def append(self, row):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow([_num(row[c]) for c in self.columns])


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


def _take(split, per_class, seed):
    return split if per_class == 0 else subset(split, per_class, seed)


def prepare_data(cfg, standardizer=None):
    """Load, subset and normalise. Returns ``(train, val, standardizer)``."""
    train, val = load_cifar10(find_cifar_dir(cfg.data.dir or None))
    train = _take(train, cfg.data.train_per_class, cfg.data.subset_seed)
    val = _take(val, cfg.data.val_per_class, cfg.data.subset_seed)
    if standardizer is None:
        standardizer = ChannelStandardizer().fit(train.images)
    return (
        DatasetSplit(standardizer.transform(train.images), train.labels, "train"),
        DatasetSplit(standardizer.transform(val.images), val.labels, "validation"),
        standardizer,
    )


def run_training(cfg, out_dir=None):
    """Train per ``cfg``; writes config.ini, normalization.txt, metrics.csv,
    timing.csv, best.ckpt and last.ckpt. Returns the list of metric rows."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = cfg.fingerprint()
    config_io.save(cfg, out / CONFIG_FILE)

    train, val, standardizer = prepare_data(cfg)
    standardizer.save(out / NORMALIZATION_FILE)

    model = Network(cfg.model, seed=cfg.train.seed)
    opt = SGD(model.named_parameters(), cfg.train)
    metrics = CsvLog(out / "metrics.csv", METRIC_COLUMNS, fingerprint)
    # wall-clock lives in its own file so metrics.csv stays reproducible
    timing = CsvLog(out / "timing.csv", ("epoch", "wall_seconds"), fingerprint)

    rows = []
    best = -1.0
    for epoch in range(cfg.train.max_epochs):
        t0 = time.perf_counter()
        tr_loss, tr_acc = train_epoch(model, train.images, train.labels, opt, epoch)
        va_loss, va_acc = evaluate(model, val.images, val.labels)
        row = dict(epoch=epoch + 1, train_loss=tr_loss, train_acc=tr_acc,
                   val_loss=va_loss, val_acc=va_acc)
        metrics.append(row)
        timing.append(dict(epoch=epoch + 1, wall_seconds=time.perf_counter() - t0))
        rows.append(row)
        log.info("epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                 epoch + 1, tr_loss, tr_acc, va_loss, va_acc)
        if va_acc > best:
            best = va_acc
            ckpt_io.save(out / "best.ckpt",
                         ckpt_io.from_training(model, opt, fingerprint, epoch + 1, va_acc))
    ckpt_io.save(out / "last.ckpt",
                 ckpt_io.from_training(model, opt, fingerprint, cfg.train.max_epochs, best))
    return rows


def load_run(checkpoint_path, config_path=None):
    """Rebuild the model stored in a checkpoint.

    The config defaults to config.ini next to the checkpoint and must match the
    checkpoint's fingerprint. Returns ``(cfg, model, standardizer, ckpt)``.
    """
    checkpoint_path = Path(checkpoint_path)
    if config_path is None:
        config_path = checkpoint_path.parent / CONFIG_FILE
    cfg = config_io.load(config_path)
    ck = ckpt_io.load(checkpoint_path)
    if ck.fingerprint != cfg.fingerprint():
        raise UsageError(
            f"checkpoint fingerprint {ck.fingerprint[:12]} does not match config "
            f"{cfg.fingerprint()[:12]}; refusing to evaluate"
        )
    model = Network(cfg.model, seed=cfg.train.seed)
    ckpt_io.restore(ck, model)
    norm_path = checkpoint_path.parent / NORMALIZATION_FILE
    if not norm_path.is_file():
        raise DataFormatError(f"missing {norm_path}")
    return cfg, model, ChannelStandardizer.load(norm_path), ck


def _split_data(cfg, standardizer, per_class=None, data_dir=None):
    if data_dir is not None:
        cfg = cfg.with_overrides(data_dir=data_dir)
    train, val, _ = prepare_data(cfg, standardizer)
    if per_class:
        val = subset(val, per_class, cfg.data.subset_seed)
        train = subset(train, min(per_class, int(train.class_counts().min())),
                       cfg.data.subset_seed)
    return {"train": train, "val": val}


def run_eval(checkpoint_path, split="val", config_path=None, per_class=None, data_dir=None,
             out_path=None):
    cfg, model, standardizer, ck = load_run(checkpoint_path, config_path)
    data = _split_data(cfg, standardizer, per_class, data_dir)[split]
    loss, acc = evaluate(model, data.images, data.labels)
    if out_path is not None:
        log_ = CsvLog(out_path, ("split", "loss", "accuracy"), ck.fingerprint)
        log_.append(dict(split=split, loss=loss, accuracy=acc))
    return loss, acc


def run_attack(checkpoint_path, epsilons=None, config_path=None, per_class=None,
               data_dir=None, out_path=None, model_id=None):
    cfg, model, standardizer, ck = load_run(checkpoint_path, config_path)
    attack = cfg.attack or AttackConfig()
    if epsilons is not None:
        attack = AttackConfig(tuple(epsilons), attack.domain)
    data = _split_data(cfg, standardizer, per_class, data_dir)
    splits = {name: (d.images, d.labels) for name, d in data.items()}
    report = robustness_sweep(model, splits, attack, channel_std=standardizer.std_)
    if out_path is not None:
        out = CsvLog(out_path, ("model_id", "split", "epsilon", "top1", "top5"), ck.fingerprint)
        for r in report.rows:
            out.append(dict(model_id=model_id or cfg.name, split=r.split, epsilon=r.epsilon,
                            top1=r.top1, top5=r.top5))
    return report


def run_export_filters(checkpoint_path, layer_index, out_dir, config_path=None):
    cfg, model, _, _ = load_run(checkpoint_path, config_path)
    if not 0 <= layer_index < len(model.layers):
        raise UsageError(f"layer index {layer_index} out of range")
    layer = model.layers[layer_index]
    if isinstance(layer, SSIMLayer):
        filters = layer.filter_images()
    elif layer.spec.kind == "conv":
        filters = layer.params["weight"]
    else:
        raise UsageError(f"layer {layer_index} ({layer.spec.kind}) has no spatial filters")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(out / "filters.ppm", filter_grid(filters))
    write_norms(out / "filter_norms.txt", filters)
    return out / "filters.ppm", out / "filter_norms.txt"
