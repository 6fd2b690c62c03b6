"""Experiment configuration files and the built-in experiment set.

Grammar (``configparser`` INI dialect, ``#`` comments)::

    [experiment]   name, description
    [model]        input_shape = C,H,W ; num_classes
    [layer.<i>]    kind ; out_channels ; kernel = KHxKW ; stride ; padding
                   (one section per layer, i = 0, 1, ... in order)
    [ssim]         c1, c2, c3, alpha, beta, gamma
    [train]        learning_rate, momentum, weight_decay, batch_size,
                   max_epochs, augment, seed
    [data]         dir ; train_per_class ; val_per_class ; subset_seed
                   (per_class = 0 means the whole split)
    [attack]       epsilons = comma list ; domain = pixel|normalized
    [output]       dir

Keys absent from a section take the defaults of the matching dataclass.
"""
import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .adversarial import AttackConfig
from .errors import ConfigError, SsimNetError
from .layers import LayerSpec
from .model import ModelSpec
from .optim import TrainConfig
from .ssim import SsimConstants


@dataclass(frozen=True)
class DataConfig:
    dir: str = ""
    train_per_class: int = 500
    val_per_class: int = 0
    subset_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: ModelSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    attack: Optional[AttackConfig] = None
    output_dir: str = "runs"
    description: str = ""

    def validate(self):
        self.model.validate()
        return self

    def fingerprint(self):
        """SHA-256 of the serialised config with filesystem paths blanked."""
        portable = replace(self, data=replace(self.data, dir=""), output_dir="")
        return hashlib.sha256(serialize(portable).encode("utf-8")).hexdigest()

    def with_overrides(self, seed=None, train_per_class=None, data_dir=None, output_dir=None,
                       max_epochs=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, train=replace(cfg.train, seed=seed))
        if max_epochs is not None:
            cfg = replace(cfg, train=replace(cfg.train, max_epochs=max_epochs))
        if train_per_class is not None:
            cfg = replace(cfg, data=replace(cfg.data, train_per_class=train_per_class))
        if data_dir is not None:
            cfg = replace(cfg, data=replace(cfg.data, dir=str(data_dir)))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg):
    lines = [
        "[experiment]",
        f"name = {cfg.name}",
        f"description = {cfg.description}",
        "",
        "[model]",
        "input_shape = " + ",".join(str(d) for d in cfg.model.input_shape),
        f"num_classes = {cfg.model.num_classes}",
        "",
    ]
    for i, ls in enumerate(cfg.model.layers):
        lines.append(f"[layer.{i}]")
        lines.append(f"kind = {ls.kind}")
        if ls.out_channels is not None:
            lines.append(f"out_channels = {ls.out_channels}")
        if ls.kernel is not None:
            lines.append(f"kernel = {ls.kernel[0]}x{ls.kernel[1]}")
            lines.append(f"stride = {ls.stride}")
            lines.append(f"padding = {ls.padding}")
        lines.append("")
    k = cfg.model.ssim
    lines.append("[ssim]")
    for key in ("c1", "c2", "c3", "alpha", "beta", "gamma"):
        lines.append(f"{key} = {_fmt(float(getattr(k, key)))}")
    lines.append("")
    lines.append("[train]")
    t = cfg.train
    for key in ("learning_rate", "momentum", "weight_decay", "batch_size", "max_epochs",
                "augment", "seed"):
        lines.append(f"{key} = {_fmt(getattr(t, key))}")
    lines.append("")
    d = cfg.data
    lines += [
        "[data]",
        f"dir = {d.dir}",
        f"train_per_class = {d.train_per_class}",
        f"val_per_class = {d.val_per_class}",
        f"subset_seed = {d.subset_seed}",
        "",
    ]
    if cfg.attack is not None:
        lines += [
            "[attack]",
            "epsilons = " + ",".join(_fmt(e) for e in cfg.attack.epsilon_sweep),
            f"domain = {cfg.attack.domain}",
            "",
        ]
    lines += ["[output]", f"dir = {cfg.output_dir}", ""]
    return "\n".join(lines)


def _get(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r}: {exc}") from exc


def _bool(raw):
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _kernel(raw):
    parts = raw.lower().split("x")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError("kernel must look like 5x5")
    return (int(parts[0]), int(parts[1]))


def parse(text):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sec = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731
    try:
        exp = sec("experiment")
        name = _get(exp, "name", str, "unnamed")
        description = _get(exp, "description", str, "")

        layer_sections = sorted(
            (s for s in cp.sections() if s.startswith("layer.")),
            key=lambda s: int(s.split(".", 1)[1]),
        )
        if [int(s.split(".", 1)[1]) for s in layer_sections] != list(range(len(layer_sections))):
            raise ConfigError("layer sections must be numbered 0, 1, 2, ... without gaps")
        layers = []
        for s in layer_sections:
            ls = cp[s]
            layers.append(LayerSpec(
                kind=_get(ls, "kind", str, ""),
                out_channels=_get(ls, "out_channels", int, None),
                kernel=_get(ls, "kernel", _kernel, None),
                stride=_get(ls, "stride", int, None),
                padding=_get(ls, "padding", int, None),
            ))

        s = sec("ssim")
        base = SsimConstants()
        constants = SsimConstants(
            c1=_get(s, "c1", float, base.c1),
            c2=_get(s, "c2", float, base.c2),
            c3=_get(s, "c3", float, None),
            alpha=_get(s, "alpha", float, 1.0),
            beta=_get(s, "beta", float, 1.0),
            gamma=_get(s, "gamma", float, 1.0),
        )
        m = sec("model")
        model = ModelSpec(
            layers=tuple(layers),
            input_shape=_get(m, "input_shape", lambda r: tuple(int(v) for v in r.split(",")),
                             (3, 32, 32)),
            num_classes=_get(m, "num_classes", int, 10),
            ssim=constants,
        )

        t = sec("train")
        td = TrainConfig()
        train = TrainConfig(
            learning_rate=_get(t, "learning_rate", float, td.learning_rate),
            momentum=_get(t, "momentum", float, td.momentum),
            weight_decay=_get(t, "weight_decay", float, td.weight_decay),
            batch_size=_get(t, "batch_size", int, td.batch_size),
            max_epochs=_get(t, "max_epochs", int, td.max_epochs),
            augment=_get(t, "augment", _bool, td.augment),
            seed=_get(t, "seed", int, td.seed),
        )

        d = sec("data")
        dd = DataConfig()
        data = DataConfig(
            dir=_get(d, "dir", str, dd.dir),
            train_per_class=_get(d, "train_per_class", int, dd.train_per_class),
            val_per_class=_get(d, "val_per_class", int, dd.val_per_class),
            subset_seed=_get(d, "subset_seed", int, dd.subset_seed),
        )

        a = sec("attack")
        attack = None
        if a is not None:
            attack = AttackConfig(
                epsilon_sweep=_get(a, "epsilons", lambda r: tuple(float(e) for e in r.split(",")),
                                   AttackConfig().epsilon_sweep),
                domain=_get(a, "domain", str, "pixel"),
            )
        output_dir = _get(sec("output"), "dir", str, "runs")
    except ConfigError:
        raise
    except SsimNetError as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        name=name, model=model, train=train, data=data, attack=attack,
        output_dir=output_dir, description=description,
    ).validate()


def load(path_or_name):
    """Read a config file, or return the built-in config of that name."""
    builtins = builtin_configs()
    key = str(path_or_name)
    if key.startswith("builtin:"):
        key = key[len("builtin:"):]
        if key not in builtins:
            raise ConfigError(f"no built-in config named {key!r}")
    path = Path(path_or_name)
    if path.is_file():
        return parse(path.read_text())
    if key in builtins:
        return builtins[key]
    raise ConfigError(f"config {path_or_name!r} is neither a file nor a built-in name")


def save(cfg, path):
    Path(path).write_text(serialize(cfg))


# -- built-in experiments ----------------------------------------------------

def _win(kind, out, k, s=1, p=None):
    return LayerSpec(kind, out_channels=out, kernel=(k, k), stride=s,
                     padding=(k - 1) // 2 if p is None else p)


RELU = LayerSpec("relu")
POOL = LayerSpec("maxpool", kernel=(2, 2), stride=2, padding=0)
FC10 = LayerSpec("fc", out_channels=10)
DESK_EPSILONS = AttackConfig()


def _shallow(first_kind, first_relu):
    layers = [_win(first_kind, 32, 7)]
    if first_relu:
        layers.append(RELU)
    layers += [POOL, _win("conv", 32, 5), RELU, POOL, FC10]
    return ModelSpec(tuple(layers))


def _deep(head_kind):
    layers = []
    for _ in range(3):
        layers += [_win("conv", 32, 5), RELU, POOL]
    layers += [_win(head_kind, 64, 3), RELU, FC10]
    return ModelSpec(tuple(layers))


def builtin_configs():
    desk = TrainConfig(max_epochs=30)
    desk_data = DataConfig(train_per_class=500, val_per_class=0)
    full = TrainConfig(max_epochs=500)
    full_data = DataConfig(train_per_class=0, val_per_class=0)

    table = {
        "shallow-ssim": (
            _shallow("ssim", True),
            "7x7 SSIM - ReLU - MaxPOOL - 5x5 CONV - ReLU - MaxPOOL - FC, 32 filters per stage.",
        ),
        "shallow-conv": (
            _shallow("conv", False),
            "7x7 CONV - MaxPOOL - 5x5 CONV - ReLU - MaxPOOL - FC. No ReLU after the first "
            "conv, matching the reference layer chain.",
        ),
        "ssim-norelu": (
            _shallow("ssim", False),
            "Ablation twin of shallow-ssim with the ReLU after the SSIM layer removed.",
        ),
        "deep-ssim": (
            _deep("ssim"),
            "Approximation of the paired deep network: three 5x5/32 conv+ReLU+pool stages, "
            "then a 3x3/64 SSIM feature stage. Twin of deep-conv.",
        ),
        "deep-conv": (
            _deep("conv"),
            "Approximation of the paired deep network: three 5x5/32 conv+ReLU+pool stages, "
            "then a 3x3/64 conv feature stage. Twin of deep-ssim.",
        ),
    }
    targets = {
        "shallow-ssim": "77.26", "shallow-conv": "70.8",
        "deep-ssim": "78.0", "deep-conv": "73.8",
    }
    out = {}
    for name, (model, desc) in table.items():
        out[name] = ExperimentConfig(
            name=name, model=model, train=desk, data=desk_data, attack=DESK_EPSILONS,
            output_dir=f"runs/{name}", description=desc + " Desk scale: 500 images/class, 30 epochs.",
        )
        if name in targets:
            long_name = f"{name}-full"
            out[long_name] = ExperimentConfig(
                name=long_name, model=model, train=full, data=full_data, attack=DESK_EPSILONS,
                output_dir=f"runs/{long_name}",
                description=desc + f" Full data, 500 epochs; target validation accuracy "
                f"{targets[name]}% (reproduction tolerance +-3 points).",
            )
    return out
