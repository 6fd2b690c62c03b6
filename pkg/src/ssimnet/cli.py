"""Command-line entry point: ``ssimnet {train,eval,attack,export-filters,list-configs}``."""
import argparse
import logging
import sys
from pathlib import Path

from . import config as config_io
from . import experiment
from .errors import SsimNetError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _epsilons(raw):
    try:
        return [float(e) for e in raw.split(",") if e.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {raw!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="ssimnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, checkpoint=True):
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, type=Path)
            sp.add_argument("--config", help="config file (default: config.ini beside the checkpoint)")
        sp.add_argument("--data-dir", help="directory with the CIFAR-10 .bin batches")
        sp.add_argument("--out", type=Path)

    t = sub.add_parser("train", help="train a model and write metrics.csv + checkpoints")
    t.add_argument("--config", required=True, help="config file or built-in name")
    t.add_argument("--seed", type=int)
    t.add_argument("--subset-per-class", type=int, help="training images per class (0 = all)")
    t.add_argument("--epochs", type=int, help="override max_epochs")
    common(t, checkpoint=False)

    e = sub.add_parser("eval", help="clean accuracy of a checkpoint")
    common(e)
    e.add_argument("--split", choices=("train", "val"), default="val")
    e.add_argument("--subset-per-class", type=int)

    a = sub.add_parser("attack", help="FGSM robustness sweep")
    common(a)
    a.add_argument("--epsilons", type=_epsilons)
    a.add_argument("--subset-per-class", type=int)
    a.add_argument("--model-id")

    x = sub.add_parser("export-filters", help="write filters.ppm and filter_norms.txt")
    common(x)
    x.add_argument("--layer", type=int, default=0)

    sub.add_parser("list-configs", help="show the built-in experiment configs")
    return p


def _run(args):
    if args.command == "list-configs":
        for name, cfg in config_io.builtin_configs().items():
            print(f"{name:16s} {cfg.model.describe()}")
            print(f"{'':16s} {cfg.description}")
        return EXIT_OK

    if args.command == "train":
        cfg = config_io.load(args.config).with_overrides(
            seed=args.seed, train_per_class=args.subset_per_class, data_dir=args.data_dir,
            output_dir=args.out, max_epochs=args.epochs,
        )
        rows = experiment.run_training(cfg)
        last = rows[-1]
        print(f"{cfg.name}: {len(rows)} epochs, final train_acc={last['train_acc']:.4f} "
              f"val_acc={last['val_acc']:.4f} -> {cfg.output_dir}")
        return EXIT_OK

    out = args.out or args.checkpoint.parent
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "eval":
        loss, acc = experiment.run_eval(
            args.checkpoint, args.split, args.config, args.subset_per_class, args.data_dir,
            out_path=out / f"eval_{args.split}.csv",
        )
        print(f"split={args.split} loss={loss:.6f} accuracy={acc:.6f}")
    elif args.command == "attack":
        report = experiment.run_attack(
            args.checkpoint, args.epsilons, args.config, args.subset_per_class, args.data_dir,
            out_path=out / "robustness.csv", model_id=args.model_id,
        )
        print("split  epsilon    top1     top5")
        for r in report.rows:
            print(f"{r.split:5s}  {r.epsilon:<9g}  {r.top1:.4f}   {r.top5:.4f}")
    elif args.command == "export-filters":
        ppm, norms = experiment.run_export_filters(args.checkpoint, args.layer, out, args.config)
        print(f"wrote {ppm} and {norms}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except SsimNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
