import numpy as np
import pytest

from ssimnet import checkpoint as ckpt_mod
from ssimnet import config as config_mod
from ssimnet.cli import main
from ssimnet.experiment import read_csv, run_eval


def _small_config(tmp_path, cifar_dir, name="shallow-ssim", lr=None, val_per_class=10):
    cfg = config_mod.builtin_configs()[name]
    text = config_mod.serialize(cfg).replace("val_per_class = 0", f"val_per_class = {val_per_class}")
    if lr is not None:
        text = text.replace("learning_rate = 0.01", f"learning_rate = {lr}")
    path = tmp_path / f"{name}.ini"
    path.write_text(text)
    return path


def _train(tmp_path, cifar_dir, out, epochs=2, per_class=10, **kw):
    cfg = _small_config(tmp_path, cifar_dir, **kw)
    code = main(["train", "--config", str(cfg), "--data-dir", str(cifar_dir), "--out", str(out),
                 "--epochs", str(epochs), "--subset-per-class", str(per_class), "--seed", "0"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, cifar_dir):
    tmp = tmp_path_factory.mktemp("run")
    return _train(tmp, cifar_dir, tmp / "out")


def test_train_outputs(run_dir):
    rows = read_csv(run_dir / "metrics.csv")
    assert [r["epoch"] for r in rows] == ["1", "2"]
    assert set(rows[0]) == {"epoch", "train_loss", "train_acc", "val_loss", "val_acc"}
    assert (run_dir / "metrics.csv").read_text().startswith("# fingerprint=")
    for f in ("best.ckpt", "last.ckpt", "config.ini", "normalization.txt", "timing.csv"):
        assert (run_dir / f).is_file()
    ck = ckpt_mod.load(run_dir / "last.ckpt")
    assert ck.epoch == 2
    assert ck.fingerprint == config_mod.load(run_dir / "config.ini").fingerprint()


def test_train_is_deterministic(run_dir, tmp_path, cifar_dir):
    again = _train(tmp_path, cifar_dir, tmp_path / "again")
    for f in ("metrics.csv", "last.ckpt", "best.ckpt"):
        assert (again / f).read_bytes() == (run_dir / f).read_bytes()


def test_zero_learning_rate_is_pure_evaluation(tmp_path, cifar_dir):
    out = _train(tmp_path, cifar_dir, tmp_path / "lr0", epochs=3, lr=0.0)
    rows = read_csv(out / "metrics.csv")
    assert len({r["val_acc"] for r in rows}) == 1
    assert len({r["val_loss"] for r in rows}) == 1


def test_eval_matches_training_log(run_dir, cifar_dir, capsys):
    final = read_csv(run_dir / "metrics.csv")[-1]
    code = main(["eval", "--checkpoint", str(run_dir / "last.ckpt"),
                 "--data-dir", str(cifar_dir)])
    assert code == 0
    first = read_csv(run_dir / "eval_val.csv")
    assert float(first[0]["accuracy"]) == float(final["val_acc"])
    assert float(first[0]["loss"]) == float(final["val_loss"])
    main(["eval", "--checkpoint", str(run_dir / "last.ckpt"), "--data-dir", str(cifar_dir)])
    assert read_csv(run_dir / "eval_val.csv") == first


def test_attack_rows(run_dir, cifar_dir, tmp_path):
    out = tmp_path / "atk"
    code = main(["attack", "--checkpoint", str(run_dir / "last.ckpt"), "--data-dir", str(cifar_dir),
                 "--epsilons", "0,0.007,0.02", "--subset-per-class", "5", "--out", str(out),
                 "--model-id", "m1"])
    assert code == 0
    rows = read_csv(out / "robustness.csv")
    assert len(rows) == 6
    assert {r["model_id"] for r in rows} == {"m1"}
    for r in rows:
        assert float(r["top5"]) >= float(r["top1"])
    clean = [r for r in rows if r["split"] == "val" and float(r["epsilon"]) == 0][0]
    _, acc = run_eval(run_dir / "last.ckpt", "val", per_class=5, data_dir=cifar_dir)
    assert float(clean["top1"]) == acc


def test_export_filters(run_dir, tmp_path):
    out = tmp_path / "filters"
    assert main(["export-filters", "--checkpoint", str(run_dir / "best.ckpt"), "--out", str(out)]) == 0
    assert (out / "filters.ppm").read_bytes().startswith(b"P6\n47 47\n255\n")
    assert len((out / "filter_norms.txt").read_text().splitlines()) == 32
    assert main(["export-filters", "--checkpoint", str(run_dir / "best.ckpt"),
                 "--layer", "1", "--out", str(out)]) == 1


def test_list_configs(capsys):
    assert main(["list-configs"]) == 0
    text = capsys.readouterr().out
    for name in ("shallow-ssim", "shallow-conv", "ssim-norelu", "deep-ssim", "deep-conv"):
        assert name in text


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert main(["train", "--config", "no-such-config", "--out", str(tmp_path)]) == 1


def test_missing_data_exits_2(tmp_path, monkeypatch):
    monkeypatch.delenv("CIFAR10_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    code = main(["train", "--config", "shallow-conv", "--data-dir", str(tmp_path / "none"),
                 "--out", str(tmp_path / "o"), "--epochs", "1"])
    assert code == 2


def test_fingerprint_mismatch_refused(run_dir, tmp_path, cifar_dir):
    other = _small_config(tmp_path, cifar_dir, name="shallow-conv")
    code = main(["eval", "--checkpoint", str(run_dir / "last.ckpt"), "--config", str(other),
                 "--data-dir", str(cifar_dir)])
    assert code == 1


def test_untrained_model_is_at_chance(tmp_path):
    # labels carry no signal about the images, so any fixed model sits near 10%
    from ssimnet.data import write_cifar_batch
    rng = np.random.default_rng(11)
    d = tmp_path / "noise"
    d.mkdir()
    for name in ("data_batch_1.bin", "test_batch.bin"):
        write_cifar_batch(d / name, rng.integers(0, 256, (10000, 3, 32, 32)) / 255,
                          rng.permutation(np.arange(10000) % 10))
    out = _train(tmp_path, d, tmp_path / "untrained", epochs=1, per_class=5, lr=0.0,
                 val_per_class=50)
    _, acc = run_eval(out / "last.ckpt", "val", data_dir=d)
    assert abs(acc - 0.10) <= 0.05
