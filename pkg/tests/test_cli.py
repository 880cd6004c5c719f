import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from irstlab import cli
from irstlab.cli import ConfigError, main, resolve_config
from irstlab.image_core import GrayImage, read_pbm, write_pbm, write_pgm
from irstlab.rng import Rng
from irstlab.synth import load_dataset

SMALL_CONFIG = {
    "version": 1,
    "seed": 7,
    "dataset": {"n": 8, "size": 32, "n_targets": 1, "train_frac": 0.7},
    "augmentation": {"count": 4},
    "pixel_prior": {"channels": 8, "blocks": 1, "epochs": 1, "lr": 1e-3, "batch_size": 2},
    "diff_prior": {"latent_dim": 4, "T": 25, "hidden": 16, "train_steps": 3,
                   "strength": 0.5, "batch_size": 4},
    "detector": {"channels": 4, "epochs": 1, "lr": 1e-3, "batch_size": 2},
    "ablation": {"arms": ["baseline", "mosaic"], "counts": [2]},
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared workspace: config file plus a small synthesized dataset."""
    root = tmp_path_factory.mktemp("cliws")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(SMALL_CONFIG))
    rc = main(["synth", "--config", str(cfg_path), "--out", str(root / "data")])
    assert rc == 0
    return root, cfg_path


def run(ws, *argv):
    _, cfg_path = ws
    return main([argv[0], "--config", str(cfg_path), *argv[1:]])


# --- config resolution ------------------------------------------------------

def test_defaults_pass_schema():
    cfg = resolve_config({})
    assert cfg["version"] == 1
    assert cfg["dataset"]["n"] == 64


def test_overrides_merge_deeply():
    cfg = resolve_config({"detector": {"epochs": 3}}, seed=42)
    assert cfg["detector"]["epochs"] == 3
    assert cfg["detector"]["channels"] == 16  # untouched default
    assert cfg["seed"] == 42


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        resolve_config({"detecter": {"epochs": 3}})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError):
        resolve_config({"dataset": {"sice": 32}})


def test_bad_enum_rejected():
    with pytest.raises(ConfigError):
        resolve_config({"dataset": {"background_kind": "lava"}})
    with pytest.raises(ConfigError):
        resolve_config({"augmentation": {"method": "collage"}})


def test_missing_config_file_exits_2(tmp_path, capsys):
    rc = main(["synth", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_schema_violation_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": {"background_kind": "lava"}}))
    rc = main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "schema" in capsys.readouterr().err


def test_numeric_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(args, cfg):
        raise FloatingPointError("non-finite training loss at epoch 0")

    monkeypatch.setitem(cli._COMMANDS, "synth", boom)
    rc = main(["synth", "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


# --- subcommands -------------------------------------------------------------

def test_synth_writes_dataset_and_sidecar(ws):
    root, _ = ws
    out = root / "data"
    samples, manifest = load_dataset(out)
    assert len(samples) == 8
    assert all(s.meta["split"] in ("train", "test") for s in samples)
    sidecar = json.loads((out / "sidecar.json").read_text())
    assert sidecar["command"] == "synth"
    for rel, digest in sidecar["outputs"].items():
        got = hashlib.sha256((out / rel).read_bytes()).hexdigest()
        assert got == digest


def test_synth_is_deterministic(ws, tmp_path):
    root, cfg_path = ws
    rc = main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "again")])
    assert rc == 0
    a = json.loads((root / "data" / "sidecar.json").read_text())["outputs"]
    b = json.loads((tmp_path / "again" / "sidecar.json").read_text())["outputs"]
    assert a == b


def test_augment_mosaic(ws):
    root, _ = ws
    rc = run(ws, "augment", "--data", str(root / "data"),
             "--method", "mosaic", "--n", "3", "--out", str(root / "aug_mosaic"))
    assert rc == 0
    pool, manifest = load_dataset(root / "aug_mosaic")
    assert len(pool) == 3
    assert all("mosaic" in s.meta["lineage"] for s in pool)
    assert all(s.image.shape == (32, 32) for s in pool)


def test_augment_pixel_prior_requires_checkpoint(ws, tmp_path):
    root, _ = ws
    rc = run(ws, "augment", "--data", str(root / "data"),
             "--method", "pixel_prior", "--n", "1", "--out", str(tmp_path / "o"))
    assert rc == 2


def test_train_pixel_prior_then_harmonized_augment(ws):
    root, _ = ws
    rc = run(ws, "train-pixel-prior", "--data", str(root / "data"),
             "--out", str(root / "pp"))
    assert rc == 0
    assert (root / "pp" / "pixel_prior.ckpt").exists()
    log = json.loads((root / "pp" / "train_log.json").read_text())
    assert len(log) == 1 and np.isfinite(log[0]["loss"])
    rc = run(ws, "augment", "--data", str(root / "data"),
             "--method", "pixel_prior", "--n", "2",
             "--pp-ckpt", str(root / "pp" / "pixel_prior.ckpt"),
             "--out", str(root / "aug_pp"))
    assert rc == 0
    pool, _ = load_dataset(root / "aug_pp")
    assert all(s.meta["lineage"][-1] == "harmonize" for s in pool)


def test_train_diff_prior_then_resample(ws):
    root, _ = ws
    rc = run(ws, "train-diff-prior", "--data", str(root / "data"),
             "--out", str(root / "dp"))
    assert rc == 0
    assert (root / "dp" / "ae.bin").exists()
    assert (root / "dp" / "denoiser.ckpt").exists()
    rc = run(ws, "resample", "--data", str(root / "data"),
             "--ae", str(root / "dp" / "ae.bin"),
             "--den-ckpt", str(root / "dp" / "denoiser.ckpt"),
             "--out", str(root / "resampled"))
    assert rc == 0
    pool, _ = load_dataset(root / "resampled")
    assert len(pool) == 8
    assert all(s.meta["lineage"][-1] == "resample" for s in pool)
    # strength 0.5 of T=25 -> 13 reverse steps recorded
    assert all(s.meta["resample_t"] == 13 for s in pool)


def test_train_detector_then_predict(ws):
    root, _ = ws
    rc = run(ws, "train-detector", "--data", str(root / "data"),
             "--out", str(root / "det"))
    assert rc == 0
    ckpt = root / "det" / "detector.ckpt"
    assert ckpt.exists()
    samples, _ = load_dataset(root / "data")
    img_path = root / "one.pgm"
    write_pgm(samples[0].image, img_path)
    rc = run(ws, "predict", "--ckpt", str(ckpt), "--image", str(img_path),
             "--out", str(root / "pred"))
    assert rc == 0
    mask = read_pbm(root / "pred" / "prediction.pbm")
    assert mask.bits.shape == (32, 32)


def test_detect_tophat(ws, tmp_path):
    root, _ = ws
    data = np.clip(0.3 + 0.02 * Rng(1).standard_normal((32, 32)), 0, 1)
    data[15:17, 15:17] = 0.95
    path = tmp_path / "scene.pgm"
    write_pgm(GrayImage(data), path)
    rc = run(ws, "detect", "--method", "tophat", "--image", str(path),
             "--out", str(tmp_path / "det"))
    assert rc == 0
    mask = read_pbm(tmp_path / "det" / "mask.pbm")
    assert mask.bits[15:17, 15:17].all()


def test_eval_perfect_predictions(ws, tmp_path):
    root, _ = ws
    samples, _ = load_dataset(root / "data")
    gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
    gt_dir.mkdir(), pred_dir.mkdir()
    for i, s in enumerate(samples[:4]):
        write_pbm(s.mask, gt_dir / f"{i:03d}.pbm")
        write_pbm(s.mask, pred_dir / f"{i:03d}.pbm")
    rc = run(ws, "eval", "--pred", str(pred_dir), "--gt", str(gt_dir),
             "--out", str(tmp_path / "m"))
    assert rc == 0
    m = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert m["iou"] == pytest.approx(1.0)
    assert m["pd"] == pytest.approx(1.0)
    assert m["fa"] == 0.0


def test_eval_missing_prediction_exits_2(ws, tmp_path):
    root, _ = ws
    samples, _ = load_dataset(root / "data")
    gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
    gt_dir.mkdir(), pred_dir.mkdir()
    write_pbm(samples[0].mask, gt_dir / "000.pbm")
    rc = run(ws, "eval", "--pred", str(pred_dir), "--gt", str(gt_dir),
             "--out", str(tmp_path / "m"))
    assert rc == 2


def test_ablation_and_report(ws):
    root, _ = ws
    rc = run(ws, "ablation", "--out", str(root / "abl"))
    assert rc == 0
    report = json.loads((root / "abl" / "reports" / "report.json").read_text())
    arms = [r["arm"] for r in report["rows"]]
    assert arms == ["baseline", "mosaic"]
    assert report["rows"][0]["augmented"] == 0
    assert report["rows"][1]["augmented"] == 2
    for row in report["rows"]:
        for key in ("iou", "pd", "fa"):
            assert np.isfinite(row["metrics"][key])
    assert (root / "abl" / "config.resolved").exists()
    rc = run(ws, "report", "--run", str(root / "abl"))
    assert rc == 0
