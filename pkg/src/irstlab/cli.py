"""Experiment orchestration and command-line interface.

Every stochastic stage derives its seed from the global seed salted with
the stage name, so runs are reproducible bit for bit from the resolved
config. Subcommands write a JSON sidecar recording resolved parameters
and content hashes of their outputs.

Exit codes: 0 success, 2 missing input / config schema violation,
3 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .augment import DegradeConfig, PasteConfig, cutmix, mixup, mosaic
from .baselines import PatchImageConfig, ipi_detect, lcm, threshold_to_mask, tophat
from .detector import DetectorNet, det_predict, det_train
from .diff_prior import (
    MlpDenoiser,
    NoiseSchedule,
    ae_fit,
    denoiser_train,
    encode,
    load_ae,
    resample_image,
    save_ae,
)
from .image_core import GrayImage, quadrant_stats, read_pgm, write_pbm, write_pgm
from .metrics import evaluate_set
from .pixel_prior import PixelPriorNet, harmonize, pp_train
from .rng import Rng, derive_seed
from .synth import (
    BACKGROUND_KINDS,
    Sample,
    SceneSpec,
    load_dataset,
    make_dataset,
    save_dataset,
)

__all__ = ["main", "run_ablation", "run_scale_sweep", "resolve_config", "DEFAULT_CONFIG"]

AUGMENT_METHODS = ("none", "mosaic", "cutmix", "mixup", "pixel_prior", "diff_mosaic")

DEFAULT_CONFIG = {
    "version": 1,
    "seed": 0,
    "dataset": {
        "n": 64,
        "size": 64,
        "background_kind": "mixed",
        "n_targets": 2,
        "target_kind": "gaussian-blob",
        "scr_range": [3.0, 9.0],
        "train_frac": 0.7,
    },
    "augmentation": {
        "method": "none",
        "count": 24,
        "mixup_lambda": 0.5,
        "degrade": DegradeConfig().to_dict(),
        "paste": PasteConfig().to_dict(),
    },
    "pixel_prior": {"channels": 32, "blocks": 4, "epochs": 12, "lr": 1e-3, "batch_size": 4},
    "diff_prior": {
        "latent_dim": 64,
        "T": 100,
        "hidden": 256,
        "train_steps": 400,
        "lr": 1e-3,
        "strength": 0.6,
        "batch_size": 32,
    },
    "detector": {"channels": 16, "epochs": 10, "lr": 5e-4, "batch_size": 4, "threshold": 0.5},
    "eval": {"match_dist": 3.0, "easy_scr_min": 5.0},
    "ablation": {
        "arms": ["baseline", "mosaic", "pixel_prior", "diff_mosaic"],
        "counts": [24],
    },
}

_RANGE2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "seed": {"type": "integer"},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "size": {"type": "integer", "minimum": 16},
                "background_kind": {"enum": list(BACKGROUND_KINDS) + ["mixed"]},
                "n_targets": {"type": "integer", "minimum": 0, "maximum": 8},
                "target_kind": {"enum": ["point", "gaussian-blob", "extended"]},
                "scr_range": _RANGE2,
                "train_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "augmentation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": list(AUGMENT_METHODS)},
                "count": {"type": "integer", "minimum": 0},
                "mixup_lambda": {"type": "number", "minimum": 0, "maximum": 1},
                "degrade": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "orders": {"type": "integer", "minimum": 1},
                        "blur_sigma_range": _RANGE2,
                        "resize_scale_range": _RANGE2,
                        "noise_sigma_range": _RANGE2,
                    },
                },
                "paste": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "region_frac_range": _RANGE2,
                        "shape": {"const": "rectangle"},
                        "invert_convention": {"type": "boolean"},
                    },
                },
            },
        },
        "pixel_prior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "channels": {"type": "integer", "minimum": 4},
                "blocks": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
            },
        },
        "diff_prior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "latent_dim": {"type": "integer", "minimum": 1},
                "T": {"type": "integer", "minimum": 1},
                "hidden": {"type": "integer", "minimum": 1},
                "train_steps": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "minimum": 0},
                "strength": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
            },
        },
        "detector": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "channels": {"type": "integer", "minimum": 4},
                "epochs": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "match_dist": {"type": "number", "minimum": 0},
                "easy_scr_min": {"type": "number", "minimum": 0},
            },
        },
        "ablation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arms": {"type": "array", "items": {"enum": ["baseline"] + list(AUGMENT_METHODS)}},
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
    },
}


class ConfigError(Exception):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(overrides: dict | None = None, seed: int | None = None) -> dict:
    """Merge user overrides over defaults and schema-validate the result."""
    import jsonschema

    overrides = overrides or {}
    try:
        jsonschema.validate(overrides, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config schema violation: {e.message}") from e
    cfg = _deep_merge(DEFAULT_CONFIG, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    with open(p) as f:
        return json.load(f)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_sidecar(out_dir: Path, command: str, resolved: dict) -> None:
    hashes = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "sidecar.json":
            hashes[str(p.relative_to(out_dir))] = _sha256(p)
    sidecar = {"command": command, "resolved": resolved, "outputs": hashes}
    with open(out_dir / "sidecar.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Dataset and augmentation pools

def _build_dataset(cfg: dict):
    d = cfg["dataset"]
    kinds = list(BACKGROUND_KINDS) if d["background_kind"] == "mixed" else [d["background_kind"]]
    template = SceneSpec(
        size=d["size"],
        background_kind=kinds[0],
        n_targets=d["n_targets"],
        target_kind=d["target_kind"],
        scr_range=tuple(d["scr_range"]),
    )
    seed = derive_seed(cfg["seed"], "dataset")
    samples, manifest = make_dataset(d["n"], template, seed, train_frac=d["train_frac"],
                                     background_kinds=kinds)
    return samples, manifest


def _split(samples: list[Sample]):
    train = [s for s in samples if s.meta.get("split") == "train"]
    test = [s for s in samples if s.meta.get("split") == "test"]
    return train, test


def _pick(rng: Rng, pool: list[Sample], n: int) -> list[Sample]:
    idx = rng.integers(0, len(pool), n)
    return [pool[int(i)] for i in idx]


def train_pixel_prior_net(train: list[Sample], cfg: dict, seed: int) -> tuple[PixelPriorNet, list]:
    pp_cfg = cfg["pixel_prior"]
    net = PixelPriorNet(Rng(derive_seed(seed, "pp-init")),
                        channels=pp_cfg["channels"], blocks=pp_cfg["blocks"])
    log = pp_train(
        net, train,
        DegradeConfig.from_dict(cfg["augmentation"]["degrade"]),
        PasteConfig.from_dict(cfg["augmentation"]["paste"]),
        epochs=pp_cfg["epochs"], lr=pp_cfg["lr"],
        rng=Rng(derive_seed(seed, "pp-train")), batch_size=pp_cfg["batch_size"],
    )
    return net, log


def train_diff_prior_models(images: list[GrayImage], cfg: dict, seed: int):
    dp = cfg["diff_prior"]
    k = min(dp["latent_dim"], len(images))
    ae = ae_fit(images, k=k)
    sched = NoiseSchedule(T=dp["T"])
    den = MlpDenoiser(k, Rng(derive_seed(seed, "den-init")), hidden=dp["hidden"])
    latents = np.stack([encode(ae, im) for im in images])
    log = denoiser_train(den, latents, sched, steps=dp["train_steps"], lr=dp["lr"],
                         rng=Rng(derive_seed(seed, "den-train")),
                         batch_size=dp["batch_size"])
    return ae, den, sched, log


def generate_pool(method: str, count: int, train: list[Sample], cfg: dict, seed: int,
                  pp_net: PixelPriorNet | None = None, diff_models=None) -> list[Sample]:
    """Generate `count` augmented samples of the requested kind from the
    training split. pixel_prior / diff_mosaic need their trained models."""
    if method in ("none", "baseline") or count == 0:
        return []
    size = cfg["dataset"]["size"]
    degrade_cfg = DegradeConfig.from_dict(cfg["augmentation"]["degrade"])
    paste_cfg = PasteConfig.from_dict(cfg["augmentation"]["paste"])
    out = []
    for i in range(count):
        rng = Rng(derive_seed(seed, "pool", method, i))
        if method == "mosaic":
            out.append(mosaic(_pick(rng.spawn("pick"), train, 4), size, rng.spawn("op")))
        elif method == "cutmix":
            a, b = _pick(rng.spawn("pick"), train, 2)
            out.append(cutmix(a, b, rng.spawn("op")))
        elif method == "mixup":
            a, b = _pick(rng.spawn("pick"), train, 2)
            out.append(mixup(a, b, cfg["augmentation"]["mixup_lambda"]))
        elif method == "pixel_prior":
            mos = mosaic(_pick(rng.spawn("pick"), train, 4), size, rng.spawn("op"))
            out.append(harmonize(pp_net, mos, degrade_cfg, paste_cfg, rng.spawn("harmonize")))
        elif method == "diff_mosaic":
            ae, den, sched = diff_models
            mos = mosaic(_pick(rng.spawn("pick"), train, 4), size, rng.spawn("op"))
            smooth = harmonize(pp_net, mos, degrade_cfg, paste_cfg, rng.spawn("harmonize"))
            out.append(resample_image(ae, den, sched, smooth,
                                      cfg["diff_prior"]["strength"], rng.spawn("resample")))
        else:
            raise ConfigError(f"unknown augmentation method {method!r}")
    return out


# ---------------------------------------------------------------------------
# Evaluation helpers

def _easy_subset(test: list[Sample], scr_min: float) -> list[int]:
    idxs = []
    for i, s in enumerate(test):
        scrs = s.meta.get("scr_targets", [])
        if scrs and min(scrs) >= scr_min:
            idxs.append(i)
    return idxs


def _eval_detector(net: DetectorNet, test: list[Sample], cfg: dict) -> dict:
    thr = cfg["detector"]["threshold"]
    match = cfg["eval"]["match_dist"]
    preds = [det_predict(net, s.image, threshold=thr) for s in test]
    gts = [s.mask for s in test]
    full = evaluate_set(preds, gts, match_dist=match)
    easy_idx = _easy_subset(test, cfg["eval"]["easy_scr_min"])
    easy = evaluate_set([preds[i] for i in easy_idx], [gts[i] for i in easy_idx],
                        match_dist=match) if easy_idx else None
    return {
        "metrics": full.to_dict(),
        "easy_metrics": easy.to_dict() if easy else None,
        "n_test": len(test),
        "n_easy": len(easy_idx),
    }


def _pool_quadrant_stats(pool: list[Sample]) -> dict | None:
    if not pool:
        return None
    discs = [quadrant_stats(s.image).quadrant_discrepancy for s in pool]
    return {"mean": float(np.mean(discs)), "max": float(np.max(discs)), "n": len(discs)}


# ---------------------------------------------------------------------------
# Ablation and sweep

def _run_arm(arm: str, count: int, train, test, cfg: dict, run_dir: Path,
             shared: dict) -> dict:
    seed = cfg["seed"]
    pp_net = None
    diff_models = None
    if arm in ("pixel_prior", "diff_mosaic"):
        if "pp" not in shared:
            shared["pp"], shared["pp_log"] = train_pixel_prior_net(train, cfg, seed)
        pp_net = shared["pp"]
    if arm == "diff_mosaic":
        if "diff" not in shared:
            # fit the latent space on training images plus harmonized mosaics
            # so the diffusion prior spans mosaic statistics
            degrade_cfg = DegradeConfig.from_dict(cfg["augmentation"]["degrade"])
            paste_cfg = PasteConfig.from_dict(cfg["augmentation"]["paste"])
            extra = []
            n_fit = max(cfg["diff_prior"]["latent_dim"] + 8 - len(train), 16)
            for i in range(n_fit):
                rng = Rng(derive_seed(seed, "ae-fit", i))
                mos = mosaic(_pick(rng.spawn("pick"), train, 4),
                             cfg["dataset"]["size"], rng.spawn("op"))
                extra.append(harmonize(pp_net, mos, degrade_cfg, paste_cfg, rng.spawn("h")))
            images = [s.image for s in train] + [s.image for s in extra]
            ae, den, sched, _ = train_diff_prior_models(images, cfg, seed)
            shared["diff"] = (ae, den, sched)
        diff_models = shared["diff"]
    method = "none" if arm == "baseline" else arm
    pool = generate_pool(method, count, train, cfg, seed, pp_net=pp_net, diff_models=diff_models)
    if pool:
        pool_dir = run_dir / "data" / f"aug_{arm}_{count}"
        save_dataset(pool, {"method": arm, "count": count, "seed": seed}, pool_dir)
    det_cfg = cfg["detector"]
    net = DetectorNet(Rng(derive_seed(seed, "det-init", arm, count)), channels=det_cfg["channels"])
    log = det_train(net, list(train) + pool, epochs=det_cfg["epochs"], lr=det_cfg["lr"],
                    rng=Rng(derive_seed(seed, "det-train", arm, count)),
                    batch_size=det_cfg["batch_size"])
    ckpt = run_dir / "checkpoints" / f"detector_{arm}_{count}.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(ckpt, net.parameters(), extra=net.config())
    evaluation = _eval_detector(net, test, cfg)
    return {
        "arm": arm,
        "augmented": len(pool),
        "n_train_real": len(train),
        "n_train_total": len(train) + len(pool),
        "final_train_loss": log[-1]["loss"] if log else None,
        "pool_quadrant_discrepancy": _pool_quadrant_stats(pool),
        "checkpoint": str(ckpt.relative_to(run_dir)),
        **evaluation,
    }


def _write_report(run_dir: Path, cfg: dict, rows: list[dict], kind: str) -> dict:
    reports = run_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    report = {"kind": kind, "config": cfg, "rows": rows}
    with open(reports / "report.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    with open(reports / "table.txt", "w") as f:
        f.write(format_table(rows))
    with open(run_dir / "config.resolved", "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
    return report


def format_table(rows: list[dict]) -> str:
    header = f"{'arm':<14} {'#aug':>5} {'IoU':>8} {'Pd':>8} {'Fa(1e-6)':>10} {'easyIoU':>8} {'poolQD':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        m = r["metrics"]
        easy = r.get("easy_metrics")
        qd = r.get("pool_quadrant_discrepancy")
        lines.append(
            f"{r['arm']:<14} {r['augmented']:>5d} {m['iou']:>8.4f} {m['pd']:>8.4f} "
            f"{m['fa'] * 1e6:>10.2f} "
            f"{(easy['iou'] if easy else float('nan')):>8.4f} "
            f"{(qd['mean'] if qd else float('nan')):>8.4f}"
        )
    return "\n".join(lines) + "\n"


def run_ablation(cfg: dict, out_dir) -> dict:
    """Train one detector per ablation arm and report metrics per arm."""
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    samples, manifest = _build_dataset(cfg)
    save_dataset(samples, manifest, run_dir / "data" / "real")
    train, test = _split(samples)
    count = cfg["ablation"]["counts"][0]
    shared: dict = {}
    rows = []
    for arm in cfg["ablation"]["arms"]:
        rows.append(_run_arm(arm, 0 if arm == "baseline" else count, train, test, cfg,
                             run_dir, shared))
    return _write_report(run_dir, cfg, rows, "ablation")


def run_scale_sweep(cfg: dict, out_dir, method: str | None = None) -> dict:
    """Sweep the augmentation count for one method; rows sorted ascending."""
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    method = method or cfg["augmentation"]["method"]
    if method == "none":
        method = "mosaic"
    samples, manifest = _build_dataset(cfg)
    save_dataset(samples, manifest, run_dir / "data" / "real")
    train, test = _split(samples)
    shared: dict = {}
    rows = []
    for count in sorted(cfg["ablation"]["counts"]):
        arm = "baseline" if count == 0 else method
        rows.append(_run_arm(arm, count, train, test, cfg, run_dir, shared))
    return _write_report(run_dir, cfg, rows, "scale_sweep")


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_synth(args, cfg):
    out = Path(args.out)
    samples, manifest = _build_dataset(cfg)
    save_dataset(samples, manifest, out)
    _write_sidecar(out, "synth", cfg)
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _require_dataset(path):
    p = Path(path)
    if not (p / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset manifest under {p}")
    return load_dataset(p)


def _cmd_augment(args, cfg):
    samples, _ = _require_dataset(args.data)
    train, _ = _split(samples)
    train = train or samples
    method = args.method
    pp_net = None
    diff_models = None
    if method in ("pixel_prior", "diff_mosaic"):
        if not args.pp_ckpt:
            raise FileNotFoundError("pixel_prior/diff_mosaic need --pp-ckpt")
        pp_net = _load_pp(args.pp_ckpt)
    if method == "diff_mosaic":
        if not (args.ae and args.den_ckpt):
            raise FileNotFoundError("diff_mosaic needs --ae and --den-ckpt")
        ae = load_ae(args.ae)
        den, sched = _load_denoiser(args.den_ckpt)
        diff_models = (ae, den, sched)
    pool = generate_pool(method, args.n, train, cfg, cfg["seed"],
                         pp_net=pp_net, diff_models=diff_models)
    out = Path(args.out)
    save_dataset(pool, {"method": method, "count": args.n, "seed": cfg["seed"]}, out)
    _write_sidecar(out, "augment", cfg)
    print(f"wrote {len(pool)} augmented samples to {out}")
    return 0


def _load_pp(path) -> PixelPriorNet:
    weights, _, extra = nn.load_checkpoint(path)
    net = PixelPriorNet(Rng(0), channels=extra["channels"], blocks=extra["blocks"])
    nn.load_into(net.parameters(), weights)
    return net


def _load_denoiser(path):
    weights, _, extra = nn.load_checkpoint(path)
    den = MlpDenoiser(extra["k"], Rng(0), hidden=extra["hidden"], t_dim=extra["t_dim"])
    nn.load_into(den.parameters(), weights)
    return den, NoiseSchedule(T=extra["T"])


def _cmd_train_pixel_prior(args, cfg):
    samples, _ = _require_dataset(args.data)
    train, _ = _split(samples)
    train = train or samples
    net, log = train_pixel_prior_net(train, cfg, cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(out / "pixel_prior.ckpt", net.parameters(), extra=net.config())
    with open(out / "train_log.json", "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
    _write_sidecar(out, "train-pixel-prior", cfg)
    print(f"pixel-prior loss {log[0]['loss']:.5f} -> {log[-1]['loss']:.5f}")
    return 0


def _cmd_train_diff_prior(args, cfg):
    samples, _ = _require_dataset(args.data)
    images = [s.image for s in samples]
    ae, den, sched, log = train_diff_prior_models(images, cfg, cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_ae(ae, out / "ae.bin")
    extra = dict(den.config())
    extra["T"] = sched.T
    nn.save_checkpoint(out / "denoiser.ckpt", den.parameters(), extra=extra)
    with open(out / "train_log.json", "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
    _write_sidecar(out, "train-diff-prior", cfg)
    print(f"denoiser loss {log[0]['loss']:.5f} -> {log[-1]['loss']:.5f}")
    return 0


def _cmd_resample(args, cfg):
    samples, _ = _require_dataset(args.data)
    ae = load_ae(args.ae)
    den, sched = _load_denoiser(args.den_ckpt)
    out_samples = []
    for i, s in enumerate(samples):
        rng = Rng(derive_seed(cfg["seed"], "resample", i))
        out_samples.append(resample_image(ae, den, sched, s, cfg["diff_prior"]["strength"], rng))
    out = Path(args.out)
    save_dataset(out_samples, {"method": "resample", "seed": cfg["seed"]}, out)
    _write_sidecar(out, "resample", cfg)
    print(f"resampled {len(out_samples)} samples to {out}")
    return 0


def _cmd_train_detector(args, cfg):
    samples, _ = _require_dataset(args.data)
    train, _ = _split(samples)
    train = train or samples
    pool = []
    for aug_dir in args.aug or []:
        aug_samples, _ = _require_dataset(aug_dir)
        pool.extend(aug_samples)
    det_cfg = cfg["detector"]
    net = DetectorNet(Rng(derive_seed(cfg["seed"], "det-init")), channels=det_cfg["channels"])
    log = det_train(net, train + pool, epochs=det_cfg["epochs"], lr=det_cfg["lr"],
                    rng=Rng(derive_seed(cfg["seed"], "det-train")),
                    batch_size=det_cfg["batch_size"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(out / "detector.ckpt", net.parameters(), extra=net.config())
    with open(out / "train_log.json", "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
    _write_sidecar(out, "train-detector", cfg)
    print(f"detector loss {log[0]['loss']:.5f} -> {log[-1]['loss']:.5f} "
          f"({len(train)} real + {len(pool)} augmented)")
    return 0


def _cmd_predict(args, cfg):
    weights, _, extra = nn.load_checkpoint(args.ckpt)
    net = DetectorNet(Rng(0), channels=extra["channels"])
    nn.load_into(net.parameters(), weights)
    img = read_pgm(args.image)
    mask = det_predict(net, img, threshold=cfg["detector"]["threshold"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pbm(mask, out / "prediction.pbm")
    _write_sidecar(out, "predict", cfg)
    print(f"prediction: {mask.count()} foreground pixels")
    return 0


def _cmd_detect(args, cfg):
    img = read_pgm(args.image)
    if args.method == "tophat":
        score = tophat(img, se_radius=args.se_radius)
    elif args.method == "lcm":
        score = lcm(img)
    elif args.method == "ipi":
        score = ipi_detect(img, PatchImageConfig())
    else:
        raise ConfigError(f"unknown method {args.method}")
    mask = threshold_to_mask(score, method="adaptive", k=args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    smax = score.max()
    write_pgm(GrayImage(score / smax if smax > 0 else score), out / "score.pgm")
    write_pbm(mask, out / "mask.pbm")
    _write_sidecar(out, "detect", cfg)
    print(f"{args.method}: {mask.count()} foreground pixels")
    return 0


def _cmd_eval(args, cfg):
    from .image_core import read_pbm

    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.exists() or not gt_dir.exists():
        raise FileNotFoundError("prediction or ground-truth directory missing")
    names = sorted(p.name for p in gt_dir.glob("*.pbm"))
    preds, gts = [], []
    for name in names:
        pp = pred_dir / name
        if not pp.exists():
            raise FileNotFoundError(f"missing prediction {pp}")
        preds.append(read_pbm(pp))
        gts.append(read_pbm(gt_dir / name))
    m = evaluate_set(preds, gts, match_dist=cfg["eval"]["match_dist"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w") as f:
        json.dump(m.to_dict(), f, indent=2, sort_keys=True)
    _write_sidecar(out, "eval", cfg)
    print(f"IoU {m.iou:.4f}  Pd {m.pd:.4f}  Fa {m.fa * 1e6:.2f}e-6")
    return 0


def _cmd_ablation(args, cfg):
    report = run_ablation(cfg, args.out)
    _write_sidecar(Path(args.out), "ablation", cfg)
    print(format_table(report["rows"]))
    return 0


def _cmd_sweep(args, cfg):
    report = run_scale_sweep(cfg, args.out, method=args.method)
    _write_sidecar(Path(args.out), "sweep", cfg)
    print(format_table(report["rows"]))
    return 0


def _cmd_report(args, cfg):
    path = Path(args.run) / "reports" / "report.json"
    if not path.exists():
        raise FileNotFoundError(f"no report at {path}")
    with open(path) as f:
        report = json.load(f)
    print(format_table(report["rows"]), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irstlab",
                                     description="infrared small-target detection lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON experiment config")
        if needs_out:
            p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("augment", help="generate augmented samples")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=AUGMENT_METHODS, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--pp-ckpt", default=None)
    p.add_argument("--ae", default=None)
    p.add_argument("--den-ckpt", default=None)

    p = sub.add_parser("train-pixel-prior", help="train the harmonization net")
    common(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("train-diff-prior", help="fit latent space and train denoiser")
    common(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("resample", help="diffusion-resample a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--den-ckpt", required=True)

    p = sub.add_parser("train-detector", help="train the detection net")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--aug", action="append", default=None)

    p = sub.add_parser("predict", help="run a trained detector on one image")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)

    p = sub.add_parser("detect", help="run a traditional detector")
    common(p)
    p.add_argument("--method", choices=["tophat", "lcm", "ipi"], required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--se-radius", type=int, default=5)
    p.add_argument("--k", type=float, default=5.0)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)

    p = sub.add_parser("ablation", help="run the full ablation grid")
    common(p)

    p = sub.add_parser("sweep", help="sweep augmentation counts")
    common(p)
    p.add_argument("--method", choices=AUGMENT_METHODS[1:], default=None)

    p = sub.add_parser("report", help="print the table for a finished run")
    common(p, needs_out=False)
    p.add_argument("--run", required=True)
    return parser


_COMMANDS = {
    "synth": _cmd_synth,
    "augment": _cmd_augment,
    "train-pixel-prior": _cmd_train_pixel_prior,
    "train-diff-prior": _cmd_train_diff_prior,
    "resample": _cmd_resample,
    "train-detector": _cmd_train_detector,
    "predict": _cmd_predict,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "ablation": _cmd_ablation,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = _load_config_file(args.config) if args.config else {}
        cfg = resolve_config(overrides, seed=args.seed)
        if args.command == "synth" and args.n is not None:
            cfg["dataset"]["n"] = args.n
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FloatingPointError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
