"""Config-driven experiment runner: single runs and ablation sweeps.

An experiment is described by one JSON document (schema_version 1). A run is
fully reconstructible from the saved config: every random stream derives from
the recorded seed, so re-running a saved config reproduces the metrics block
byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import __version__
from .core import HsiCube, RandomSource, normalize
from .errors import ConfigError, DivergenceError, ShareError
from .io import load_cube, save_cube
from .losses import LossSpec
from .network import NetworkConfig
from .physics import (
    BlurDownsampleOperator,
    InpaintOperator,
    NoiseModel,
    column_mask,
    corrupt,
    gaussian_kernel,
)
from .trainer import TrainConfig, restore_single

SCHEMA_VERSION = 1

LOSS_TERM_COMBOS = (
    ("mc",), ("sure",), ("rec",),
    ("mc", "ec"), ("sure", "ec"), ("mc", "rec"), ("sure", "rec"),
)
ABLATE_AXES = ("transform", "alpha", "loss-terms", "noise", "dasa")
_DEFAULT_ALPHAS = (0.1, 0.5, 1.0, 1.5, 2.0)
_DEFAULT_NOISES = (
    {"kind": "gaussian", "sigma": 25 / 255},
    {"kind": "gaussian", "sigma": 50 / 255},
    {"kind": "poisson", "gain": 1 / 25},
    {"kind": "poisson", "gain": 1 / 10},
    {"kind": "mixed", "sigma": 25 / 255, "gain": 1 / 25},
    {"kind": "mixed", "sigma": 50 / 255, "gain": 1 / 10},
)
_TRANSFORM_KINDS = ("shift", "rotation", "scale", "reflection",
                    "similarity", "affine", "pan-tilt-rotate", "euclidean")


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    version = config.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    if config.get("task") not in ("inpaint", "sr"):
        raise ConfigError("task must be 'inpaint' or 'sr'")
    if "input" not in config:
        raise ConfigError("config needs an 'input' section")
    return config


def resolve_out_dir(config: dict, out_flag: str | None) -> Path:
    if out_flag:
        return Path(out_flag)
    configured = config.get("output", {}).get("dir")
    if configured:
        return Path(configured)
    name = config.get("name", "run")
    root = os.environ.get("SHARE_OUT")
    return (Path(root) if root else Path("share_runs")) / name


def _load_input(config: dict) -> tuple[HsiCube | None, HsiCube | None]:
    """Returns (ground_truth, measurement); exactly one is present."""
    section = config["input"]
    fmt = section.get("format")
    mode = section.get("normalize", "global-minmax")
    if "ground_truth" in section:
        path = Path(section["ground_truth"])
        if not path.exists():
            raise ConfigError(f"input not found: {path}")
        cube = load_cube(path, fmt)
        if mode != "none":
            cube = normalize(cube, mode)
        return cube, None
    if "measurement" in section:
        path = Path(section["measurement"])
        if not path.exists():
            raise ConfigError(f"input not found: {path}")
        cube = load_cube(path, fmt)
        if mode != "none":
            cube = normalize(cube, mode)
        return None, cube
    raise ConfigError("input needs 'ground_truth' or 'measurement'")


def _load_kernel(spec) -> np.ndarray:
    if isinstance(spec, str):
        payload = json.loads(Path(spec).read_text())
    elif isinstance(spec, dict):
        payload = spec
    else:
        raise ConfigError("physics.kernel must be a path or an object")
    if "taps" in payload:
        return np.asarray(payload["taps"], dtype=np.float64)
    try:
        return gaussian_kernel(int(payload["size"]), float(payload["std"]))
    except KeyError as exc:
        raise ConfigError(f"kernel spec missing {exc}") from exc


def _build_operator(config: dict, shape: tuple[int, int, int], seed: int):
    physics = config.get("physics", {})
    if config["task"] == "inpaint":
        if "mask" in physics:
            mask_path = Path(physics["mask"])
            if not mask_path.exists():
                raise ConfigError(f"mask not found: {mask_path}")
            mask = load_cube(mask_path).data
        elif "mask_ratio" in physics:
            mask = column_mask(shape, float(physics["mask_ratio"]),
                               RandomSource(seed).child("mask"))
        else:
            raise ConfigError("inpaint task needs physics.mask or physics.mask_ratio")
        return InpaintOperator(mask)
    kernel = _load_kernel(physics.get("kernel", {"size": 7, "std": 1.0}))
    return BlurDownsampleOperator(
        kernel, int(physics.get("factor", 2)),
        boundary=physics.get("boundary", "circular"),
        pinv=physics.get("pinv", "auto"),
    )


def _noise_model(config: dict) -> NoiseModel:
    section = config.get("noise", {})
    return NoiseModel(section.get("kind", "gaussian"),
                      sigma=float(section.get("sigma", 0.0)),
                      gain=float(section.get("gain", 0.0)))


def _train_config(config: dict, seed: int, device: str) -> TrainConfig:
    noise = _noise_model(config)
    loss_cfg = dict(config.get("loss", {}))
    loss = LossSpec(
        terms=tuple(loss_cfg.get("terms", ("sure", "rec"))),
        alpha=float(loss_cfg.get("alpha", 1.0)),
        sigma=float(loss_cfg.get("sigma", noise.sigma)),
        tau=float(loss_cfg.get("tau", 0.01)),
        noise_kind=loss_cfg.get("noise_kind", noise.kind),
        gain=float(loss_cfg.get("gain", noise.gain)),
        probe_count=int(loss_cfg.get("probe_count", 1)),
        stop_gradient=bool(loss_cfg.get("stop_gradient", False)),
    )
    net = NetworkConfig(**config.get("network", {}))
    train = config.get("train", {})
    return TrainConfig(
        epochs=int(train.get("epochs", 2000)),
        lr_init=float(train.get("lr_init", 1e-3)),
        lr_final=float(train.get("lr_final", 1e-4)),
        loss=loss,
        transform=config.get("transform", "shift"),
        net=net,
        seed=seed,
        checkpoint_every=int(train.get("checkpoint_every", 0)),
        checkpoint_dir=train.get("checkpoint_dir"),
        device=device,
    )


def _stretch_to_png(array: np.ndarray, path: Path) -> dict:
    lo, hi = float(array.min()), float(array.max())
    scale = (hi - lo) if hi > lo else 1.0
    image = ((array - lo) / scale * 255.0).round().astype(np.uint8)
    Image.fromarray(image, mode="L").save(path)
    sidecar = {"lo": lo, "hi": hi}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return sidecar


def _write_band_images(out: Path, xhat: HsiCube, reference: HsiCube | None,
                       bands) -> list[str]:
    written = []
    for band in bands:
        if not 0 <= band < xhat.bands:
            raise ConfigError(f"output band {band} out of range 0..{xhat.bands - 1}")
        png = out / f"band_{band:03d}.png"
        _stretch_to_png(xhat.data[band], png)
        written.append(png.name)
        if reference is not None:
            err = np.abs(xhat.data[band] - reference.data[band])
            err_png = out / f"band_{band:03d}_abs_error.png"
            _stretch_to_png(err, err_png)
            written.append(err_png.name)
    return written


def run_experiment(config: dict, out_dir: Path, seed: int | None = None,
                   device: str = "cpu") -> dict:
    """Execute one configured run; returns the report dict written to disk."""
    if device != "cpu":
        if not (device.startswith("cuda") and torch.cuda.is_available()):
            raise ConfigError(f"device {device!r} unavailable")
    seed = int(config.get("train", {}).get("seed", 0)) if seed is None else int(seed)
    ground_truth, measurement = _load_input(config)
    source = ground_truth if ground_truth is not None else measurement
    cfg = _train_config(config, seed, device)

    if ground_truth is not None:
        operator = _build_operator(config, ground_truth.shape, seed)
        clean = operator.apply(ground_truth.tensor(device=device))
        y = corrupt(clean, _noise_model(config),
                    RandomSource(seed).child("measurement-noise").torch_generator())
    else:
        operator = _build_operator(config, _target_shape_for(config, measurement), seed)
        y = measurement.tensor(device=device)

    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.checkpoint_dir is None:
        cfg = dataclasses.replace(cfg, checkpoint_dir=str(out_dir))
    resolved = dict(config)
    resolved["train"] = {**config.get("train", {}), "seed": seed}
    (out_dir / "config_used.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=2) + "\n")

    partial_exc = None
    try:
        xhat, report = restore_single(y, operator, cfg, reference=ground_truth)
    except DivergenceError as exc:
        xhat, report = exc.result
        partial_exc = exc

    xhat = HsiCube(xhat.data, value_range=(0.0, 1.0),
                   wavelengths=source.wavelengths, name="xhat")
    xhat_path = save_cube(xhat, out_dir / "xhat.f32")
    with (out_dir / "loss.jsonl").open("w") as fh:
        for record in report.trajectory:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    bands = config.get("output", {}).get("bands", [0, xhat.bands // 2])
    images = _write_band_images(out_dir, xhat, ground_truth, bands)

    report.artifacts.update({
        "xhat": xhat_path.name,
        "config": "config_used.json",
        "loss_log": "loss.jsonl",
        "images": images,
    })
    report_dict = asdict(report)
    report_dict["toolkit_version"] = __version__
    report_dict.pop("trajectory")  # kept in loss.jsonl
    (out_dir / "report.json").write_text(
        json.dumps(report_dict, sort_keys=True, indent=2) + "\n")
    if partial_exc is not None:
        raise DivergenceError(str(partial_exc), result=report_dict)
    return report_dict


def _target_shape_for(config: dict, measurement: HsiCube) -> tuple[int, int, int]:
    if config["task"] == "inpaint":
        return measurement.shape
    factor = int(config.get("physics", {}).get("factor", 2))
    c, h, w = measurement.shape
    return (c, h * factor, w * factor)


# -- ablation sweeps -------------------------------------------------------------

def _axis_values(config: dict, axis: str) -> list[tuple[str, dict]]:
    """Label + config-patch per axis value."""
    declared = config.get("ablate", {})
    if axis == "alpha":
        values = declared.get("alpha", list(_DEFAULT_ALPHAS))
        return [(f"alpha_{v}", {"loss": {**config.get("loss", {}), "alpha": v}})
                for v in values]
    if axis == "loss-terms":
        return [("+".join(terms),
                 {"loss": {**config.get("loss", {}), "terms": list(terms)}})
                for terms in LOSS_TERM_COMBOS]
    if axis == "transform":
        kinds = declared.get("transform", list(_TRANSFORM_KINDS))
        return [(kind, {"transform": kind}) for kind in kinds]
    if axis == "dasa":
        return [(f"dasa_{flag}",
                 {"network": {**config.get("network", {}), "dasa": flag}})
                for flag in (True, False)]
    if axis == "noise":
        noises = declared.get("noise", list(_DEFAULT_NOISES))
        labels = []
        for n in noises:
            tag = n["kind"]
            if n.get("sigma"):
                tag += f"_s{n['sigma']:.3f}"
            if n.get("gain"):
                tag += f"_g{n['gain']:.3f}"
            labels.append((tag, {"noise": n,
                                 "loss": {k: v for k, v in config.get("loss", {}).items()
                                          if k not in ("sigma", "gain", "noise_kind")}}))
        return labels
    raise ConfigError(f"unknown ablation axis {axis!r} (choose from {ABLATE_AXES})")


def _run_axis_value(args) -> dict:
    label, derived, run_dir, seed, device = args
    try:
        report = run_experiment(derived, Path(run_dir), seed=seed, device=device)
        metrics = report.get("metrics") or {}
        return {"value": label, "status": "ok",
                "mpsnr": metrics.get("mpsnr", ""),
                "mssim": metrics.get("mssim", ""),
                "sam": metrics.get("sam", "")}
    except ShareError as exc:
        return {"value": label, "status": f"failed: {exc}",
                "mpsnr": "", "mssim": "", "sam": ""}


def run_ablation(config: dict, axis: str, out_dir: Path,
                 seed: int | None = None, device: str = "cpu",
                 jobs: int = 1) -> Path:
    """One run per axis value under a shared seed; emits CSV + markdown tables.

    Values run sequentially by default; ``jobs > 1`` executes them in worker
    processes (independent configs, disjoint output directories and streams).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(label, {**config, **patch}, str(out_dir / label.replace("/", "-")),
              seed, device)
             for label, patch in _axis_values(config, axis)]
    if jobs > 1:
        import multiprocessing

        with multiprocessing.get_context("spawn").Pool(jobs) as pool:
            rows = pool.map(_run_axis_value, tasks)
    else:
        rows = [_run_axis_value(task) for task in tasks]
    csv_path = out_dir / f"ablation_{axis}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["value", "status", "mpsnr",
                                                "mssim", "sam"])
        writer.writeheader()
        writer.writerows(rows)
    md_path = out_dir / f"ablation_{axis}.md"
    lines = [f"| {axis} | status | MPSNR | MSSIM | SAM |",
             "| --- | --- | --- | --- | --- |"]
    for row in rows:
        fmt = lambda v: f"{v:.3f}" if isinstance(v, float) else str(v)
        lines.append(f"| {row['value']} | {row['status']} | {fmt(row['mpsnr'])} "
                     f"| {fmt(row['mssim'])} | {fmt(row['sam'])} |")
    md_path.write_text("\n".join(lines) + "\n")
    return csv_path
