"""The zero-shot optimization loop: single-measurement and multi-measurement.

One optimization step evaluates the composite loss on a measurement with a
freshly sampled group action and one fresh divergence probe, then takes an
Adam step under a cosine-decayed learning rate. The best-loss parameters are
tracked and the returned restoration is the best checkpoint's output.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .core import HsiCube, RandomSource
from .errors import ConfigError, DivergenceError
from .losses import LossSpec, loss_share
from .metrics import evaluate
from .network import NetworkConfig, RestorationNet, save_checkpoint
from .transforms import sample

DIVERGENCE_PATIENCE = 5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    lr_init: float = 1e-3
    lr_final: float = 1e-4
    optimizer: str = "adam"
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    loss: LossSpec = field(default_factory=LossSpec)
    transform: str = "shift"
    net: NetworkConfig = field(default_factory=NetworkConfig)
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    mode: str = "single-image"
    device: str = "cpu"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0 < self.lr_final <= self.lr_init):
            raise ConfigError("need 0 < lr_final <= lr_init")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.mode not in ("single-image", "multi-image"):
            raise ConfigError(f"unknown mode {self.mode!r}")


@dataclass
class RunReport:
    """Write-once summary of one optimization run."""

    config: dict
    trajectory: list[dict]
    best_epoch: int
    best_loss: float
    metrics: dict | None = None        # best-loss checkpoint vs reference
    final_metrics: dict | None = None  # last-epoch parameters vs reference
    baseline_metrics: dict | None = None  # pseudo-inverse vs reference
    wall_time: float = 0.0
    diverged: bool = False
    artifacts: dict = field(default_factory=dict)

    def losses(self) -> list[float]:
        return [rec["total"] for rec in self.trajectory]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def cosine_lr(epoch: int, epochs: int, lr_init: float, lr_final: float) -> float:
    """Non-increasing cosine schedule from lr_init (epoch 0) to lr_final."""
    if epochs <= 1:
        return lr_init
    t = epoch / (epochs - 1)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * t))


def _as_tensor(y, device: str) -> torch.Tensor:
    if isinstance(y, HsiCube):
        return y.tensor(device=device)
    if torch.is_tensor(y):
        return y.detach().to(device=device, dtype=torch.float32)
    return torch.as_tensor(np.asarray(y), dtype=torch.float32, device=device)


def _fit(
    measurements: list[torch.Tensor],
    operator,
    cfg: TrainConfig,
) -> tuple[RestorationNet, RunReport]:
    """Shared optimization loop over one or more measurements."""
    y0 = measurements[0]
    bands, height, width = operator.target_shape(tuple(y0.shape))
    # the run seed owns every random stream: init, transforms, probes, noise
    root = RandomSource(cfg.seed)
    init_seed = root.child("init-seed").derived_seed() % (2 ** 31)
    net_cfg = NetworkConfig(**{**asdict(cfg.net), "init_seed": init_seed})
    net = RestorationNet(bands, net_cfg, operator, (height, width)).to(cfg.device)
    net.train()

    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr_init, betas=cfg.betas,
                           eps=cfg.adam_eps)
    transform_src = root.child("transform-sampling")
    probe_gen = root.child("sure-probe").torch_generator()
    noise_gen = root.child("rec-noise").torch_generator()
    batch_rng = root.child("batch").numpy_rng()

    trajectory: list[dict] = []
    best_state = copy.deepcopy(net.state_dict())
    best_loss = math.inf
    best_epoch = -1
    bad_streak = 0
    diverged = False
    start = time.perf_counter()

    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final)
        for group in opt.param_groups:
            group["lr"] = lr
        y = measurements[int(batch_rng.integers(len(measurements)))] \
            if len(measurements) > 1 else y0
        transform = sample(cfg.transform, transform_src.child(str(epoch)),
                           height, width)
        total, breakdown = loss_share(net, operator, y, cfg.loss, transform,
                                      probe_rng=probe_gen, noise_rng=noise_gen)
        record = breakdown.as_dict()
        record.update(step=epoch, lr=lr)
        trajectory.append(record)

        if not math.isfinite(record["total"]):
            bad_streak += 1
            if bad_streak >= DIVERGENCE_PATIENCE:
                diverged = True
                break
            opt.zero_grad(set_to_none=True)
            continue
        bad_streak = 0
        if record["total"] < best_loss:
            best_loss = record["total"]
            best_epoch = epoch
            best_state = copy.deepcopy(net.state_dict())

        opt.zero_grad(set_to_none=True)
        total.backward()
        opt.step()
        if cfg.checkpoint_every and cfg.checkpoint_dir \
                and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(Path(cfg.checkpoint_dir) / f"checkpoint_{epoch:06d}.npz",
                            net)

    wall = time.perf_counter() - start
    final_state = copy.deepcopy(net.state_dict())
    report = RunReport(
        config={"train": _config_dict(cfg), "effective_init_seed": init_seed},
        trajectory=trajectory,
        best_epoch=best_epoch,
        best_loss=best_loss if math.isfinite(best_loss) else float("nan"),
        wall_time=wall,
        diverged=diverged,
    )
    net._final_state = final_state  # kept so callers can inspect the last epoch
    net.load_state_dict(best_state)
    if cfg.checkpoint_dir:
        path = save_checkpoint(Path(cfg.checkpoint_dir) / "checkpoint_best.npz", net)
        report.artifacts["checkpoint_best"] = path.name
    return net, report


def _config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["loss"]["terms"] = list(cfg.loss.terms)
    d["betas"] = list(cfg.betas)
    return d


def restore_single(
    y, operator, cfg: TrainConfig, reference: HsiCube | np.ndarray | None = None,
) -> tuple[HsiCube, RunReport]:
    """Fit the network to one measurement; returns the best-loss restoration.

    Raises :class:`DivergenceError` (carrying the last good result) if the
    loss stays non-finite for five consecutive steps.
    """
    y_t = _as_tensor(y, cfg.device)
    net, report = _fit([y_t], operator, cfg)
    with torch.no_grad():
        xhat_best = net(y_t).cpu().numpy()
        final_state = net._final_state
        best_state = copy.deepcopy(net.state_dict())
        net.load_state_dict(final_state)
        xhat_final = net(y_t).cpu().numpy()
        net.load_state_dict(best_state)
    xhat = HsiCube(np.clip(xhat_best, 0.0, 1.0), value_range=(0.0, 1.0),
                   name="restored")
    if reference is not None:
        ref = reference.data if isinstance(reference, HsiCube) else np.asarray(reference)
        report.metrics = evaluate(xhat.data, ref)
        report.final_metrics = evaluate(np.clip(xhat_final, 0.0, 1.0), ref)
        with torch.no_grad():
            baseline = operator.pseudo_inverse(y_t).cpu().numpy()
        report.baseline_metrics = evaluate(np.clip(baseline, 0.0, 1.0), ref)
    if report.diverged:
        raise DivergenceError(
            "loss non-finite for 5 consecutive steps; best checkpoint attached",
            result=(xhat, report),
        )
    return xhat, report


def restore_multi(
    measurements: list, operator, cfg: TrainConfig,
) -> tuple[RestorationNet, RunReport]:
    """Fit one network across several measurements (one sampled per step).

    The returned network is the reusable best-loss checkpoint; evaluate it on
    held-out measurements with ``net(y)``.
    """
    ys = [_as_tensor(m, cfg.device) for m in measurements]
    if not ys:
        raise ConfigError("need at least one measurement")
    shapes = {tuple(t.shape) for t in ys}
    if len(shapes) != 1:
        raise ConfigError(f"measurements must share one shape, got {shapes}")
    net, report = _fit(ys, operator, cfg)
    if report.diverged:
        raise DivergenceError(
            "loss non-finite for 5 consecutive steps; best checkpoint attached",
            result=(net, report),
        )
    return net, report


def write_checkpoint(path: str | Path, net: RestorationNet) -> Path:
    return save_checkpoint(path, net)
