"""The restoration network: a U-shaped 3D encoder-decoder over lifted features.

Pipeline for a measurement ``y``: pseudo-inverse initializer -> 2D conv
lifting the band count ``c`` to an internal width ``C`` -> 3D conv lifting to
spectral depth ``R`` -> ``n`` encoder stages (3D conv block doubling depth,
3D max-pool halving the three volume dims) -> ``n`` decoder stages (transpose
3D conv halving depth and doubling the volume dims, skip concatenation along
depth, memory-bank spectral attention, conv block halving depth) -> 3D conv
back to depth 1 -> 2D conv back to ``c`` bands.

The encoder feature at stage i has shape (2^i R, C/2^i, H/2^i, W/2^i); the
decoder mirrors it symmetrically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .core import RandomSource
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    channels: internal spectral width C the band axis is lifted to.
    spectral_depth: initial depth R of the lifted 4D feature tensor.
    stages: encoder/decoder depth n.
    patch_size: attention pooling patch P.
    bank_rank / bank_size: memory bank code length K and entry count B.
    """

    channels: int = 32
    spectral_depth: int = 2
    stages: int = 2
    patch_size: int = 8
    bank_rank: int = 4
    bank_size: int = 256
    init_seed: int = 0
    dasa: bool = True
    dasa_gate: str = "add"

    def __post_init__(self):
        if min(self.channels, self.spectral_depth, self.stages,
               self.patch_size, self.bank_rank, self.bank_size) < 1:
            raise ConfigError("all network dimensions must be >= 1")
        if self.dasa_gate not in ("add", "sigmoid"):
            raise ConfigError(f"unknown dasa_gate {self.dasa_gate!r}")

    def validate_target(self, height: int, width: int) -> None:
        """Check divisibility constraints against the restoration shape."""
        div = 2 ** self.stages
        if self.channels % div:
            raise ConfigError(f"channels {self.channels} not divisible by {div}")
        if height % div or width % div:
            raise ConfigError(f"spatial dims {height}x{width} not divisible by {div}")
        coarse = 2 ** (self.stages - 1)
        if (height // coarse) % self.patch_size or (width // coarse) % self.patch_size:
            raise ConfigError(
                f"patch size {self.patch_size} must divide the spatial dims at "
                f"every decoder scale (coarsest: {height // coarse}x{width // coarse})"
            )


class MemoryBankAttention(nn.Module):
    """Patchwise spectral attention over a learnable low-rank memory bank.

    The depth axis is flattened into channels; each non-overlapping PxP patch
    is average-pooled to a descriptor, projected to a K-dim code, matched
    against the K x B bank by softmax similarity, re-expanded from the bank,
    projected back, and broadcast over the patch as a residual correction.
    """

    def __init__(self, feature_dim: int, rank: int, bank_size: int,
                 patch_size: int, gate: str = "add"):
        super().__init__()
        self.feature_dim = feature_dim
        self.patch_size = patch_size
        self.gate = gate
        self.bank = nn.Parameter(torch.zeros(rank, bank_size))
        self.to_code = nn.Linear(feature_dim, rank)
        self.from_code = nn.Linear(rank, feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5:
            raise ShapeError(f"expected (b,d,ch,h,w), got {tuple(x.shape)}")
        b, d, ch, h, w = x.shape
        p = self.patch_size
        if h % p or w % p:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by patch {p}")
        flat = x.reshape(b, d * ch, h, w)
        pooled = torch.nn.functional.avg_pool2d(flat, kernel_size=p, stride=p)
        desc = pooled.permute(0, 2, 3, 1)                  # (b, h/p, w/p, d*ch)
        code = self.to_code(desc)                          # (b, h/p, w/p, K)
        weights = torch.softmax(code @ self.bank, dim=-1)  # (b, h/p, w/p, B)
        recalled = weights @ self.bank.t()                 # (b, h/p, w/p, K)
        correction = self.from_code(recalled).permute(0, 3, 1, 2)
        correction = torch.repeat_interleave(correction, p, dim=-2)
        correction = torch.repeat_interleave(correction, p, dim=-1)
        correction = correction.reshape(b, d, ch, h, w)
        if self.gate == "sigmoid":
            return x * torch.sigmoid(correction)
        return x + correction


def dasa(features: torch.Tensor, module: MemoryBankAttention) -> torch.Tensor:
    """Apply spectral attention to a 4D feature tensor (d, ch, h, w)."""
    return module(features.unsqueeze(0)).squeeze(0)


class ConvBlock(nn.Module):
    """3D conv + batch norm + ReLU; the network's basic unit."""

    def __init__(self, depth_in: int, depth_out: int):
        super().__init__()
        self.conv = nn.Conv3d(depth_in, depth_out, kernel_size=3, padding=1)
        self.bn = nn.BatchNorm3d(depth_out)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.bn(self.conv(x)))


class RestorationNet(nn.Module):
    """U-shaped 3D restoration function f: measurement -> cube estimate."""

    def __init__(self, bands: int, config: NetworkConfig, operator,
                 target_hw: tuple[int, int]):
        super().__init__()
        config.validate_target(*target_hw)
        self.bands = bands
        self.config = config
        self.operator = operator
        self.target_hw = tuple(target_hw)

        C, R, n = config.channels, config.spectral_depth, config.stages
        self.head = nn.Conv2d(bands, C, kernel_size=3, padding=1)
        self.lift = nn.Conv3d(1, R, kernel_size=3, padding=1)
        self.pool = nn.MaxPool3d(2)
        self.encoders = nn.ModuleList(
            [ConvBlock((2 ** i) * R, (2 ** (i + 1)) * R) for i in range(n)]
        )
        self.ups = nn.ModuleList()
        self.attn = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for i in range(n, 0, -1):
            d = (2 ** i) * R
            self.ups.append(nn.ConvTranspose3d(d, d // 2, kernel_size=2, stride=2))
            # concatenated depth d over width C/2^(i-1): descriptor length 2RC
            self.attn.append(
                MemoryBankAttention(d * (C // 2 ** (i - 1)), config.bank_rank,
                                    config.bank_size, config.patch_size,
                                    config.dasa_gate)
                if config.dasa else nn.Identity()
            )
            self.decoders.append(ConvBlock(d, d // 2))
        self.tail3d = nn.Conv3d(R, 1, kernel_size=3, padding=1)
        self.tail2d = nn.Conv2d(C, bands, kernel_size=3, padding=1)
        initialize(self, config.init_seed)

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        squeeze = y.dim() == 3
        y4 = y.unsqueeze(0) if squeeze else y
        x0 = self.operator.pseudo_inverse(y4)
        if x0.shape[-2:] != self.target_hw:
            raise ShapeError(
                f"initializer produced {tuple(x0.shape[-2:])}, expected {self.target_hw}"
            )
        z0 = self.head(x0)
        f = self.lift(z0.unsqueeze(1))
        skips = [f]
        for enc in self.encoders:
            f = self.pool(enc(f))
            skips.append(f)
        skips.pop()  # bottleneck is the running feature, not a skip
        for up, attn, dec in zip(self.ups, self.attn, self.decoders):
            f = up(f)
            f = torch.cat([f, skips.pop()], dim=1)
            f = attn(f)
            f = dec(f)
        out = self.tail2d(self.tail3d(f).squeeze(1))
        return out.squeeze(0) if squeeze else out


def initialize(net: nn.Module, seed: int) -> nn.Module:
    """Deterministically re-initialize all parameters from a named stream.

    Conv / linear weights are drawn N(0, sqrt(2 / fan_in)) with zero biases;
    batch-norm scales are 1 with zero offsets; each memory bank is
    N(0, 1) / sqrt(K). The attention back-projection starts at zero so every
    attention block begins as an exact identity and engages residually.
    """
    gen = RandomSource(seed, "init").torch_generator()

    def draw(shape, std):
        return torch.randn(shape, generator=gen) * std

    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, (nn.Conv2d, nn.Conv3d, nn.ConvTranspose3d)):
                fan_in = module.in_channels * int(np.prod(module.kernel_size))
                module.weight.copy_(draw(module.weight.shape, (2.0 / fan_in) ** 0.5))
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.Linear):
                fan_in = module.in_features
                module.weight.copy_(draw(module.weight.shape, (2.0 / fan_in) ** 0.5))
                module.bias.zero_()
            elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm3d)):
                module.weight.fill_(1.0)
                module.bias.zero_()
                module.reset_running_stats()
            elif isinstance(module, MemoryBankAttention):
                rank = module.bank.shape[0]
                module.bank.copy_(draw(module.bank.shape, 1.0) / rank ** 0.5)
        # second pass: children were re-drawn above, so zero these last
        for module in net.modules():
            if isinstance(module, MemoryBankAttention):
                module.from_code.weight.zero_()
                module.from_code.bias.zero_()
    return net


def build_network(bands: int, config: NetworkConfig, operator,
                  target_hw: tuple[int, int]) -> RestorationNet:
    return RestorationNet(bands, config, operator, target_hw)


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path: str | Path, net: RestorationNet) -> Path:
    """Write config JSON plus named flat parameter arrays to an .npz container."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    meta = {
        "bands": net.bands,
        "target_hw": list(net.target_hw),
        "config": asdict(net.config),
    }
    arrays = {name: tensor.detach().cpu().numpy()
              for name, tensor in net.state_dict().items()}
    np.savez(path, __meta__=np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
    return path


def load_checkpoint(path: str | Path, operator) -> RestorationNet:
    payload = np.load(Path(path), allow_pickle=False)
    meta = json.loads(payload["__meta__"].tobytes().decode())
    config = NetworkConfig(**meta["config"])
    net = RestorationNet(meta["bands"], config, operator, tuple(meta["target_hw"]))
    state = {name: torch.as_tensor(payload[name])
             for name in payload.files if name != "__meta__"}
    net.load_state_dict(state)
    return net
