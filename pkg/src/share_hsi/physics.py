"""Forward degradation operators, their adjoints / pseudo-inverses, and noise.

Two linear operators are provided:

* :class:`InpaintOperator` — elementwise binary mask (a diagonal projector,
  hence idempotent and self-adjoint, with pseudo-inverse equal to itself).
* :class:`BlurDownsampleOperator` — per-band 2-D kernel filtering followed by
  stride-``s`` subsampling anchored at offset (0, 0).

Filtering convention: cross-correlation with tap (p0, p0), p0 = (k-1)//2,
aligned to the output pixel; the image is padded (k-1)//2 before and k//2
after with the selected boundary rule. Adjoints are exact linear transposes
obtained as vector-Jacobian products of the forward map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .core import RandomSource
from .errors import DomainError, ParameterError, ShapeError

BOUNDARIES = ("reflect", "circular", "zero")
_PAD_MODES = {"reflect": "reflect", "circular": "circular", "zero": "constant"}


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise: Gaussian (std ``sigma``), Poisson (gain), or both."""

    kind: str = "gaussian"
    sigma: float = 0.0
    gain: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson", "mixed"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ParameterError("sigma must be >= 0")
        if self.kind in ("poisson", "mixed") and self.gain <= 0:
            raise ParameterError("poisson component requires gain > 0")


def _as_batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ShapeError(f"expected (c,h,w) or (b,c,h,w), got {tuple(x.shape)}")


class InpaintOperator:
    """Degradation that zeroes out masked entries (mask: 1 = observed)."""

    kind = "inpaint"

    def __init__(self, mask: np.ndarray | torch.Tensor):
        mask_t = torch.as_tensor(np.asarray(mask), dtype=torch.float32)
        if mask_t.dim() != 3:
            raise ShapeError(f"mask must be (c,h,w), got {tuple(mask_t.shape)}")
        vals = torch.unique(mask_t)
        if not torch.all((vals == 0) | (vals == 1)):
            raise ParameterError("mask entries must be 0 or 1")
        self.mask = mask_t

    def _check(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-3:] != self.mask.shape:
            raise ShapeError(
                f"input shape {tuple(x.shape)} does not match mask {tuple(self.mask.shape)}"
            )
        return self.mask.to(dtype=x.dtype, device=x.device)

    def apply(self, x: torch.Tensor) -> torch.Tensor:
        return x * self._check(x)

    def adjoint(self, m: torch.Tensor) -> torch.Tensor:
        return m * self._check(m)

    def pseudo_inverse(self, m: torch.Tensor) -> torch.Tensor:
        return m * self._check(m)

    def measurement_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        if tuple(shape) != tuple(self.mask.shape):
            raise ShapeError(f"shape {shape} does not match mask {tuple(self.mask.shape)}")
        return tuple(shape)

    def target_shape(self, mshape: tuple[int, int, int]) -> tuple[int, int, int]:
        return self.measurement_shape(mshape)

    def mask_ratio(self) -> float:
        return float(1.0 - self.mask.mean())


class BlurDownsampleOperator:
    """Per-band 2-D filtering followed by stride-``factor`` subsampling.

    ``pinv`` selects the pseudo-inverse: "exact" is the least-norm inverse
    Ht (H Ht)^-1 computed with a per-frequency normalization (requires
    circular boundary, under which the operator is diagonalizable);
    "bicubic" is a cheap bicubic upsampling; "auto" picks "exact" for
    circular boundary and "bicubic" otherwise.
    """

    kind = "sr"

    def __init__(
        self,
        kernel: np.ndarray | torch.Tensor,
        factor: int,
        boundary: str = "reflect",
        pinv: str = "auto",
    ):
        k = torch.as_tensor(np.asarray(kernel), dtype=torch.float32)
        if k.dim() != 2 or k.shape[0] != k.shape[1]:
            raise ParameterError(f"kernel must be square 2-D, got {tuple(k.shape)}")
        if torch.any(k < 0):
            raise ParameterError("kernel taps must be nonnegative")
        if abs(float(k.sum()) - 1.0) > 1e-6:
            raise ParameterError(f"kernel must sum to 1, got {float(k.sum()):.8f}")
        k = k / k.sum()
        if factor < 1:
            raise ParameterError("factor must be a positive integer")
        if boundary not in BOUNDARIES:
            raise ParameterError(f"unknown boundary {boundary!r}")
        if pinv not in ("auto", "bicubic", "exact"):
            raise ParameterError(f"unknown pinv mode {pinv!r}")
        if pinv == "exact" and boundary != "circular":
            raise ParameterError("exact pseudo-inverse requires circular boundary")
        self.kernel = k
        self.factor = int(factor)
        self.boundary = boundary
        self.pinv = "exact" if (pinv == "auto" and boundary == "circular") else (
            "bicubic" if pinv == "auto" else pinv
        )

    # forward ------------------------------------------------------------

    def _filter(self, x4: torch.Tensor) -> torch.Tensor:
        k = self.kernel.to(dtype=x4.dtype, device=x4.device)
        ksz = k.shape[0]
        p0 = (ksz - 1) // 2
        p1 = ksz - 1 - p0
        if self.boundary != "zero" and ksz - 1 >= min(x4.shape[-2:]):
            raise ParameterError(
                f"kernel size {ksz} too large for {tuple(x4.shape[-2:])} with "
                f"{self.boundary} padding"
            )
        b, c, h, w = x4.shape
        flat = x4.reshape(b * c, 1, h, w)
        padded = F.pad(flat, (p0, p1, p0, p1), mode=_PAD_MODES[self.boundary])
        out = F.conv2d(padded, k.reshape(1, 1, ksz, ksz))
        return out.reshape(b, c, h, w)

    def apply(self, x: torch.Tensor) -> torch.Tensor:
        x4, squeeze = _as_batched(x)
        h, w = x4.shape[-2:]
        if h % self.factor or w % self.factor:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by factor {self.factor}")
        out = self._filter(x4)[..., ::self.factor, ::self.factor]
        return out.squeeze(0) if squeeze else out

    # adjoint --------------------------------------------------------------

    def adjoint(self, m: torch.Tensor) -> torch.Tensor:
        m4, squeeze = _as_batched(m)
        b, c, h, w = m4.shape
        with torch.enable_grad():
            target = torch.zeros(
                (b, c, h * self.factor, w * self.factor),
                dtype=m4.dtype, device=m4.device, requires_grad=True,
            )
            out = self.apply(target)
            (grad,) = torch.autograd.grad(out, target, grad_outputs=m4.detach())
        return grad.squeeze(0) if squeeze else grad

    # pseudo-inverse --------------------------------------------------------

    def _kernel_fft(self, H: int, W: int, dtype, device) -> torch.Tensor:
        k = self.kernel.to(dtype=dtype, device=device)
        ksz = k.shape[0]
        p0 = (ksz - 1) // 2
        embed = torch.zeros((H, W), dtype=dtype, device=device)
        rows = (torch.arange(ksz) - p0) % H
        cols = (torch.arange(ksz) - p0) % W
        embed[rows.reshape(-1, 1), cols.reshape(1, -1)] = k
        return torch.fft.fft2(embed)

    def _pinv_exact(self, m4: torch.Tensor) -> torch.Tensor:
        s = self.factor
        b, c, h, w = m4.shape
        H, W = h * s, w * s
        K = self._kernel_fft(H, W, m4.dtype, m4.device)
        # coarse-grid eigenvalues of H Ht: polyphase sum of |K|^2 / s^2
        lam = K.abs().pow(2).reshape(s, h, s, w).sum(dim=(0, 2)) / (s * s)
        lam = torch.clamp(lam, min=1e-12 * float(lam.max()))
        Y = torch.fft.fft2(m4)
        z = torch.fft.ifft2(Y / lam)
        up = torch.zeros((b, c, H, W), dtype=z.dtype, device=m4.device)
        up[..., ::s, ::s] = z
        x = torch.fft.ifft2(K * torch.fft.fft2(up)).real
        return x

    def pseudo_inverse(self, m: torch.Tensor) -> torch.Tensor:
        m4, squeeze = _as_batched(m)
        if self.pinv == "exact":
            out = self._pinv_exact(m4)
        else:
            out = F.interpolate(m4, scale_factor=self.factor, mode="bicubic",
                                align_corners=False)
        return out.squeeze(0) if squeeze else out

    def measurement_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        c, h, w = shape
        if h % self.factor or w % self.factor:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by factor {self.factor}")
        return (c, h // self.factor, w // self.factor)

    def target_shape(self, mshape: tuple[int, int, int]) -> tuple[int, int, int]:
        c, h, w = mshape
        return (c, h * self.factor, w * self.factor)


def corrupt(
    m: torch.Tensor, noise: NoiseModel, rng: RandomSource | torch.Generator
) -> torch.Tensor:
    """Sample a noisy measurement from the clean measurement ``m``.

    Gaussian: m + sigma*z. Poisson: gain * Poisson(m / gain), applied with a
    straight-through gradient so the draw stays usable inside a training
    graph. Mixed: Poisson stage then Gaussian stage. Deterministic under a
    fixed stream; sigma = 0 returns ``m`` unchanged, bit for bit.
    """
    gen = rng.torch_generator() if isinstance(rng, RandomSource) else rng
    out = m
    if noise.kind in ("poisson", "mixed"):
        if float(m.min()) < 0:
            raise DomainError("poisson noise requires a nonnegative measurement")
        sampled = noise.gain * torch.poisson(m.detach() / noise.gain, generator=gen)
        out = out + (sampled - out).detach()
    if noise.kind in ("gaussian", "mixed") and noise.sigma > 0:
        z = torch.randn(m.shape, generator=gen, dtype=m.dtype, device=m.device)
        out = out + noise.sigma * z
    return out


def gaussian_kernel(size: int, std: float) -> np.ndarray:
    """Separable truncated Gaussian kernel, renormalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 1, got {size}")
    if std < 0:
        raise ParameterError("std must be >= 0")
    if std == 0:
        taps = np.zeros(size)
        taps[size // 2] = 1.0
    else:
        x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
        taps = np.exp(-0.5 * (x / std) ** 2)
    k = np.outer(taps, taps)
    return (k / k.sum()).astype(np.float64)


def delta_kernel(size: int = 1) -> np.ndarray:
    return gaussian_kernel(size, 0.0)


# Column-structured corruption ratios shipped with the toolkit.
MASK_RATIOS = (0.125, 0.236, 0.1667, 0.4167)


def column_mask(shape: tuple[int, int, int], ratio: float, rng: RandomSource,
                stripe_width: int = 1) -> np.ndarray:
    """Binary mask corrupting whole-band column stripes at the given ratio.

    ``stripe_width`` columns are corrupted per stripe; stripes are chosen
    without replacement from the given stream, so the pattern is reproducible
    bit-exactly. The corrupted fraction matches ``ratio`` to within one
    stripe's rounding.
    """
    c, h, w = shape
    if not 0.0 <= ratio < 1.0:
        raise ParameterError(f"ratio must lie in [0, 1), got {ratio}")
    if stripe_width < 1 or stripe_width > w:
        raise ParameterError(f"stripe_width must lie in [1, {w}]")
    slots = w // stripe_width
    n_stripes = int(round(ratio * w / stripe_width))
    starts = rng.numpy_rng().choice(slots, size=min(n_stripes, slots),
                                    replace=False) * stripe_width
    mask = np.ones(shape, dtype=np.float32)
    for start in starts:
        mask[:, :, start:start + stripe_width] = 0.0
    return mask
