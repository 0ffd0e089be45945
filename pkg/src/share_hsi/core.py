"""Core cube data type, dataset preparation, and deterministic random sources."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .errors import BoundsError, DataError, DegenerateRangeError, ParameterError

NORMALIZE_MODES = ("global-minmax", "per-band-minmax", "fixed-range")


@dataclass(frozen=True)
class RandomSource:
    """A named, deterministic random stream.

    The same (seed, stream_id) pair always reproduces the same sequence,
    and distinct stream ids derived from one seed are decorrelated. Every
    consumer (noise, transform sampling, init, divergence probes, ...) gets
    its own child stream so experiments differ only in the intended factor.
    """

    seed: int
    stream_id: str = "root"

    def child(self, stream_id: str) -> "RandomSource":
        return RandomSource(self.seed, f"{self.stream_id}/{stream_id}")

    def derived_seed(self) -> int:
        digest = hashlib.blake2b(
            f"{self.seed:#x}:{self.stream_id}".encode(), digest_size=8
        ).digest()
        return int.from_bytes(digest, "little")

    def numpy_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.derived_seed())

    def torch_generator(self, device: str = "cpu") -> torch.Generator:
        g = torch.Generator(device=device)
        g.manual_seed(self.derived_seed() & 0x7FFF_FFFF_FFFF_FFFF)
        return g


@dataclass(frozen=True)
class HsiCube:
    """A hyperspectral cube: float32 array of shape (bands, height, width).

    ``value_range`` describes the nominal range of the stored data. After
    :func:`normalize` the data lies in [0, 1], ``value_range`` becomes (0, 1)
    and the affine map back to native units is recorded in ``native_range``
    (or ``native_band_ranges`` for per-band normalization) so
    :meth:`denormalize` can invert it.
    """

    data: np.ndarray
    value_range: tuple[float, float] = (0.0, 1.0)
    wavelengths: np.ndarray | None = None
    name: str = ""
    native_range: tuple[float, float] | None = None
    native_band_ranges: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if not data.flags.writeable:
            data = data.copy()
        if data.ndim != 3:
            raise ParameterError(f"cube data must be 3-D (bands,h,w), got {data.shape}")
        if min(data.shape) < 1:
            raise ParameterError(f"cube dims must all be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("cube contains non-finite values")
        object.__setattr__(self, "data", data)
        lo, hi = self.value_range
        object.__setattr__(self, "value_range", (float(lo), float(hi)))
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=np.float64)
            if wl.shape != (data.shape[0],):
                raise ParameterError(
                    f"wavelengths length {wl.shape} does not match {data.shape[0]} bands"
                )
            object.__setattr__(self, "wavelengths", wl)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def tensor(self, dtype: torch.dtype = torch.float32, device: str = "cpu") -> torch.Tensor:
        return torch.as_tensor(self.data, dtype=dtype, device=device)

    def with_data(self, data: np.ndarray, **overrides) -> "HsiCube":
        return replace(self, data=data, **overrides)

    def denormalize(self) -> "HsiCube":
        """Map normalized data back to native units using the recorded affine."""
        if self.native_band_ranges is not None:
            lo = self.native_band_ranges[:, 0][:, None, None]
            hi = self.native_band_ranges[:, 1][:, None, None]
            data = lo + self.data.astype(np.float64) * (hi - lo)
            rng = (float(self.native_band_ranges[:, 0].min()),
                   float(self.native_band_ranges[:, 1].max()))
        elif self.native_range is not None:
            lo, hi = self.native_range
            data = lo + self.data.astype(np.float64) * (hi - lo)
            rng = self.native_range
        else:
            return self
        return HsiCube(data, value_range=rng, wavelengths=self.wavelengths,
                       name=self.name)


def normalize(cube: HsiCube, mode: str = "global-minmax") -> HsiCube:
    """Affinely map cube values into [0, 1].

    Modes: ``global-minmax`` uses the cube's min/max, ``per-band-minmax``
    uses each band's min/max, ``fixed-range`` maps through the declared
    ``value_range`` (clipping anything outside it). The affine inverse is
    recorded on the returned cube.
    """
    if mode not in NORMALIZE_MODES:
        raise ParameterError(f"unknown normalize mode {mode!r}")
    data = cube.data.astype(np.float64)
    if mode == "global-minmax":
        lo, hi = float(data.min()), float(data.max())
        if hi <= lo:
            raise DegenerateRangeError(
                "constant cube: global-minmax is degenerate (use fixed-range)"
            )
        out = (data - lo) / (hi - lo)
        return cube.with_data(out, value_range=(0.0, 1.0),
                              native_range=(lo, hi), native_band_ranges=None)
    if mode == "per-band-minmax":
        lo = data.min(axis=(1, 2))
        hi = data.max(axis=(1, 2))
        if np.any(hi <= lo):
            raise DegenerateRangeError(
                "constant band: per-band-minmax is degenerate (use fixed-range)"
            )
        out = (data - lo[:, None, None]) / (hi - lo)[:, None, None]
        return cube.with_data(out, value_range=(0.0, 1.0), native_range=None,
                              native_band_ranges=np.stack([lo, hi], axis=1))
    # fixed-range
    lo, hi = cube.value_range
    if hi <= lo:
        raise DegenerateRangeError(f"declared value_range {cube.value_range} is degenerate")
    out = np.clip((data - lo) / (hi - lo), 0.0, 1.0)
    return cube.with_data(out, value_range=(0.0, 1.0),
                          native_range=(lo, hi), native_band_ranges=None)


def crop_and_select(
    cube: HsiCube,
    spatial: tuple[int, int, int, int] | None = None,
    bands: Sequence[int] | None = None,
) -> HsiCube:
    """Extract a spatial rectangle (top, left, height, width) and a band subset.

    Band indices keep their given order; wavelengths and per-band records are
    filtered consistently.
    """
    data = cube.data
    if spatial is not None:
        top, left, h, w = spatial
        if h < 1 or w < 1 or top < 0 or left < 0:
            raise BoundsError(f"invalid rectangle {spatial}")
        if top + h > cube.height or left + w > cube.width:
            raise BoundsError(
                f"rectangle {spatial} exceeds spatial extent {cube.height}x{cube.width}"
            )
        data = data[:, top:top + h, left:left + w]
    wavelengths = cube.wavelengths
    band_ranges = cube.native_band_ranges
    if bands is not None:
        idx = np.asarray(list(bands), dtype=np.int64)
        if idx.size < 1:
            raise BoundsError("band selection is empty")
        if idx.min() < 0 or idx.max() >= cube.bands:
            raise BoundsError(f"band index out of range 0..{cube.bands - 1}")
        data = data[idx]
        if wavelengths is not None:
            wavelengths = wavelengths[idx]
        if band_ranges is not None:
            band_ranges = band_ranges[idx]
    return HsiCube(data.copy(), value_range=cube.value_range, wavelengths=wavelengths,
                   name=cube.name, native_range=cube.native_range,
                   native_band_ranges=band_ranges)


def drop_bands(cube: HsiCube, bad_bands: Sequence[int]) -> HsiCube:
    """Remove the listed band indices, keeping the rest in order."""
    bad = set(int(b) for b in bad_bands)
    if bad and (min(bad) < 0 or max(bad) >= cube.bands):
        raise BoundsError(f"band index out of range 0..{cube.bands - 1}")
    keep = [b for b in range(cube.bands) if b not in bad]
    return crop_and_select(cube, bands=keep)


def synthesize_lowrank_cube(
    c: int, h: int, w: int, rank: int, rng: RandomSource, name: str = "",
    detail: float = 2.0,
) -> HsiCube:
    """Deterministic synthetic cube with exact spectral rank <= ``rank``.

    Built as a nonnegative mixture of ``rank`` spatial abundance maps with
    ``rank`` smooth positive endmember spectra, then scaled by the global
    maximum (scale-only, so the mixture rank is preserved exactly). Each
    abundance map blends a large-scale field with piecewise regions and
    fine texture smoothed at ``detail`` pixels, giving the edge and texture
    content a real scene would have; larger ``detail`` gives blander maps.
    """
    if rank < 1 or rank > min(c, h * w):
        raise ParameterError(f"rank must satisfy 1 <= rank <= min(c, h*w), got {rank}")
    if detail <= 0:
        raise ParameterError("detail must be > 0")
    gen = rng.numpy_rng()
    maps = np.empty((rank, h, w), dtype=np.float64)
    for r in range(rank):
        coarse = gaussian_filter(gen.standard_normal((h, w)),
                                 sigma=max(min(h, w) / 8.0, 1.0), mode="reflect")
        regions = gaussian_filter(gen.standard_normal((h, w)),
                                  sigma=max(min(h, w) / 6.0, 1.0), mode="reflect")
        plateaus = (regions > np.median(regions)).astype(np.float64)
        fine = gaussian_filter(gen.standard_normal((h, w)), sigma=detail,
                               mode="reflect")
        field = coarse / max(np.abs(coarse).max(), 1e-12) \
            + 0.8 * plateaus \
            + 0.6 * fine / max(np.abs(fine).max(), 1e-12)
        field = field - field.min()
        maps[r] = field + 0.05 * (field.max() + 1e-12)
    centers = gen.uniform(0.1, 0.9, size=rank) * (c - 1)
    widths = gen.uniform(c / 8.0, c / 3.0, size=rank)
    lam = np.arange(c, dtype=np.float64)
    spectra = 0.2 + np.exp(-((lam[None, :] - centers[:, None]) ** 2)
                           / (2.0 * widths[:, None] ** 2))
    cube = np.einsum("rc,rhw->chw", spectra, maps)
    cube /= cube.max()
    return HsiCube(cube, value_range=(0.0, 1.0), name=name or f"lowrank-r{rank}")
