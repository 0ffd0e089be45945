"""Restoration quality metrics on normalized [0, 1] cubes."""

from __future__ import annotations

import numpy as np
from skimage.metrics import structural_similarity

from .core import HsiCube
from .errors import ShapeError

PSNR_CAP_DB = 100.0


def _as_array(x) -> np.ndarray:
    if isinstance(x, HsiCube):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def mpsnr(restored, reference, peak: float = 1.0) -> float:
    """Mean over bands of 10 log10(peak^2 / band MSE), capped at 100 dB."""
    a, b = _as_array(restored), _as_array(reference)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    values = []
    for band in range(a.shape[0]):
        mse = float(np.mean((a[band] - b[band]) ** 2))
        if mse == 0.0:
            values.append(PSNR_CAP_DB)
        else:
            values.append(min(10.0 * np.log10(peak ** 2 / mse), PSNR_CAP_DB))
    return float(np.mean(values))


def mssim(restored, reference) -> float:
    """Mean over bands of single-band SSIM (Gaussian window, 11x11 standard).

    Images smaller than the standard window fall back to the largest odd
    window that fits.
    """
    a, b = _as_array(restored), _as_array(reference)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    smallest = min(a.shape[1], a.shape[2])
    win = 11 if smallest >= 11 else (smallest if smallest % 2 else smallest - 1)
    values = [
        structural_similarity(
            a[band], b[band], data_range=1.0, gaussian_weights=True,
            sigma=1.5, use_sample_covariance=False, win_size=win,
        )
        for band in range(a.shape[0])
    ]
    return float(np.mean(values))


def sam(restored, reference, degrees: bool = True) -> float:
    """Mean spectral angle between per-pixel spectra, in degrees."""
    a, b = _as_array(restored), _as_array(reference)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    u = a.reshape(a.shape[0], -1)
    v = b.reshape(b.shape[0], -1)
    nu = np.linalg.norm(u, axis=0)
    nv = np.linalg.norm(v, axis=0)
    valid = (nu > 0) & (nv > 0)
    cos = np.ones(u.shape[1])
    cos[valid] = (u[:, valid] * v[:, valid]).sum(axis=0) / (nu[valid] * nv[valid])
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    return float(np.degrees(angles.mean())) if degrees else float(angles.mean())


def evaluate(restored, reference) -> dict:
    """All three metrics as a plain record (higher MPSNR/MSSIM, lower SAM)."""
    return {
        "mpsnr": mpsnr(restored, reference),
        "mssim": mssim(restored, reference),
        "sam": sam(restored, reference),
    }
