"""share-hsi: zero-shot, ground-truth-free restoration of hyperspectral cubes.

The toolkit recovers a clean cube from a single noisy, degraded observation
by fitting a U-shaped 3D network with memory-bank spectral attention to that
one measurement, under an unbiased-risk fidelity term plus a robust
transform-consistency term. Inpainting (column masks) and super-resolution
(blur + downsample) degradations are supported.
"""

from .core import (
    HsiCube,
    RandomSource,
    crop_and_select,
    drop_bands,
    normalize,
    synthesize_lowrank_cube,
)
from .io import load_cube, save_cube
from .losses import (
    LossSpec,
    loss_ec,
    loss_mc,
    loss_rec,
    loss_share,
    loss_sure_gaussian,
    loss_sure_mixed,
    loss_sure_poisson,
    monte_carlo_divergence,
)
from .metrics import evaluate, mpsnr, mssim, sam
from .network import (
    MemoryBankAttention,
    NetworkConfig,
    RestorationNet,
    build_network,
    dasa,
    initialize,
    load_checkpoint,
    save_checkpoint,
)
from .physics import (
    BlurDownsampleOperator,
    InpaintOperator,
    MASK_RATIOS,
    NoiseModel,
    column_mask,
    corrupt,
    delta_kernel,
    gaussian_kernel,
)
from .trainer import RunReport, TrainConfig, cosine_lr, restore_multi, restore_single
from .transforms import GroupAction, act, compose, sample

__version__ = "0.1.0"

__all__ = [
    "HsiCube", "RandomSource", "crop_and_select", "drop_bands", "normalize",
    "synthesize_lowrank_cube", "load_cube", "save_cube",
    "LossSpec", "loss_ec", "loss_mc", "loss_rec", "loss_share",
    "loss_sure_gaussian", "loss_sure_mixed", "loss_sure_poisson",
    "monte_carlo_divergence",
    "evaluate", "mpsnr", "mssim", "sam",
    "MemoryBankAttention", "NetworkConfig", "RestorationNet", "build_network",
    "dasa", "initialize", "load_checkpoint", "save_checkpoint",
    "BlurDownsampleOperator", "InpaintOperator", "MASK_RATIOS", "NoiseModel",
    "column_mask", "corrupt", "delta_kernel", "gaussian_kernel",
    "RunReport", "TrainConfig", "cosine_lr", "restore_multi", "restore_single",
    "GroupAction", "act", "compose", "sample",
]
