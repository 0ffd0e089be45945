"""Deterministic desk-scale fixtures: synthetic cubes, masks, and kernels."""

from __future__ import annotations

import json
from pathlib import Path

from .core import HsiCube, RandomSource, synthesize_lowrank_cube
from .io import save_cube
from .physics import MASK_RATIOS, column_mask

FIXTURE_BANDS = 8
FIXTURE_SIZE = 64
FIXTURE_RANKS = (1, 2, 4)
KERNEL_SPECS = (
    ("kernel_desk", 7, 1.0),
    ("kernel_cave15", 15, 2.0),
    ("kernel_cave29", 29, 4.0),
    ("kernel_cave55", 55, 8.0),
)


def make_fixtures(out_dir: str | Path, seed: int = 2024) -> dict:
    """Write the standard fixture set; rerunning is byte-identical.

    Produces three low-rank cubes (ranks 1, 2, 4), the four column-structured
    masks at the shipped corruption ratios, and the named blur-kernel specs.
    Returns a manifest of the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = RandomSource(seed)
    manifest: dict = {"cubes": {}, "masks": {}, "kernels": {}, "seed": seed}

    for rank in FIXTURE_RANKS:
        cube = synthesize_lowrank_cube(
            FIXTURE_BANDS, FIXTURE_SIZE, FIXTURE_SIZE, rank,
            root.child(f"cube-rank{rank}"), name=f"lowrank-r{rank}",
        )
        path = save_cube(cube, out / f"cube_rank{rank}.f32")
        manifest["cubes"][f"rank{rank}"] = path.name

    shape = (FIXTURE_BANDS, FIXTURE_SIZE, FIXTURE_SIZE)
    for ratio in MASK_RATIOS:
        mask = column_mask(shape, ratio, root.child(f"mask-{ratio}"))
        label = f"{100 * ratio:.2f}".rstrip("0").rstrip(".").replace(".", "p")
        path = save_cube(HsiCube(mask, name=f"mask-{label}"),
                         out / f"mask_{label}.f32")
        manifest["masks"][f"{ratio}"] = path.name

    for name, size, std in KERNEL_SPECS:
        path = out / f"{name}.json"
        path.write_text(json.dumps({"size": size, "std": std}, sort_keys=True) + "\n")
        manifest["kernels"][name] = path.name

    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest
