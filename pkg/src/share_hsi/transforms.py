"""Invertible, differentiable geometric group actions with parameter samplers.

Every action is applied identically to each spectral band. Integer shift,
90-degree rotation and reflection are exact (pure index permutations, norm
preserving); the remaining kinds warp through a 3x3 homography in normalized
coordinates with bilinear resampling, which is linear in the input and
differentiable.

Default sampler ranges (toolkit defaults, see module tests):
shift: integer offsets over the full spatial extent; scale: factors in
[0.75, 1.25]; rotation: multiples of 90 degrees; reflection: one of the two
spatial axes; similarity / affine / euclidean: angles in [-15, 15] degrees,
translations within 10% of the extent, scale in [0.9, 1.1], shear in
[-0.1, 0.1]; pan-tilt-rotate: the same rotation range plus perspective
coefficients in [-0.015, 0.015].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .core import RandomSource
from .errors import ParameterError, UnsupportedError

KINDS = ("shift", "rotation", "scale", "reflection",
         "similarity", "affine", "pan-tilt-rotate", "euclidean")

_HOMOGRAPHY_KINDS = ("similarity", "affine", "pan-tilt-rotate", "euclidean")


@dataclass(frozen=True)
class GroupAction:
    """One concrete geometric transform T_g.

    ``params`` semantics by kind: shift (dy, dx); rotation (quarter_turns,)
    exact, or (degrees,) in bilinear mode; scale (factor,); reflection
    (axis,) with 0 = vertical (rows), 1 = horizontal (columns); the
    projective family stores the forward 3x3 matrix row-major (9 floats) in
    normalized [-1, 1] coordinates.
    """

    kind: str
    params: tuple[float, ...]
    interpolation: str = "nearest"
    boundary: str = "circular"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown action kind {self.kind!r}")
        if self.interpolation not in ("nearest", "bilinear"):
            raise ParameterError(f"unknown interpolation {self.interpolation!r}")
        if self.boundary not in ("circular", "reflect"):
            raise ParameterError(f"unknown boundary {self.boundary!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind in _HOMOGRAPHY_KINDS and len(self.params) != 9:
            raise ParameterError(f"{self.kind} expects a 3x3 matrix (9 params)")

    # construction helpers -------------------------------------------------

    @staticmethod
    def shift(dy: int, dx: int) -> "GroupAction":
        return GroupAction("shift", (float(dy), float(dx)))

    @staticmethod
    def rot90(quarter_turns: int) -> "GroupAction":
        return GroupAction("rotation", (float(quarter_turns % 4),))

    @staticmethod
    def reflection(axis: int) -> "GroupAction":
        if axis not in (0, 1):
            raise ParameterError("reflection axis must be 0 or 1")
        return GroupAction("reflection", (float(axis),))

    @staticmethod
    def scale(factor: float) -> "GroupAction":
        if factor <= 0:
            raise ParameterError("scale factor must be positive")
        return GroupAction("scale", (float(factor),),
                           interpolation="bilinear", boundary="reflect")

    @staticmethod
    def from_matrix(kind: str, matrix: np.ndarray) -> "GroupAction":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ParameterError("homography matrix must be 3x3")
        return GroupAction(kind, tuple((m / m[2, 2]).ravel()),
                           interpolation="bilinear", boundary="reflect")

    # algebra ----------------------------------------------------------------

    def matrix(self) -> np.ndarray:
        """Forward coordinate map as a 3x3 homography (normalized coords)."""
        if self.kind in _HOMOGRAPHY_KINDS:
            return np.asarray(self.params, dtype=np.float64).reshape(3, 3)
        if self.kind == "scale":
            f = self.params[0]
            return np.diag([f, f, 1.0])
        if self.kind == "rotation":
            theta = math.radians(90.0 * self.params[0]) \
                if self._is_quarter() else math.radians(self.params[0])
            c, s = math.cos(theta), math.sin(theta)
            return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        raise UnsupportedError(f"{self.kind} has no dense matrix form")

    def _is_quarter(self) -> bool:
        return self.kind == "rotation" and self.interpolation == "nearest" \
            and float(self.params[0]) == int(self.params[0])

    def inverse(self) -> "GroupAction":
        if self.kind == "shift":
            dy, dx = self.params
            return GroupAction("shift", (-dy, -dx), self.interpolation, self.boundary)
        if self.kind == "reflection":
            return self
        if self._is_quarter():
            return GroupAction("rotation", ((-self.params[0]) % 4,),
                               self.interpolation, self.boundary)
        if self.kind == "scale":
            return GroupAction("scale", (1.0 / self.params[0],),
                               self.interpolation, self.boundary)
        if self.kind == "rotation":
            return GroupAction("rotation", (-self.params[0],),
                               self.interpolation, self.boundary)
        m = np.linalg.inv(self.matrix())
        return GroupAction(self.kind, tuple((m / m[2, 2]).ravel()),
                           self.interpolation, self.boundary)

    # application -------------------------------------------------------------

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return act(self, x)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "params": list(self.params),
                           "interpolation": self.interpolation,
                           "boundary": self.boundary}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "GroupAction":
        obj = json.loads(text)
        return GroupAction(obj["kind"], tuple(obj["params"]),
                           obj.get("interpolation", "nearest"),
                           obj.get("boundary", "circular"))


def _warp(x: torch.Tensor, forward: np.ndarray, interpolation: str,
          boundary: str) -> torch.Tensor:
    """Inverse-warp ``x`` under the forward homography (normalized coords)."""
    squeeze = x.dim() == 3
    x4 = x.unsqueeze(0) if squeeze else x
    _, _, h, w = x4.shape
    inv = np.linalg.inv(forward)
    ys = (2.0 * np.arange(h, dtype=np.float64) + 1.0) / h - 1.0
    xs = (2.0 * np.arange(w, dtype=np.float64) + 1.0) / w - 1.0
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    ones = np.ones_like(gx)
    src = np.stack([gx, gy, ones], axis=-1) @ inv.T
    sx = src[..., 0] / src[..., 2]
    sy = src[..., 1] / src[..., 2]
    if boundary == "circular":
        # wrap coordinates onto the torus; residual extrapolation is confined
        # to the half-pixel seam, where we clamp to the border
        sx = np.mod(sx + 1.0, 2.0) - 1.0
        sy = np.mod(sy + 1.0, 2.0) - 1.0
        padding = "border"
    else:
        padding = "reflection"
    grid = torch.as_tensor(np.stack([sx, sy], axis=-1), dtype=x4.dtype,
                           device=x4.device).unsqueeze(0)
    grid = grid.expand(x4.shape[0], -1, -1, -1)
    out = F.grid_sample(x4, grid, mode=interpolation, padding_mode=padding,
                        align_corners=False)
    return out.squeeze(0) if squeeze else out


def act(action: GroupAction, x: torch.Tensor) -> torch.Tensor:
    """Apply the action to a cube (c, h, w) or batch (b, c, h, w)."""
    if x.shape[-1] < 2 or x.shape[-2] < 2:
        raise ParameterError("spatial dims must be >= 2")
    if action.kind == "shift" and action.interpolation == "nearest":
        dy, dx = int(round(action.params[0])), int(round(action.params[1]))
        if action.boundary != "circular":
            raise ParameterError("integer shift is defined with circular boundary")
        return torch.roll(x, shifts=(dy, dx), dims=(-2, -1))
    if action.kind == "reflection":
        axis = int(action.params[0])
        return torch.flip(x, dims=(-2,) if axis == 0 else (-1,))
    if action._is_quarter():
        return torch.rot90(x, k=int(action.params[0]), dims=(-2, -1))
    if action.kind == "shift" and action.interpolation == "bilinear":
        h, w = x.shape[-2:]
        dy, dx = action.params
        forward = np.array([[1.0, 0.0, 2.0 * dx / w],
                            [0.0, 1.0, 2.0 * dy / h],
                            [0.0, 0.0, 1.0]])
        return _warp(x, forward, "bilinear", action.boundary)
    mode = action.interpolation
    return _warp(x, action.matrix(), mode, action.boundary)


def compose(t1: GroupAction, t2: GroupAction) -> GroupAction:
    """Group composition t1 o t2 on the closed shift / rot-90 subgroups."""
    if t1.kind == "shift" and t2.kind == "shift" \
            and t1.interpolation == t2.interpolation == "nearest":
        return GroupAction("shift", (t1.params[0] + t2.params[0],
                                     t1.params[1] + t2.params[1]))
    if t1._is_quarter() and t2._is_quarter():
        return GroupAction.rot90(int(t1.params[0] + t2.params[0]))
    raise UnsupportedError(
        f"composition not closed for ({t1.kind}, {t2.kind}) with "
        f"{t1.interpolation}/{t2.interpolation} interpolation"
    )


def sample(kind: str, rng: RandomSource, height: int, width: int) -> GroupAction:
    """Draw one action of the given kind from the documented default ranges."""
    if kind not in KINDS:
        raise ParameterError(f"unknown action kind {kind!r}")
    gen = rng.numpy_rng()
    if kind == "shift":
        dy = int(gen.integers(0, height))
        dx = int(gen.integers(0, width))
        return GroupAction.shift(dy, dx)
    if kind == "rotation":
        return GroupAction.rot90(int(gen.integers(0, 4)))
    if kind == "reflection":
        return GroupAction.reflection(int(gen.integers(0, 2)))
    if kind == "scale":
        return GroupAction.scale(float(gen.uniform(0.75, 1.25)))
    theta = math.radians(float(gen.uniform(-15.0, 15.0)))
    c, s = math.cos(theta), math.sin(theta)
    tx, ty = gen.uniform(-0.1, 0.1, size=2)
    if kind == "euclidean":
        m = np.array([[c, -s, tx], [s, c, ty], [0, 0, 1.0]])
    elif kind == "similarity":
        f = float(gen.uniform(0.9, 1.1))
        m = np.array([[f * c, -f * s, tx], [f * s, f * c, ty], [0, 0, 1.0]])
    elif kind == "affine":
        fx, fy = gen.uniform(0.9, 1.1, size=2)
        shear = float(gen.uniform(-0.1, 0.1))
        m = np.array([[fx * c, -fx * s + shear, tx],
                      [fy * s, fy * c, ty],
                      [0, 0, 1.0]])
    else:  # pan-tilt-rotate
        # perspective kept mild so the numerical inverse stays within 1e-5
        p1, p2 = gen.uniform(-0.015, 0.015, size=2)
        m = np.array([[c, -s, 0.0], [s, c, 0.0], [p1, p2, 1.0]])
    return GroupAction.from_matrix(kind, m)
