"""Cube file I/O.

Three containers are supported, all band-sequential:

* ``raw-f32``: little-endian float32 payload plus a JSON sidecar
  ``{c, h, w, lo, hi, wavelengths?}`` (the toolkit's canonical interchange
  format; round-trips bit-exactly).
* ``envi-bsq``: ENVI header/data pair, BSQ interleave, data type 4 (float32)
  or 12 (uint16), byte-order field honored bit-exactly.
* ``matlab-v7``: classic .mat file with the array under the ``data`` key.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.io

from .core import HsiCube
from .errors import DataError, FormatError, ShapeError

FORMATS = ("raw-f32", "envi-bsq", "matlab-v7")

_ENVI_DTYPES = {4: np.dtype("float32"), 12: np.dtype("uint16")}


def _infer_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".f32", ".raw", ".json"):
        return "raw-f32"
    if suffix in (".bsq", ".hdr", ".img", ".dat", ""):
        return "envi-bsq"
    if suffix == ".mat":
        return "matlab-v7"
    raise FormatError(f"cannot infer cube format from {path.name!r}")


def save_cube(cube: HsiCube, path: str | Path, format: str | None = None) -> Path:
    """Write ``cube`` to ``path``; returns the data-file path."""
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "raw-f32":
        return _save_raw(cube, path)
    if fmt == "envi-bsq":
        return _save_envi(cube, path)
    if fmt == "matlab-v7":
        return _save_mat(cube, path)
    raise FormatError(f"unknown cube format {fmt!r}")


def load_cube(path: str | Path, format: str | None = None) -> HsiCube:
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "raw-f32":
        return _load_raw(path)
    if fmt == "envi-bsq":
        return _load_envi(path)
    if fmt == "matlab-v7":
        return _load_mat(path)
    raise FormatError(f"unknown cube format {fmt!r}")


# -- raw float32 + JSON sidecar ------------------------------------------------

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _save_raw(cube: HsiCube, path: Path) -> Path:
    if path.suffix == ".json":
        path = path.with_suffix(".f32")
    meta = {
        "c": cube.bands,
        "h": cube.height,
        "w": cube.width,
        "lo": cube.value_range[0],
        "hi": cube.value_range[1],
    }
    if cube.wavelengths is not None:
        meta["wavelengths"] = [float(v) for v in cube.wavelengths]
    if cube.name:
        meta["name"] = cube.name
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    path.write_bytes(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
    return path


def _load_raw(path: Path) -> HsiCube:
    if path.suffix == ".json":
        path = path.with_suffix(".f32")
    sidecar = _sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if not sidecar.exists():
        raise FormatError(f"missing sidecar {sidecar.name}")
    try:
        meta = json.loads(sidecar.read_text())
        c, h, w = int(meta["c"]), int(meta["h"]), int(meta["w"])
        lo, hi = float(meta.get("lo", 0.0)), float(meta.get("hi", 1.0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed sidecar {sidecar.name}: {exc}") from exc
    payload = np.frombuffer(path.read_bytes(), dtype="<f4")
    if payload.size != c * h * w:
        raise ShapeError(
            f"payload holds {payload.size} floats, sidecar declares {c}x{h}x{w}"
        )
    data = payload.reshape(c, h, w)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path.name} contains non-finite values")
    wavelengths = meta.get("wavelengths")
    return HsiCube(data, value_range=(lo, hi),
                   wavelengths=None if wavelengths is None else np.asarray(wavelengths),
                   name=str(meta.get("name", path.stem)))


# -- ENVI BSQ ------------------------------------------------------------------

def _envi_paths(path: Path) -> tuple[Path, Path]:
    if path.suffix.lower() == ".hdr":
        return path.with_suffix(".bsq"), path
    return path, path.with_suffix(".hdr")


def _save_envi(cube: HsiCube, path: Path) -> Path:
    data_path, hdr_path = _envi_paths(path)
    lines = [
        "ENVI",
        f"description = {{{cube.name or data_path.stem}}}",
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.bands}",
        "header offset = 0",
        "file type = ENVI Standard",
        "data type = 4",
        "interleave = bsq",
        "byte order = 0",
    ]
    if cube.wavelengths is not None:
        wl = ", ".join(f"{v:.6f}" for v in cube.wavelengths)
        lines.append(f"wavelength = {{{wl}}}")
    hdr_path.write_text("\n".join(lines) + "\n")
    data_path.write_bytes(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
    return data_path


def _parse_envi_header(text: str) -> dict:
    if not text.lstrip().startswith("ENVI"):
        raise FormatError("not an ENVI header (missing ENVI magic)")
    fields: dict[str, str] = {}
    key, buf, in_braces = None, [], False
    for raw in text.splitlines()[1:]:
        line = raw.strip()
        if not line:
            continue
        if not in_braces:
            if "=" not in line:
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lower()
            if value.startswith("{") and not value.endswith("}"):
                in_braces, buf = True, [value]
            else:
                fields[key] = value
        else:
            buf.append(line)
            if line.endswith("}"):
                fields[key] = " ".join(buf)
                in_braces = False
    return fields


def _load_envi(path: Path) -> HsiCube:
    data_path, hdr_path = _envi_paths(path)
    if not hdr_path.exists():
        raise FormatError(f"missing ENVI header {hdr_path.name}")
    if not data_path.exists():
        raise FileNotFoundError(data_path)
    fields = _parse_envi_header(hdr_path.read_text())
    try:
        w = int(fields["samples"])
        h = int(fields["lines"])
        c = int(fields["bands"])
        dtype_code = int(fields.get("data type", "4"))
        interleave = fields.get("interleave", "bsq").lower()
        byte_order = int(fields.get("byte order", "0"))
        offset = int(fields.get("header offset", "0"))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed ENVI header {hdr_path.name}: {exc}") from exc
    if interleave != "bsq":
        raise FormatError(f"unsupported interleave {interleave!r} (only bsq)")
    if dtype_code not in _ENVI_DTYPES:
        raise FormatError(f"unsupported ENVI data type {dtype_code} (only 4, 12)")
    dtype = _ENVI_DTYPES[dtype_code].newbyteorder("<" if byte_order == 0 else ">")
    raw = data_path.read_bytes()[offset:]
    payload = np.frombuffer(raw, dtype=dtype)
    if payload.size != c * h * w:
        raise ShapeError(
            f"payload holds {payload.size} values, header declares {c}x{h}x{w}"
        )
    data = payload.astype(np.float32).reshape(c, h, w)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{data_path.name} contains non-finite values")
    wavelengths = None
    if "wavelength" in fields:
        body = fields["wavelength"].strip().strip("{}")
        wavelengths = np.asarray([float(v) for v in body.split(",") if v.strip()])
        if wavelengths.shape != (c,):
            wavelengths = None
    lo, hi = float(data.min()), float(data.max())
    return HsiCube(data, value_range=(lo, hi if hi > lo else lo + 1.0),
                   wavelengths=wavelengths, name=data_path.stem)


# -- MATLAB v7 -----------------------------------------------------------------

def _save_mat(cube: HsiCube, path: Path) -> Path:
    payload = {"data": cube.data, "value_range": np.asarray(cube.value_range)}
    if cube.wavelengths is not None:
        payload["wavelengths"] = cube.wavelengths
    scipy.io.savemat(str(path), payload, format="5", do_compression=False)
    return path


def _load_mat(path: Path) -> HsiCube:
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        payload = scipy.io.loadmat(str(path))
    except Exception as exc:  # scipy surfaces many parse-failure types
        raise FormatError(f"cannot read {path.name} as a v7 .mat file: {exc}") from exc
    arr = payload.get("data")
    if arr is None:
        candidates = [v for k, v in payload.items()
                      if not k.startswith("__") and isinstance(v, np.ndarray)
                      and v.ndim == 3]
        if len(candidates) != 1:
            raise FormatError(f"{path.name} holds no unambiguous 3-D array")
        arr = candidates[0]
    if arr.ndim != 3:
        raise ShapeError(f"{path.name}: expected a 3-D array, got shape {arr.shape}")
    data = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path.name} contains non-finite values")
    vr = payload.get("value_range")
    if vr is not None:
        vr = np.asarray(vr).ravel()
        value_range = (float(vr[0]), float(vr[1]))
    else:
        value_range = (float(data.min()), float(max(data.max(), data.min() + 1.0)))
    wl = payload.get("wavelengths")
    wavelengths = None if wl is None else np.asarray(wl).ravel()
    return HsiCube(data, value_range=value_range, wavelengths=wavelengths,
                   name=path.stem)
