"""File formats and run configuration.

Images travel as a pair of name-paired files: a JSON sidecar holding the
geometry and a flat little-endian float32 payload, band-sequential with
pixels row-major inside each band.  Decision maps and energy images export
to PGM or PNG.  A run configuration is a single JSON document.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .images import (
    BlurKernel,
    Decimation,
    DegradationModel,
    MultiBandImage,
    NoiseModel,
    build_band_averaging,
    build_gaussian_blur,
)

__all__ = [
    "ImageFormatError",
    "MissingSidecarError",
    "PayloadLengthError",
    "UnknownDtypeError",
    "read_image",
    "write_image",
    "export_map",
    "load_config",
    "effective_config",
    "build_degradation",
    "build_noise",
]


class ImageFormatError(ValueError):
    """Malformed image file pair."""


class MissingSidecarError(ImageFormatError):
    """The JSON header for a payload is absent."""


class PayloadLengthError(ImageFormatError):
    """Payload byte length disagrees with the header geometry."""


class UnknownDtypeError(ImageFormatError):
    """The header requests a sample type other than f32."""


def _stem(path: str | Path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        return p.with_suffix("")
    return p


def write_image(image: MultiBandImage, path: str | Path) -> None:
    """Write the sidecar and payload for an image under one stem."""
    stem = _stem(path)
    header = {
        "width": image.width,
        "height": image.height,
        "bands": image.band_count,
        "dtype": "f32",
        "layout": "band-sequential",
    }
    if image.band_centers is not None:
        header["band_centers"] = list(image.band_centers)
    stem.with_suffix(".json").write_text(
        json.dumps(header, sort_keys=True, indent=2) + "\n")
    stem.with_suffix(".bin").write_bytes(
        image.data.astype("<f4").tobytes())


def read_image(path: str | Path) -> MultiBandImage:
    """Read an image from its stem or either half of the file pair."""
    stem = _stem(path)
    sidecar = stem.with_suffix(".json")
    payload = stem.with_suffix(".bin")
    if not sidecar.exists():
        raise MissingSidecarError(f"missing sidecar {sidecar}")
    header = json.loads(sidecar.read_text())
    for key in ("width", "height", "bands"):
        if key not in header:
            raise ImageFormatError(f"sidecar {sidecar} lacks {key!r}")
    if header.get("dtype") != "f32":
        raise UnknownDtypeError(
            f"unsupported dtype {header.get('dtype')!r} in {sidecar}")
    if header.get("layout", "band-sequential") != "band-sequential":
        raise ImageFormatError(
            f"unsupported layout {header.get('layout')!r} in {sidecar}")
    w, h, b = int(header["width"]), int(header["height"]), int(header["bands"])
    if min(w, h, b) < 1:
        raise ImageFormatError(f"non-positive geometry in {sidecar}")
    raw = payload.read_bytes() if payload.exists() else b""
    expected = 4 * b * w * h
    if len(raw) != expected:
        raise PayloadLengthError(
            f"{payload}: payload is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(b, w * h)
    centers = header.get("band_centers")
    return MultiBandImage(w, h, b, data,
                          tuple(centers) if centers is not None else None)


def _to_bytes_grid(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("export expects a 2-D grid")
    if values.dtype == bool or set(np.unique(values)).issubset({0, 1}):
        return (values.astype(np.uint8) * 255)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (values - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def export_map(values: np.ndarray, path: str | Path,
               fmt: str = "pgm") -> None:
    """Render a binary map (0/255) or energy image (min-max scaled)."""
    grid = _to_bytes_grid(values)
    h, w = grid.shape
    path = Path(path)
    if fmt == "pgm":
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        path.write_bytes(header + grid.tobytes())
    elif fmt == "png":
        from PIL import Image
        Image.fromarray(grid, mode="L").save(path, format="PNG")
    else:
        raise ValueError(f"unknown export format {fmt!r}")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "latent": {"width": 32, "height": 32, "bands": 4},
    "scene": {"region_count": 8, "signature_scale": 1.0},
    "change": {"changed_fraction": 0.08, "blob_count": 3, "magnitude": 1.0},
    "sensor1": {},
    "sensor2": {},
    "noise1": 1e-3,
    "noise2": 1e-3,
    "inputs": {},
    "params": {
        "lam": 1e-3,
        "gamma": 1.0,
        "mu": 1.0,
        "tol": 1e-8,
        "max_iters": 500,
        "outer_iters": 50,
        "outer_tol": 1e-5,
    },
    "threshold": {"rule": "otsu", "value": None},
    "seed": 0,
    "out_dir": "out",
}


def load_config(path: str | Path) -> dict:
    """Parse a JSON run configuration and merge in the defaults."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"config {p} must be a JSON object")
    return effective_config(raw)


def effective_config(raw: dict) -> dict:
    """Defaults-applied copy of a configuration document."""
    cfg = {}
    for key, default in _DEFAULTS.items():
        if isinstance(default, dict):
            merged = dict(default)
            merged.update(raw.get(key) or {})
            cfg[key] = merged
        else:
            cfg[key] = raw.get(key, default)
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def build_degradation(sensor: dict, latent_bands: int) -> DegradationModel:
    """Assemble a degradation model from a sensor configuration block."""
    spectral = None
    if sensor.get("band_groups"):
        spectral = build_band_averaging(
            [list(g) for g in sensor["band_groups"]], latent_bands)
    blur = None
    decimation = None
    if sensor.get("decimation"):
        dr, dc = (int(v) for v in sensor["decimation"])
        decimation = Decimation(dr, dc)
        sigma = float(sensor.get("blur_sigma", 0.5 * max(dr, dc)))
        side = int(sensor.get("kernel_side", 2 * int(np.ceil(3 * sigma)) + 1))
        blur = build_gaussian_blur(sigma, side)
    return DegradationModel(spectral=spectral, blur=blur,
                            decimation=decimation)


def build_noise(value, bands: int) -> NoiseModel:
    """Noise model from a scalar variance or per-band list."""
    if np.isscalar(value):
        return NoiseModel.isotropic(float(value), bands)
    return NoiseModel(np.asarray(value, dtype=np.float64))
