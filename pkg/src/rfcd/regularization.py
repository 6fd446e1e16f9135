"""Penalty functionals and proximal mappings.

The latent image carries a quadratic pull towards a crude estimate; the
change image carries a column-sparsity penalty (sum of per-pixel Euclidean
norms) whose proximal mapping is a group soft-threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import (
    Decimation,
    DegradationModel,
    MultiBandImage,
)

__all__ = [
    "RegularizationParams",
    "l21_norm",
    "group_soft_threshold",
    "tikhonov_penalty",
    "crude_estimate",
]


@dataclass(frozen=True)
class RegularizationParams:
    """Weights for the latent-image pull (lam) and change sparsity (gamma)."""

    lam: float = 1e-3
    gamma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be finite and >= 0")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and >= 0")


def l21_norm(image: MultiBandImage | np.ndarray) -> float:
    """Sum of per-pixel (column) Euclidean norms."""
    data = image.data if isinstance(image, MultiBandImage) else np.asarray(image)
    return float(np.linalg.norm(data, axis=0).sum())


def group_soft_threshold(image: MultiBandImage, kappa: float) -> MultiBandImage:
    """Proximal operator of kappa * l21 under the 1/2 squared Frobenius metric.

    Each pixel column a is mapped to a * max(0, 1 - kappa/||a||).
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    data = image.data
    norms = np.linalg.norm(data, axis=0)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - kappa / norms[nz])
    return image.with_data(data * scale)


def tikhonov_penalty(image: MultiBandImage, reference: MultiBandImage) -> float:
    """Squared Frobenius distance to the crude estimate."""
    if image.data.shape != reference.data.shape:
        raise ValueError(
            f"shape mismatch {image.data.shape} vs {reference.data.shape}"
        )
    return float(np.sum((image.data - reference.data) ** 2))


def _nearest_neighbor_upsample(image: MultiBandImage, dec: Decimation) -> MultiBandImage:
    dr, dc = dec.row_factor, dec.col_factor
    cube = image.cube()
    out = np.repeat(np.repeat(cube, dr, axis=1), dc, axis=2)
    return MultiBandImage.from_cube(out)


def crude_estimate(observed: MultiBandImage, model: DegradationModel,
                   target_bands: int, target_height: int,
                   target_width: int) -> MultiBandImage:
    """Cheap deterministic back-projection of an observation to the latent grid.

    Spectral degradation is undone by the right pseudo-inverse of the response;
    spatial degradation by nearest-neighbor replication of each pixel.
    """
    out = observed
    if model.spectral is not None:
        L = model.spectral.matrix
        back = L.T @ np.linalg.solve(L @ L.T, out.data)
        out = MultiBandImage(out.width, out.height, L.shape[1], back)
    if model.decimation is not None and model.decimation.factor > 1:
        out = _nearest_neighbor_upsample(out, model.decimation)
    if (out.band_count, out.height, out.width) != (target_bands, target_height,
                                                  target_width):
        raise ValueError(
            f"crude estimate has shape {out.band_count}x{out.height}x{out.width},"
            f" expected {target_bands}x{target_height}x{target_width}"
        )
    return out
