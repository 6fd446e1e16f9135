"""Change-vector-analysis outputs and the worst-case baseline.

The change image is summarized by a per-pixel energy (column norm), a
threshold turns energy into a binary decision map, and the worst-case
baseline degrades both observations to a common resolution before a plain
image difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, lcm

import numpy as np

from .images import (
    BlurKernel,
    Decimation,
    DegradationModel,
    MultiBandImage,
    apply_spatial,
    build_gaussian_blur,
)

__all__ = [
    "ChangeResult",
    "change_energy",
    "threshold_map",
    "wc_baseline",
]


@dataclass
class ChangeResult:
    """Change image plus its energy, threshold, and binary decision map."""

    dx: MultiBandImage
    energy: np.ndarray
    tau: float
    map: np.ndarray
    trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.energy.shape != self.map.shape:
            raise ValueError("energy and map must share a pixel grid")
        if np.any(self.energy < 0):
            raise ValueError("energy must be >= 0")


def change_energy(dx: MultiBandImage) -> np.ndarray:
    """Per-pixel Euclidean norm across bands."""
    return np.linalg.norm(dx.data, axis=0)


def _otsu_threshold(energy: np.ndarray) -> float:
    lo, hi = float(energy.min()), float(energy.max())
    if hi <= lo:
        return lo
    bins = 256
    hist, edges = np.histogram(energy, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    omega = np.cumsum(p)
    mu = np.cumsum(p * centers)
    mu_t = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    # decision rule is e >= tau, so split just above the chosen bin
    return float(edges[k + 1])


def threshold_map(energy: np.ndarray, rule: str = "otsu",
                  value: float | None = None) -> tuple[float, np.ndarray]:
    """Pick a threshold and return (tau, binary map with e >= tau)."""
    energy = np.asarray(energy, dtype=np.float64).ravel()
    if energy.size == 0:
        raise ValueError("empty energy vector")
    if rule == "fixed":
        if value is None:
            raise ValueError("fixed rule requires a threshold value")
        tau = float(value)
    elif rule == "quantile":
        if value is None or not 0.0 < value < 1.0:
            raise ValueError("quantile rule requires q in (0, 1)")
        tau = float(np.quantile(energy, value))
    elif rule == "otsu":
        tau = _otsu_threshold(energy)
    else:
        raise ValueError(f"unknown threshold rule {rule!r}")
    return tau, (energy >= tau).astype(np.uint8)


def _paired_rows(l1: np.ndarray, l2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Selection matrices keeping output bands with identical relative shape."""
    n1 = l1 / l1.sum(axis=1, keepdims=True)
    n2 = l2 / l2.sum(axis=1, keepdims=True)
    pairs = []
    used = set()
    for i in range(n1.shape[0]):
        for j in range(n2.shape[0]):
            if j in used:
                continue
            if np.allclose(n1[i], n2[j], atol=1e-10):
                pairs.append((i, j))
                used.add(j)
                break
    if not pairs:
        raise ValueError("sensors share no common spectral band")
    p1 = np.zeros((len(pairs), l1.shape[0]))
    p2 = np.zeros((len(pairs), l2.shape[0]))
    for k, (i, j) in enumerate(pairs):
        p1[k, i] = 1.0
        p2[k, j] = 1.0
    return p1, p2


def _common_spectral(model1: DegradationModel, model2: DegradationModel,
                     bands1: int, bands2: int) -> tuple[np.ndarray, np.ndarray]:
    l1 = model1.spectral.matrix if model1.has_spectral else None
    l2 = model2.spectral.matrix if model2.has_spectral else None
    if l1 is None and l2 is None:
        if bands1 != bands2:
            raise ValueError("band counts differ without spectral models")
        eye = np.eye(bands1)
        return eye, eye
    if l1 is not None and l2 is None:
        return np.eye(bands1), l1
    if l1 is None and l2 is not None:
        return l2, np.eye(bands2)
    return _paired_rows(l1, l2)


def _extra_spatial(model: DegradationModel, target_r: int, target_c: int,
                   height: int, width: int) -> DegradationModel | None:
    dr = model.decimation.row_factor if model.has_spatial else 1
    dc = model.decimation.col_factor if model.has_spatial else 1
    fr, fc = target_r // dr, target_c // dc
    if fr == 1 and fc == 1:
        return None
    sigma = 0.5 * max(fr, fc)
    side = 2 * ceil(3 * sigma) + 1
    largest_odd = min(height, width) - (1 - min(height, width) % 2)
    side = min(side, largest_odd)
    return DegradationModel(blur=build_gaussian_blur(sigma, side),
                            decimation=Decimation(fr, fc))


def wc_baseline(y1: MultiBandImage, y2: MultiBandImage,
                model1: DegradationModel, model2: DegradationModel,
                rule: str = "otsu", value: float | None = None) -> ChangeResult:
    """Degrade both observations to a shared grid and band set, then CVA.

    The common grid uses the least common multiple of the decimation factors
    per axis; the common band set keeps only spectrally matching bands.
    """
    s1, s2 = _common_spectral(model1, model2, y1.band_count, y2.band_count)
    a = y1.with_data(s1 @ y1.data)
    b = y2.with_data(s2 @ y2.data)
    d1r = model1.decimation.row_factor if model1.has_spatial else 1
    d1c = model1.decimation.col_factor if model1.has_spatial else 1
    d2r = model2.decimation.row_factor if model2.has_spatial else 1
    d2c = model2.decimation.col_factor if model2.has_spatial else 1
    tr, tc = lcm(d1r, d2r), lcm(d1c, d2c)
    extra1 = _extra_spatial(model1, tr, tc, a.height, a.width)
    extra2 = _extra_spatial(model2, tr, tc, b.height, b.width)
    if extra1 is not None:
        a = apply_spatial(extra1, a)
    if extra2 is not None:
        b = apply_spatial(extra2, b)
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("observations do not reach a common grid")
    diff = b.with_data(b.data - a.data)
    energy = change_energy(diff)
    tau, decision = threshold_map(energy, rule, value)
    return ChangeResult(dx=diff, energy=energy, tau=tau, map=decision)
