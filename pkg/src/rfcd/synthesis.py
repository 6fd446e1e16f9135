"""Synthetic scenes, planted changes, observation simulation, and metrics.

Stands in for real-sensor experiments: a Voronoi mosaic plays the latent
scene, disk-shaped spectral perturbations play the ground-truth changes,
and a seeded forward simulation produces the observed pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, sqrt

import numpy as np

from .images import DegradationModel, MultiBandImage, NoiseModel, \
    apply_forward, sample_noise

__all__ = [
    "SceneSpec",
    "ChangeSpec",
    "MetricsReport",
    "generate_latent_scene",
    "plant_changes",
    "simulate_observation",
    "evaluate",
]


@dataclass(frozen=True)
class SceneSpec:
    """Piecewise-constant mosaic: grid size, bands, regions, value range."""

    width: int
    height: int
    band_count: int
    region_count: int = 8
    signature_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.width, self.height, self.band_count,
               self.region_count) < 1:
            raise ValueError("all counts must be >= 1")
        if self.signature_scale <= 0:
            raise ValueError("signature_scale must be > 0")


@dataclass(frozen=True)
class ChangeSpec:
    """Sparse planted changes: total fraction, blob count, amplitude."""

    changed_fraction: float
    blob_count: int = 3
    magnitude: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.changed_fraction < 1.0:
            raise ValueError("changed_fraction must be in (0, 1)")
        if self.blob_count < 1:
            raise ValueError("blob_count must be >= 1")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")


@dataclass
class MetricsReport:
    """Confusion counts plus derived scores and an optional ROC sweep."""

    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    roc: list[tuple[float, float]] = field(default_factory=list)
    auc: float | None = None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "auc": self.auc,
            "roc": [[float(a), float(b)] for a, b in self.roc],
        }


def generate_latent_scene(spec: SceneSpec) -> MultiBandImage:
    """Voronoi partition with a random spectral signature per cell."""
    rng = np.random.default_rng(spec.seed)
    rows = rng.uniform(0, spec.height, spec.region_count)
    cols = rng.uniform(0, spec.width, spec.region_count)
    signatures = rng.uniform(0.0, spec.signature_scale,
                             (spec.region_count, spec.band_count))
    rr, cc = np.meshgrid(np.arange(spec.height), np.arange(spec.width),
                         indexing="ij")
    d2 = (rr[..., None] - rows) ** 2 + (cc[..., None] - cols) ** 2
    labels = np.argmin(d2, axis=-1).ravel()
    data = signatures[labels].T
    return MultiBandImage(spec.width, spec.height, spec.band_count, data)


def plant_changes(x1: MultiBandImage, spec: ChangeSpec,
                  seed: int = 0) -> tuple[MultiBandImage, np.ndarray]:
    """Perturb disk-shaped regions; truth marks exactly the touched pixels."""
    rng = np.random.default_rng(seed)
    h, w = x1.height, x1.width
    target = spec.changed_fraction * h * w
    per_blob = target / spec.blob_count
    radius = max(1.0, sqrt(per_blob / np.pi))
    if 2 * radius + 1 > min(h, w):
        raise ValueError(
            "changed_fraction too large for blob geometry on this grid"
        )
    mask = np.zeros((h, w), dtype=bool)
    delta = np.zeros((x1.band_count, h, w))
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    margin = ceil(radius)
    for _ in range(spec.blob_count):
        cy = rng.integers(margin, h - margin)
        cx = rng.integers(margin, w - margin)
        disk = (rr - cy) ** 2 + (cc - cx) ** 2 <= radius ** 2
        direction = rng.standard_normal(x1.band_count)
        direction *= spec.magnitude / max(np.linalg.norm(direction), 1e-12)
        delta[:, disk] = direction[:, None]
        mask |= disk
    x2 = x1.with_data(x1.data + delta.reshape(x1.band_count, h * w))
    return x2, mask.ravel()


def simulate_observation(x: MultiBandImage, model: DegradationModel,
                         noise: NoiseModel, seed: int = 0) -> MultiBandImage:
    """Forward-degrade a latent image and add seeded band-dependent noise."""
    clean = apply_forward(model, x)
    n = sample_noise(noise, clean.band_count, clean.pixel_count, seed)
    return clean.with_data(clean.data + n)


def _block_replicate(values: np.ndarray, truth_shape: tuple[int, int]) -> np.ndarray:
    h, w = values.shape
    th, tw = truth_shape
    if th % h != 0 or tw % w != 0:
        raise ValueError(
            f"cannot align {h}x{w} values to {th}x{tw} truth by replication"
        )
    return np.repeat(np.repeat(values, th // h, axis=0), tw // w, axis=1)


def evaluate(values: np.ndarray, truth: np.ndarray,
             tau: float | None = None, sweep: bool = False) -> MetricsReport:
    """Score an energy image or binary map against a truth mask.

    Both arguments are 2-D grids; a coarser score grid is block-replicated
    to the truth grid first.  With sweep=True an ROC over every distinct
    value is added, with trapezoidal area under the curve.
    """
    values = np.asarray(values, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if values.ndim != 2 or truth.ndim != 2:
        raise ValueError("evaluate expects 2-D grids")
    if values.shape != truth.shape:
        values = _block_replicate(values, truth.shape)
    v = values.ravel()
    t = truth.ravel()
    decision = v >= tau if tau is not None else v > 0
    tp = int(np.sum(decision & t))
    fp = int(np.sum(decision & ~t))
    fn = int(np.sum(~decision & t))
    tn = int(np.sum(~decision & ~t))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    roc: list[tuple[float, float]] = []
    auc = None
    if sweep:
        pos = max(int(t.sum()), 1)
        neg = max(int((~t).sum()), 1)
        order = np.argsort(-v, kind="stable")
        sorted_t = t[order]
        sorted_v = v[order]
        tps = np.cumsum(sorted_t)
        fps = np.cumsum(~sorted_t)
        # keep one operating point per distinct threshold
        keep = np.r_[np.diff(sorted_v) != 0, True]
        tpr = np.r_[0.0, tps[keep] / pos]
        fpr = np.r_[0.0, fps[keep] / neg]
        roc = list(zip(fpr.tolist(), tpr.tolist()))
        auc = float(np.trapezoid(tpr, fpr))
    return MetricsReport(tp=tp, fp=fp, tn=tn, fn=fn, precision=precision,
                         recall=recall, f1=f1, roc=roc, auc=auc)
