"""Robust-fusion change detection between multi-band optical images.

Estimates a latent high-resolution image and a sparse change image jointly
from two observations of arbitrary spatial and spectral resolutions, then
derives a binary change map from the change energy.
"""

from .images import (
    BlurKernel,
    Decimation,
    DegradationModel,
    MultiBandImage,
    NoiseModel,
    SpectralResponse,
    apply_forward,
    build_band_averaging,
    build_gaussian_blur,
    sample_noise,
)
from .regularization import RegularizationParams, group_soft_threshold, l21_norm
from .solvers import SolverOptions
from .scenarios import (
    AmState,
    ScenarioPlan,
    classify_scenario,
    resolve_pitches,
    robust_fusion_cd,
)
from .detection import ChangeResult, change_energy, threshold_map, wc_baseline
from .synthesis import (
    ChangeSpec,
    MetricsReport,
    SceneSpec,
    evaluate,
    generate_latent_scene,
    plant_changes,
    simulate_observation,
)
from .io import export_map, read_image, write_image

__version__ = "0.1.0"

__all__ = [
    "BlurKernel",
    "Decimation",
    "DegradationModel",
    "MultiBandImage",
    "NoiseModel",
    "SpectralResponse",
    "apply_forward",
    "build_band_averaging",
    "build_gaussian_blur",
    "sample_noise",
    "RegularizationParams",
    "group_soft_threshold",
    "l21_norm",
    "SolverOptions",
    "AmState",
    "ScenarioPlan",
    "classify_scenario",
    "resolve_pitches",
    "robust_fusion_cd",
    "ChangeResult",
    "change_energy",
    "threshold_map",
    "wc_baseline",
    "ChangeSpec",
    "MetricsReport",
    "SceneSpec",
    "evaluate",
    "generate_latent_scene",
    "plant_changes",
    "simulate_observation",
    "export_map",
    "read_image",
    "write_image",
    "__version__",
]
