"""Multi-band image containers and the linear degradation operators.

An observed image is modelled as a spectrally mixed, cyclically blurred and
uniformly decimated version of a latent image, plus band-dependent Gaussian
noise.  Everything here is a pure function of immutable value types; the
canonical data layout is a band-major matrix with pixels flattened row-major
over (row, col).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MultiBandImage",
    "SpectralResponse",
    "BlurKernel",
    "Decimation",
    "DegradationModel",
    "NoiseModel",
    "apply_spectral",
    "apply_spectral_adjoint",
    "apply_blur",
    "decimate",
    "upsample_adjoint",
    "apply_forward",
    "apply_spatial",
    "apply_spatial_adjoint",
    "sample_noise",
    "build_gaussian_blur",
    "build_band_averaging",
]


@dataclass(frozen=True)
class MultiBandImage:
    """A band_count x (width*height) raster with explicit geometry."""

    width: int
    height: int
    band_count: int
    data: np.ndarray
    band_centers: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.band_count < 1:
            raise ValueError(
                f"invalid geometry {self.band_count}x{self.height}x{self.width}"
            )
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.band_count, self.width * self.height):
            raise ValueError(
                f"data shape {data.shape} does not match "
                f"{self.band_count} bands x {self.width * self.height} pixels"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def cube(self) -> np.ndarray:
        """View as (bands, height, width)."""
        return self.data.reshape(self.band_count, self.height, self.width)

    @classmethod
    def from_cube(cls, cube: np.ndarray,
                  band_centers: tuple[float, ...] | None = None) -> "MultiBandImage":
        cube = np.asarray(cube, dtype=np.float64)
        if cube.ndim != 3:
            raise ValueError("expected a (bands, height, width) array")
        b, h, w = cube.shape
        return cls(width=w, height=h, band_count=b,
                   data=cube.reshape(b, h * w), band_centers=band_centers)

    def with_data(self, data: np.ndarray) -> "MultiBandImage":
        return MultiBandImage(self.width, self.height, data.shape[0], data,
                              self.band_centers if data.shape[0] == self.band_count
                              else None)


@dataclass(frozen=True)
class SpectralResponse:
    """Band-mixing matrix of shape out_bands x in_bands, rows >= 0."""

    matrix: np.ndarray
    normalized: bool = field(init=False, default=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("spectral response must be a 2-D matrix")
        if m.shape[0] > m.shape[1]:
            raise ValueError(
                f"out_bands {m.shape[0]} exceeds in_bands {m.shape[1]}"
            )
        if np.any(m < 0):
            raise ValueError("spectral response entries must be >= 0")
        row_sums = m.sum(axis=1)
        if np.any(row_sums == 0):
            raise ValueError("spectral response has an all-zero row")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "normalized",
                           bool(np.all(np.abs(row_sums - 1.0) <= 1e-12)))

    @property
    def out_bands(self) -> int:
        return self.matrix.shape[0]

    @property
    def in_bands(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class BlurKernel:
    """Centrosymmetric 2-D convolution kernel, cyclic boundary, sums to 1."""

    taps: np.ndarray
    boundary: str = "cyclic"

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ValueError("kernel must be 2-D with odd side lengths")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ValueError("kernel must sum to 1")
        if not np.allclose(taps, taps[::-1, ::-1], atol=1e-12):
            raise ValueError("kernel must be centrosymmetric")
        if self.boundary != "cyclic":
            raise ValueError("only cyclic boundary is supported")
        object.__setattr__(self, "taps", taps)

    def frequency_response(self, height: int, width: int) -> np.ndarray:
        """Real 2-D DFT of the kernel centred at the origin (OTF)."""
        kh, kw = self.taps.shape
        if kh > height or kw > width:
            raise ValueError(
                f"kernel {kh}x{kw} larger than image {height}x{width}"
            )
        pad = np.zeros((height, width))
        pad[:kh, :kw] = self.taps
        pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
        # centrosymmetric kernel -> real transfer function
        return np.real(np.fft.fft2(pad))


@dataclass(frozen=True)
class Decimation:
    """Uniform downsampling keeping the top-left pixel of each block."""

    row_factor: int = 1
    col_factor: int = 1

    def __post_init__(self):
        if self.row_factor < 1 or self.col_factor < 1:
            raise ValueError("decimation factors must be >= 1")

    @property
    def factor(self) -> int:
        return self.row_factor * self.col_factor


@dataclass(frozen=True)
class DegradationModel:
    """Per-sensor degradation: optional spectral mixing and blur+decimation."""

    spectral: SpectralResponse | None = None
    blur: BlurKernel | None = None
    decimation: Decimation | None = None

    def __post_init__(self):
        if (self.blur is None) != (self.decimation is None):
            raise ValueError(
                "blur and decimation must be present or absent together"
            )

    @property
    def has_spectral(self) -> bool:
        return self.spectral is not None

    @property
    def has_spatial(self) -> bool:
        return self.blur is not None

    @property
    def spatial_factor(self) -> int:
        return self.decimation.factor if self.decimation is not None else 1


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal per-band noise variances; pixel covariance is identity."""

    band_variances: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.band_variances, dtype=np.float64))
        if np.any(v < 0):
            raise ValueError("noise variances must be >= 0")
        object.__setattr__(self, "band_variances", v)

    @property
    def band_count(self) -> int:
        return self.band_variances.shape[0]

    def inverse_variances(self) -> np.ndarray:
        if np.any(self.band_variances == 0):
            raise ValueError("zero noise variance is not invertible")
        return 1.0 / self.band_variances

    @classmethod
    def isotropic(cls, sigma2: float, bands: int) -> "NoiseModel":
        return cls(np.full(bands, float(sigma2)))


def apply_spectral(response: SpectralResponse, image: MultiBandImage) -> MultiBandImage:
    """Left-multiply by the band-mixing matrix."""
    if response.in_bands != image.band_count:
        raise ValueError(
            f"spectral response expects {response.in_bands} bands, "
            f"image has {image.band_count}"
        )
    return MultiBandImage(image.width, image.height, response.out_bands,
                          response.matrix @ image.data)


def apply_spectral_adjoint(response: SpectralResponse,
                           image: MultiBandImage) -> MultiBandImage:
    if response.out_bands != image.band_count:
        raise ValueError(
            f"adjoint spectral response expects {response.out_bands} bands, "
            f"image has {image.band_count}"
        )
    return MultiBandImage(image.width, image.height, response.in_bands,
                          response.matrix.T @ image.data)


def apply_blur(kernel: BlurKernel, image: MultiBandImage) -> MultiBandImage:
    """Cyclic convolution of every band with the kernel."""
    otf = kernel.frequency_response(image.height, image.width)
    cube = image.cube()
    out = np.real(np.fft.ifft2(np.fft.fft2(cube, axes=(1, 2)) * otf, axes=(1, 2)))
    return MultiBandImage.from_cube(out, image.band_centers)


def decimate(dec: Decimation, image: MultiBandImage) -> MultiBandImage:
    dr, dc = dec.row_factor, dec.col_factor
    if image.height % dr != 0 or image.width % dc != 0:
        raise ValueError(
            f"image {image.height}x{image.width} not divisible by "
            f"decimation factors {dr}x{dc}"
        )
    cube = image.cube()[:, ::dr, ::dc]
    return MultiBandImage.from_cube(cube, image.band_centers)


def upsample_adjoint(dec: Decimation, image: MultiBandImage) -> MultiBandImage:
    """Zero-interpolation upsampling; exact adjoint of decimate."""
    dr, dc = dec.row_factor, dec.col_factor
    out = np.zeros((image.band_count, image.height * dr, image.width * dc))
    out[:, ::dr, ::dc] = image.cube()
    return MultiBandImage.from_cube(out, image.band_centers)


def apply_spatial(model: DegradationModel, image: MultiBandImage) -> MultiBandImage:
    if model.blur is None:
        return image
    return decimate(model.decimation, apply_blur(model.blur, image))


def apply_spatial_adjoint(model: DegradationModel,
                          image: MultiBandImage) -> MultiBandImage:
    if model.blur is None:
        return image
    # B is self-adjoint (centrosymmetric kernel, cyclic boundary)
    return apply_blur(model.blur, upsample_adjoint(model.decimation, image))


def apply_forward(model: DegradationModel, image: MultiBandImage) -> MultiBandImage:
    """Noiseless forward model: spectral mixing, then blur, then decimation."""
    out = image
    if model.spectral is not None:
        out = apply_spectral(model.spectral, out)
    return apply_spatial(model, out)


def sample_noise(noise: NoiseModel, bands: int, pixels: int,
                 seed: int) -> np.ndarray:
    """Matrix-normal sample with diagonal row covariance, identity columns."""
    if noise.band_count != bands:
        raise ValueError(
            f"noise model has {noise.band_count} variances, expected {bands}"
        )
    rng = np.random.default_rng(seed)
    std = np.sqrt(noise.band_variances)[:, None]
    return rng.standard_normal((bands, pixels)) * std


def build_gaussian_blur(sigma: float, side: int) -> BlurKernel:
    """Truncated isotropic Gaussian kernel, renormalized to sum 1."""
    if side < 1 or side % 2 == 0:
        raise ValueError("kernel side must be a positive odd integer")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    half = side // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    taps = np.outer(g, g)
    return BlurKernel(taps / taps.sum())


def build_band_averaging(groups: list[list[int]], in_bands: int) -> SpectralResponse:
    """Spectral response averaging the listed source bands into each output band."""
    m = np.zeros((len(groups), in_bands))
    for i, group in enumerate(groups):
        if not group:
            raise ValueError(f"output band {i} averages no source bands")
        for j in group:
            if not 0 <= j < in_bands:
                raise ValueError(f"source band {j} out of range 0..{in_bands - 1}")
            m[i, j] = 1.0 / len(group)
    return SpectralResponse(m)
