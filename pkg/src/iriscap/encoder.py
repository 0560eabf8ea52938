"""Gabor phase encoding of normalized (unwrapped) iris textures."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .template import (
    DimensionError,
    ParameterError,
    PackedTemplate,
    TemplateGeometry,
    pack_template,
)

KERNEL_SHAPES = ((9, 51), (9, 27), (9, 15))
MASK_COVERAGE = 0.5


@dataclass(frozen=True)
class GaborParams:
    rows: int
    cols: int
    wavelength: float
    sigma_rows: float
    sigma_cols: float
    orientation: float = 0.0

    @classmethod
    def default(cls, rows: int, cols: int) -> "GaborParams":
        return cls(rows, cols, cols / 2, rows / 4, cols / 4, 0.0)


@dataclass(frozen=True)
class FilterBank:
    params: tuple
    kernels: tuple

    def __len__(self):
        return len(self.kernels)


@dataclass(frozen=True)
class NormalizedTexture:
    pixels: np.ndarray
    occlusion: np.ndarray

    @classmethod
    def full(cls, pixels) -> "NormalizedTexture":
        pixels = np.asarray(pixels, dtype=float)
        return cls(pixels, np.ones(pixels.shape, dtype=bool))

    @property
    def shape(self):
        return self.pixels.shape


def gabor_kernel(p: GaborParams) -> np.ndarray:
    if p.wavelength <= 0 or p.sigma_rows <= 0 or p.sigma_cols <= 0:
        raise ParameterError(f"wavelength and envelope widths must be positive: {p}")
    if p.rows <= 0 or p.cols <= 0:
        raise ParameterError(f"kernel size must be positive: {p.rows}x{p.cols}")
    y = np.arange(p.rows) - (p.rows - 1) / 2
    x = np.arange(p.cols) - (p.cols - 1) / 2
    yy, xx = np.meshgrid(y, x, indexing="ij")
    # rotate carrier axis; orientation 0 runs along the angular (column) axis
    u = xx * np.cos(p.orientation) + yy * np.sin(p.orientation)
    envelope = np.exp(-0.5 * ((yy / p.sigma_rows) ** 2 + (xx / p.sigma_cols) ** 2))
    kernel = envelope * np.exp(2j * np.pi * u / p.wavelength)
    return (kernel.real - kernel.real.mean()) + 1j * (kernel.imag - kernel.imag.mean())


def build_filter_bank(params=None) -> FilterBank:
    if params is None:
        params = [GaborParams.default(r, c) for r, c in KERNEL_SHAPES]
    params = tuple(p if isinstance(p, GaborParams) else GaborParams(**p) for p in params)
    if len(params) != 3:
        raise ParameterError(f"filter bank needs 3 parameter sets, got {len(params)}")
    return FilterBank(params, tuple(gabor_kernel(p) for p in params))


def quantize_phase(response) -> tuple[int, int]:
    """Gray-coded quadrant bits (real >= 0, imag >= 0)."""
    response = complex(response)
    return int(response.real >= 0), int(response.imag >= 0)


def quantize_array(response: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return response.real >= 0, response.imag >= 0


def _correlate(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlation centred on each pixel: zero rows beyond the edges, wrap columns."""
    kr, kc = kernel.shape
    pr, pc = kr // 2, kc // 2
    padded = np.pad(image, ((pr, kr - 1 - pr), (0, 0)), mode="constant")
    padded = np.pad(padded, ((0, 0), (pc, kc - 1 - pc)), mode="wrap")
    return signal.correlate(padded, kernel, mode="valid", method="direct")


def filter_response(texture: NormalizedTexture, kernel: np.ndarray) -> np.ndarray:
    usable = np.asarray(texture.occlusion, dtype=bool)
    pixels = np.asarray(texture.pixels, dtype=float)
    centred = np.where(usable, pixels - pixels[usable].mean() if usable.any() else 0.0, 0.0)
    # correlate() conjugates the kernel: sum(texture * conj(kernel))
    return _correlate(centred, kernel)


def mask_coverage(occlusion: np.ndarray, kernel_shape) -> np.ndarray:
    ones = np.ones(kernel_shape)
    return _correlate(np.asarray(occlusion, dtype=float), ones) / ones.size


def encode(texture: NormalizedTexture, bank: FilterBank, filter_index: int,
           geometry: TemplateGeometry, identity_id: str = "", sample_id: str = "") -> PackedTemplate:
    if not 0 <= filter_index < len(bank):
        raise ParameterError(f"filter_index {filter_index} out of range 0..{len(bank) - 1}")
    if texture.shape != (geometry.rows, geometry.cols):
        raise DimensionError(
            f"texture shape {texture.shape} does not match geometry grid "
            f"{(geometry.rows, geometry.cols)}")
    if texture.occlusion.shape != texture.shape:
        raise DimensionError(
            f"occlusion shape {texture.occlusion.shape} != texture shape {texture.shape}")
    kernel = bank.kernels[filter_index]
    response = filter_response(texture, kernel)
    re, im = quantize_array(response)
    usable = mask_coverage(texture.occlusion, kernel.shape) >= MASK_COVERAGE - 1e-12
    geo = geometry.with_planes(2)
    return pack_template(np.stack([re, im]), np.stack([usable, usable]), geo,
                         identity_id, sample_id)


def resample_texture(texture: NormalizedTexture, rows: int, cols: int) -> NormalizedTexture:
    """Sample a texture on a rows x cols grid of patch centres (bilinear, angular wrap)."""
    src_r, src_c = texture.shape
    rr = (np.arange(rows) + 0.5) * src_r / rows - 0.5
    cc = (np.arange(cols) + 0.5) * src_c / cols - 0.5
    grid = np.meshgrid(rr, cc, indexing="ij")
    pixels = ndimage.map_coordinates(np.asarray(texture.pixels, float), grid, order=1,
                                     mode="grid-wrap")
    occ = ndimage.map_coordinates(np.asarray(texture.occlusion, float), grid, order=1,
                                  mode="grid-wrap") >= 0.5
    return NormalizedTexture(pixels, occ)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) 8-bit PGM as a uint8 array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    if magic == b"P5":
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
    elif magic == b"P2":
        raw = np.array(data[pos:].split()[:width * height], dtype=np.uint8)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    if raw.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, found {raw.size}")
    return raw.reshape(height, width)


def write_pgm(path, image: np.ndarray):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + image.tobytes())


def load_texture(path, occlusion_path=None) -> NormalizedTexture:
    pixels = read_pgm(path).astype(float) / 255.0
    if occlusion_path is None:
        occlusion = np.ones(pixels.shape, dtype=bool)
    else:
        occlusion = read_pgm(occlusion_path) >= 128
        if occlusion.shape != pixels.shape:
            raise DimensionError(
                f"occlusion {occlusion_path} shape {occlusion.shape} != texture {pixels.shape}")
    return NormalizedTexture(pixels, occlusion)
