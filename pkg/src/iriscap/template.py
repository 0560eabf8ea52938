"""Packed IrisCode templates.

A template holds a code and a mask of identical logical shape
``(bit_planes, rows, cols)``. Planes are ordered per filter resolution as
(real, imaginary); a multi-resolution template has six planes. Each row of a
plane is packed little-endian into 64-bit words, so column ``c`` lives in bit
``c % 64`` of word ``c // 64``. Padding bits past ``cols`` are always zero.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

WORD_BITS = 64
FEATURE_LEVELS = (100, 75, 50, 25, 20, 15, 10)

# (extracted rows, cols, stripped rows) per dimension tag
_DIMENSIONS = {
    "D1": (64, 512, 47),
    "D2": (70, 256, 51),
}
PUPIL_STRIP_FRACTION = 0.09


class DimensionTag(str, Enum):
    D1 = "D1"
    D2 = "D2"


class ResolutionMode(str, Enum):
    SINGLE = "Single"
    MULTI = "Multi"


class TemplateError(ValueError):
    pass


class DimensionError(TemplateError):
    pass


class StackingError(TemplateError):
    pass


class ParameterError(TemplateError):
    pass


class FormatError(TemplateError):
    pass


@dataclass(frozen=True)
class TemplateGeometry:
    rows: int
    cols: int
    bit_planes: int
    dimension_tag: DimensionTag = DimensionTag.D1
    resolution_mode: ResolutionMode = ResolutionMode.SINGLE

    def __post_init__(self):
        object.__setattr__(self, "dimension_tag", DimensionTag(self.dimension_tag))
        object.__setattr__(self, "resolution_mode", ResolutionMode(self.resolution_mode))
        if self.rows <= 0 or self.cols <= 0:
            raise DimensionError(f"rows and cols must be positive, got {self.rows}x{self.cols}")
        if self.bit_planes <= 0 or self.bit_planes % 2:
            raise DimensionError(f"bit_planes must be a positive even count, got {self.bit_planes}")

    @classmethod
    def extracted(cls, tag="D1", mode="Single") -> "TemplateGeometry":
        rows, cols, _ = _DIMENSIONS[DimensionTag(tag).value]
        return cls(rows, cols, _planes_for(mode), tag, mode)

    @classmethod
    def stripped(cls, tag="D1", mode="Single") -> "TemplateGeometry":
        _, cols, rows = _DIMENSIONS[DimensionTag(tag).value]
        return cls(rows, cols, _planes_for(mode), tag, mode)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.bit_planes, self.rows, self.cols)

    @property
    def words_per_row(self) -> int:
        return -(-self.cols // WORD_BITS)

    @property
    def packed_shape(self) -> tuple[int, int, int]:
        return (self.bit_planes, self.rows, self.words_per_row)

    @property
    def n_bits(self) -> int:
        return self.bit_planes * self.rows * self.cols

    @property
    def resolutions(self) -> int:
        return self.bit_planes // 2

    @property
    def is_extracted(self) -> bool:
        rows, cols, _ = _DIMENSIONS[self.dimension_tag.value]
        return (self.rows, self.cols) == (rows, cols)

    @property
    def is_stripped(self) -> bool:
        _, cols, rows = _DIMENSIONS[self.dimension_tag.value]
        return (self.rows, self.cols) == (rows, cols)

    def with_planes(self, bit_planes: int) -> "TemplateGeometry":
        mode = ResolutionMode.SINGLE if bit_planes == 2 else ResolutionMode.MULTI
        return TemplateGeometry(self.rows, self.cols, bit_planes, self.dimension_tag, mode)

    def with_rows(self, rows: int) -> "TemplateGeometry":
        return TemplateGeometry(rows, self.cols, self.bit_planes, self.dimension_tag,
                                self.resolution_mode)


def _planes_for(mode) -> int:
    return 2 if ResolutionMode(mode) is ResolutionMode.SINGLE else 6


def strip_rows(geometry: TemplateGeometry) -> tuple[int, int]:
    """Rows removed at the (pupillary, limbus) edges of an extracted template."""
    _, _, kept = _DIMENSIONS[geometry.dimension_tag.value]
    top = math.floor(PUPIL_STRIP_FRACTION * geometry.rows)
    return top, geometry.rows - top - kept


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array along its last axis into little-endian uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    cols = bits.shape[-1]
    n_words = -(-cols // WORD_BITS)
    pad = n_words * WORD_BITS - cols
    if pad:
        bits = np.concatenate(
            [bits, np.zeros(bits.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, cols: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :cols].astype(bool)


def popcount(words: np.ndarray, axis=None):
    return np.bitwise_count(words).sum(axis=axis, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PackedTemplate:
    geometry: TemplateGeometry
    code: np.ndarray
    mask: np.ndarray
    identity_id: str = ""
    sample_id: str = ""
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("code", "mask"):
            arr = getattr(self, name)
            if arr.shape != self.geometry.packed_shape or arr.dtype != np.uint64:
                raise DimensionError(
                    f"{name} words have shape {arr.shape} ({arr.dtype}), "
                    f"expected {self.geometry.packed_shape} uint64")
            arr.flags.writeable = False

    def unpack(self) -> tuple[np.ndarray, np.ndarray]:
        cols = self.geometry.cols
        return unpack_bits(self.code, cols), unpack_bits(self.mask, cols)

    @property
    def mask_popcount(self) -> int:
        return int(popcount(self.mask))

    def plane_slice(self, start: int, stop: int) -> "PackedTemplate":
        geometry = self.geometry.with_planes(stop - start)
        return PackedTemplate(geometry, self.code[start:stop].copy(), self.mask[start:stop].copy(),
                              self.identity_id, self.sample_id)

    def resolution(self, k: int) -> "PackedTemplate":
        return self.plane_slice(2 * k, 2 * k + 2)

    def equals(self, other: "PackedTemplate") -> bool:
        return (self.geometry == other.geometry
                and self.identity_id == other.identity_id
                and self.sample_id == other.sample_id
                and np.array_equal(self.code, other.code)
                and np.array_equal(self.mask, other.mask))


def pack_template(code_bits, mask_bits, geometry: TemplateGeometry,
                  identity_id: str = "", sample_id: str = "") -> PackedTemplate:
    code_bits = np.asarray(code_bits)
    mask_bits = np.asarray(mask_bits)
    for name, arr in (("code", code_bits), ("mask", mask_bits)):
        if arr.shape != geometry.shape:
            raise DimensionError(
                f"{name} bits have shape {arr.shape}, geometry expects {geometry.shape}")
    return PackedTemplate(geometry, pack_bits(code_bits), pack_bits(mask_bits),
                          str(identity_id), str(sample_id))


def strip_boundaries(template: PackedTemplate) -> PackedTemplate:
    geo = template.geometry
    if geo.is_stripped:
        raise TemplateError(
            f"template {template.sample_id!r} is already stripped ({geo.rows}x{geo.cols})")
    if not geo.is_extracted:
        raise DimensionError(
            f"strip_boundaries needs an extracted {geo.dimension_tag.value} template, "
            f"got {geo.rows}x{geo.cols}")
    top, bottom = strip_rows(geo)
    keep = slice(top, geo.rows - bottom)
    return PackedTemplate(geo.with_rows(geo.rows - top - bottom),
                          template.code[:, keep].copy(), template.mask[:, keep].copy(),
                          template.identity_id, template.sample_id)


def stack_resolutions(t1: PackedTemplate, t2: PackedTemplate, t3: PackedTemplate) -> PackedTemplate:
    parts = (t1, t2, t3)
    ref = t1.geometry
    for t in parts:
        g = t.geometry
        if g.bit_planes != 2:
            raise StackingError(f"sample {t.sample_id!r} has {g.bit_planes} planes, expected 2")
        if (g.rows, g.cols, g.dimension_tag) != (ref.rows, ref.cols, ref.dimension_tag):
            raise StackingError(
                f"geometry mismatch: {g.rows}x{g.cols} {g.dimension_tag.value} vs "
                f"{ref.rows}x{ref.cols} {ref.dimension_tag.value}")
        if (t.identity_id, t.sample_id) != (t1.identity_id, t1.sample_id):
            raise StackingError(
                f"identity mismatch: {(t.identity_id, t.sample_id)} vs "
                f"{(t1.identity_id, t1.sample_id)}")
    return PackedTemplate(ref.with_planes(6),
                          np.concatenate([t.code for t in parts]),
                          np.concatenate([t.mask for t in parts]),
                          t1.identity_id, t1.sample_id)


@dataclass(frozen=True)
class ColumnSet:
    retained: np.ndarray
    feature_level: int
    seed: int
    cols: int

    def keep_mask(self) -> np.ndarray:
        keep = np.zeros(self.cols, dtype=bool)
        keep[self.retained] = True
        return keep


def retained_count(cols: int, feature_level: int) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(cols * feature_level / 100 + 0.5))


def sample_column_set(geometry: TemplateGeometry, feature_level: int, seed: int) -> ColumnSet:
    if feature_level not in FEATURE_LEVELS:
        raise ParameterError(f"feature level {feature_level!r} not in {FEATURE_LEVELS}")
    cols = geometry.cols
    if feature_level == 100:
        retained = np.arange(cols)
    else:
        rng = np.random.default_rng(seed)
        retained = np.sort(rng.choice(cols, size=retained_count(cols, feature_level),
                                      replace=False))
    return ColumnSet(retained.astype(np.int64), feature_level, seed, cols)


def column_word_mask(cols: ColumnSet) -> np.ndarray:
    return pack_bits(cols.keep_mask())


def eliminate_columns(template: PackedTemplate, cols: ColumnSet) -> PackedTemplate:
    geo = template.geometry
    retained = np.asarray(cols.retained)
    if retained.size and (retained.min() < 0 or retained.max() >= geo.cols):
        raise ParameterError(f"column index out of range [0, {geo.cols})")
    keep = np.zeros(geo.cols, dtype=bool)
    keep[retained] = True
    mask = template.mask & pack_bits(keep)
    return PackedTemplate(geo, template.code.copy(), mask,
                          template.identity_id, template.sample_id)


# --- binary file format -------------------------------------------------------

MAGIC = b"IRC1"
_HEADER = struct.Struct("<2s6sIII")  # tag, mode, rows, cols, planes


def dumps(template: PackedTemplate) -> bytes:
    geo = template.geometry
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_HEADER.pack(geo.dimension_tag.value.encode(),
                           geo.resolution_mode.value.encode().ljust(6, b"\0"),
                           geo.rows, geo.cols, geo.bit_planes))
    for text in (template.identity_id, template.sample_id):
        raw = text.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(template.code.astype("<u8").tobytes())
    buf.write(template.mask.astype("<u8").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> PackedTemplate:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4
    try:
        tag, mode, rows, cols, planes = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        ids = []
        for _ in range(2):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            ids.append(data[pos:pos + n].decode("utf-8"))
            pos += n
    except struct.error as exc:
        raise FormatError(f"truncated template header: {exc}") from None
    geometry = TemplateGeometry(rows, cols, planes, tag.decode(), mode.rstrip(b"\0").decode())
    n_words = int(np.prod(geometry.packed_shape))
    if len(data) != pos + 16 * n_words:
        raise FormatError(f"payload is {len(data) - pos} bytes, expected {16 * n_words}")
    words = np.frombuffer(data, dtype="<u8", offset=pos).astype(np.uint64)
    code = words[:n_words].reshape(geometry.packed_shape).copy()
    mask = words[n_words:].reshape(geometry.packed_shape).copy()
    for name, arr in (("code", code), ("mask", mask)):
        if (arr & ~pack_bits(np.ones(cols, dtype=bool))).any():
            raise FormatError(f"nonzero padding bits in {name}")
    return PackedTemplate(geometry, code, mask, ids[0], ids[1])


def save_template(template: PackedTemplate, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(template))
    return path


def load_template(path) -> PackedTemplate:
    return loads(Path(path).read_bytes())
