"""Masked fractional Hamming distance with circular shift search.

Rotation convention: evaluating offset ``s`` rotates the second template's
code and mask by ``s`` columns, ``b_s[..., c] = b[..., (c - s) % cols]``
(``np.roll(b, s, axis=-1)``). If ``b`` is ``a`` rolled by ``+k`` the best
offset is therefore ``-k``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .template import (
    WORD_BITS,
    DimensionTag,
    PackedTemplate,
    TemplateGeometry,
    pack_bits,
    sample_column_set,
    unpack_bits,
)


class EmptyOverlapError(ValueError):
    """The two masks share no usable bit at any evaluated alignment."""


@dataclass(frozen=True)
class ShiftSpec:
    max_shift_per_side: int
    degrees_per_shift: float

    @classmethod
    def for_dimension(cls, tag) -> "ShiftSpec":
        tag = DimensionTag(tag)
        if tag is DimensionTag.D1:
            return cls(28, 0.7)
        return cls(14, 1.4)

    @property
    def alignments(self) -> int:
        return 2 * self.max_shift_per_side + 1

    @property
    def degrees_per_side(self) -> float:
        return self.max_shift_per_side * self.degrees_per_shift

    def offsets(self) -> np.ndarray:
        """Offsets in tie-break order: 0, -1, +1, -2, +2, ..."""
        k = self.max_shift_per_side
        out = [0]
        for s in range(1, k + 1):
            out += [-s, s]
        return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class MatchScore:
    hd: float
    best_shift: int
    compared_bits: int
    disagreeing_bits: int = 0


def _check_pair(a: PackedTemplate, b: PackedTemplate):
    if a.geometry != b.geometry:
        raise ValueError(f"geometry mismatch: {a.geometry} vs {b.geometry}")


def _popcount(words, axis):
    return np.bitwise_count(words).sum(axis=axis, dtype=np.int64)


def hamming_distance(a: PackedTemplate, b: PackedTemplate) -> tuple[float, int]:
    _check_pair(a, b)
    both = a.mask & b.mask
    den = int(_popcount(both, None))
    if den == 0:
        raise EmptyOverlapError(f"no overlapping mask bits for {a.sample_id!r}/{b.sample_id!r}")
    num = int(_popcount((a.code ^ b.code) & both, None))
    return num / den, den


def rotate_words(words: np.ndarray, cols: int, offsets) -> np.ndarray:
    """All circular column rotations of packed rows, stacked on a new axis 0.

    Result ``[i]`` equals ``np.roll(bits, offsets[i], axis=-1)`` re-packed.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if cols % WORD_BITS:
        bits = unpack_bits(words, cols)
        idx = (np.arange(cols)[None, :] - offsets[:, None]) % cols
        rolled = np.moveaxis(bits[..., idx], -2, 0)  # (S, ..., cols)
        return pack_bits(rolled)
    # whole-word roll by q, then a carry-in shift by r bits
    n_words = cols // WORD_BITS
    q, r = np.divmod(offsets % cols, WORD_BITS)
    k = np.arange(n_words)
    moved = np.moveaxis(words[..., (k[None, :] - q[:, None]) % n_words], -2, 0)
    carry = np.moveaxis(words[..., (k[None, :] - q[:, None] - 1) % n_words], -2, 0)
    r = r.astype(np.uint64).reshape((-1,) + (1,) * (words.ndim))
    # (x >> (63 - r)) >> 1 is x >> (64 - r) without the undefined shift at r = 0
    return (moved << r) | ((carry >> (np.uint64(63) - r)) >> np.uint64(1))


def rotation_column_masks(keep: np.ndarray, offsets) -> np.ndarray:
    """Packed column masks ``keep`` rotated by each offset; shape (..., S, words)."""
    packed = pack_bits(keep)
    rotated = rotate_words(packed, keep.shape[-1], offsets)   # (S, ..., words)
    return np.moveaxis(rotated, 0, -2)


def score_block(a_code_rot, a_mask_rot, b_code, b_mask, col_a_rot=None, col_b=None):
    """Disagreement and overlap counts for a batch of pairs at every offset.

    ``a_*_rot`` hold the first template rotated by minus each offset, shaped
    (S, P, R, W) for one shared template or (n, S, P, R, W). ``b_*`` are
    (n, P, R, W). Optional column masks restrict both sides: ``col_a_rot``
    is (n, S, W) and ``col_b`` is (n, W). Returns int64 arrays (n, S).
    """
    n = b_code.shape[0]
    S = a_code_rot.shape[-4]
    words = a_code_rot.shape[-3:]
    K = int(np.prod(words))
    lead = (1, S, K) if a_code_rot.ndim == 4 else (n, S, K)
    a_code = a_code_rot.reshape(lead)
    a_mask = a_mask_rot.reshape(lead)
    both = np.empty((n, S, K), dtype=np.uint64)
    np.bitwise_and(a_mask, b_mask.reshape(n, 1, K), out=both)
    if col_a_rot is not None:
        view = both.reshape((n, S) + words)
        view &= col_a_rot[:, :, None, None, :]
        view &= col_b[:, None, None, None, :]
    counts = np.bitwise_count(both)
    den = counts.sum(axis=-1, dtype=np.int64)
    diff = np.bitwise_xor(a_code, b_code.reshape(n, 1, K))
    np.bitwise_and(diff, both, out=diff)
    np.bitwise_count(diff, out=counts)
    num = counts.sum(axis=-1, dtype=np.int64)
    return num, den


def best_of(num: np.ndarray, den: np.ndarray, offsets: np.ndarray):
    """Pick the minimum-hd offset per row, earliest in ``offsets`` order on ties.

    Returns (hd, best_shift, compared_bits, disagreeing_bits); rows with no
    scorable offset get hd = nan and compared_bits = 0.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        hd = np.where(den > 0, num / np.maximum(den, 1), np.inf)
    pick = np.argmin(hd, axis=1)
    rows = np.arange(hd.shape[0])
    best = hd[rows, pick]
    ok = np.isfinite(best)
    return (np.where(ok, best, np.nan),
            np.where(ok, offsets[pick], 0),
            np.where(ok, den[rows, pick], 0),
            np.where(ok, num[rows, pick], 0))


def _match(a, b, spec, keep=None) -> MatchScore:
    _check_pair(a, b)
    geo = a.geometry
    offsets = spec.offsets()
    a_code = rotate_words(a.code, geo.cols, -offsets)
    a_mask = rotate_words(a.mask, geo.cols, -offsets)
    if keep is None:
        num, den = score_block(a_code, a_mask, b.code[None], b.mask[None])
    else:
        col_a = rotation_column_masks(keep, -offsets)
        col_b = pack_bits(keep)
        num, den = score_block(a_code, a_mask, b.code[None], b.mask[None],
                               col_a[None], col_b[None])
    hd, shift, bits, dis = best_of(num, den, offsets)
    if bits[0] == 0:
        raise EmptyOverlapError(
            f"no scorable alignment for {a.sample_id!r}/{b.sample_id!r}")
    return MatchScore(float(hd[0]), int(shift[0]), int(bits[0]), int(dis[0]))


def match_score(a: PackedTemplate, b: PackedTemplate, spec: ShiftSpec) -> MatchScore:
    return _match(a, b, spec)


def pair_seed(experiment_seed: int, sample_a: str, sample_b: str) -> int:
    """Order-independent 64-bit seed for a pair's column sampling."""
    lo, hi = sorted((str(sample_a), str(sample_b)))
    key = f"{int(experiment_seed)}\x1f{lo}\x1f{hi}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def pair_keep_mask(geometry: TemplateGeometry, feature_level: int, seed: int) -> np.ndarray:
    return sample_column_set(geometry, feature_level, seed).keep_mask()


def match_with_elimination(a: PackedTemplate, b: PackedTemplate, spec: ShiftSpec,
                           feature_level: int, pair_seed: int) -> MatchScore:
    if feature_level == 100:
        # still validates the level and the pair
        sample_column_set(a.geometry, feature_level, pair_seed)
        return _match(a, b, spec)
    keep = pair_keep_mask(a.geometry, feature_level, pair_seed)
    return _match(a, b, spec, keep)
