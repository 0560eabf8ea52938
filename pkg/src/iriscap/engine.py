"""Chunked, checkpointed all-pairs matching for one system configuration."""

from __future__ import annotations

import logging
import multiprocessing as mp
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import EnrollmentPlan, QualityMode, enumerate_pairs
from .matcher import (
    ShiftSpec,
    best_of,
    pair_keep_mask,
    pair_seed,
    rotate_words,
    rotation_column_masks,
    score_block,
)
from .store import GENUINE, IMPOSTER, RECORD, ConfigMismatchError, ScoreStore
from .template import FEATURE_LEVELS, DimensionTag, ResolutionMode, TemplateGeometry, pack_bits

log = logging.getLogger(__name__)

OPERATING_POINTS = (0.1, 0.01, 0.001)
DEFAULT_CHUNK_SIZE = 4096
# upper bound on uint64 words in one scoring temporary
_BLOCK_WORDS = 1 << 19


class MissingTemplateError(LookupError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    dimension_tag: DimensionTag = DimensionTag.D2
    resolution_mode: ResolutionMode = ResolutionMode.SINGLE
    quality_mode: QualityMode = QualityMode.ALLQ
    feature_level: int = 100
    operating_point: float = 0.1
    experiment_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dimension_tag", DimensionTag(self.dimension_tag))
        object.__setattr__(self, "resolution_mode", ResolutionMode(self.resolution_mode))
        object.__setattr__(self, "quality_mode", QualityMode(self.quality_mode))
        if self.feature_level not in FEATURE_LEVELS:
            raise ValueError(f"feature_level {self.feature_level!r} not in {FEATURE_LEVELS}")
        if self.operating_point not in OPERATING_POINTS:
            raise ValueError(f"operating_point {self.operating_point!r} not in {OPERATING_POINTS}")

    @property
    def geometry(self) -> TemplateGeometry:
        return TemplateGeometry.stripped(self.dimension_tag, self.resolution_mode)

    @property
    def shift_spec(self) -> ShiftSpec:
        return ShiftSpec.for_dimension(self.dimension_tag)

    def store_key(self) -> dict:
        """Fields that determine scores; the operating point only affects thresholds."""
        return {
            "dimension_tag": self.dimension_tag.value,
            "resolution_mode": self.resolution_mode.value,
            "quality_mode": self.quality_mode.value,
            "feature_level": self.feature_level,
            "experiment_seed": int(self.experiment_seed),
        }

    def label(self) -> str:
        return (f"{self.dimension_tag.value}_{self.resolution_mode.value.lower()}_"
                f"{self.quality_mode.value}_f{self.feature_level}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(self.store_key())
        return d


def _resolve(templates, record):
    try:
        if isinstance(templates, Mapping):
            return templates[record.sample_id]
        return templates(record)
    except (KeyError, FileNotFoundError) as exc:
        raise MissingTemplateError(
            f"no template for sample {record.sample_id!r} "
            f"(identity {record.identity_id!r}): {exc}") from None


def _load_arrays(plan, templates, geometry):
    samples = plan.samples()
    codes = np.empty((len(samples),) + geometry.packed_shape, dtype=np.uint64)
    masks = np.empty_like(codes)
    for k, record in enumerate(samples):
        t = _resolve(templates, record)
        if t is None:
            raise MissingTemplateError(f"no template for sample {record.sample_id!r}")
        g = t.geometry
        if (g.rows, g.cols, g.bit_planes) != (geometry.rows, geometry.cols, geometry.bit_planes):
            raise ValueError(
                f"sample {record.sample_id!r} has geometry {g.rows}x{g.cols}x{g.bit_planes}, "
                f"config expects {geometry.rows}x{geometry.cols}x{geometry.bit_planes}")
        codes[k] = t.code
        masks[k] = t.mask
    return samples, codes, masks


class _Work:
    """Everything a worker needs; inherited by forked workers."""

    def __init__(self, codes, masks, sample_ids, kinds, pa, pb, config: SystemConfig,
                 chunk_size):
        self.codes = codes
        self.masks = masks
        self.sample_ids = sample_ids
        self.kinds = kinds
        self.pa = pa
        self.pb = pb
        self.cols = config.geometry.cols
        self.geometry = config.geometry
        self.offsets = config.shift_spec.offsets()
        self.level = config.feature_level
        self.seed = config.experiment_seed
        self.chunk_size = chunk_size

    def chunk_bounds(self, index):
        start = index * self.chunk_size
        return start, min(start + self.chunk_size, len(self.pa))

    def compute_chunk(self, index) -> np.ndarray:
        start, stop = self.chunk_bounds(index)
        pa, pb = self.pa[start:stop], self.pb[start:stop]
        out = np.zeros(stop - start, dtype=RECORD)
        out["kind"] = self.kinds[start:stop]
        out["a"] = pa
        out["b"] = pb
        S = len(self.offsets)
        per_pair = S * int(np.prod(self.codes.shape[1:]))
        block = max(1, _BLOCK_WORDS // per_pair)
        # pairs sharing a first template are contiguous in the canonical order
        bounds = np.flatnonzero(np.diff(pa)) + 1
        starts = np.concatenate([[0], bounds])
        ends = np.concatenate([bounds, [len(pa)]])
        for s0, s1 in zip(starts.tolist(), ends.tolist()):
            i = int(pa[s0])
            a_code = rotate_words(self.codes[i], self.cols, -self.offsets)
            a_mask = rotate_words(self.masks[i], self.cols, -self.offsets)
            for b0 in range(s0, s1, block):
                b1 = min(b0 + block, s1)
                js = pb[b0:b1]
                if self.level == 100:
                    num, den = score_block(a_code, a_mask, self.codes[js], self.masks[js])
                else:
                    keep = np.stack([
                        pair_keep_mask(self.geometry, self.level,
                                       pair_seed(self.seed, self.sample_ids[i],
                                                 self.sample_ids[j]))
                        for j in js.tolist()])
                    num, den = score_block(a_code, a_mask, self.codes[js], self.masks[js],
                                           rotation_column_masks(keep, -self.offsets),
                                           pack_bits(keep))
                hd, shift, bits, dis = best_of(num, den, self.offsets)
                out["hd"][b0:b1] = hd
                out["best_shift"][b0:b1] = shift
                out["compared_bits"][b0:b1] = bits
                out["disagreeing_bits"][b0:b1] = dis
        return out


_WORK: _Work | None = None


def _compute(index):
    return index, _WORK.compute_chunk(index)


def _header(plan, samples, config, chunk_size, n_imposter, n_genuine):
    total = n_imposter + n_genuine
    return {
        "config": config.store_key(),
        "chunk_size": int(chunk_size),
        "n_chunks": -(-total // chunk_size) if total else 0,
        "n_imposter": int(n_imposter),
        "n_genuine": int(n_genuine),
        "M": plan.M,
        "samples": [[r.identity_id, r.sample_id] for r in samples],
        "geometry": list(config.geometry.shape),
    }


def _check_header(store: ScoreStore, expected: dict):
    for key in ("config", "chunk_size", "n_imposter", "n_genuine", "samples", "geometry"):
        if store.header.get(key) != expected[key]:
            if key == "config":
                diff = {k: (store.header["config"].get(k), v)
                        for k, v in expected["config"].items()
                        if store.header["config"].get(k) != v}
                raise ConfigMismatchError(
                    f"{store.path}: store config differs from request (store, request): {diff}")
            raise ConfigMismatchError(f"{store.path}: store {key} differs from request")


def run_nn(plan: EnrollmentPlan, templates, config: SystemConfig, store_path,
           workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE, resume: bool = False,
           max_chunks: int | None = None, progress=None) -> ScoreStore:
    """Score every imposter and genuine pair of ``plan`` into a store.

    With ``resume`` an existing store is validated against the request and
    only chunks past its watermark are computed. ``max_chunks`` stops after
    that many new chunks (used to simulate interruption).
    """
    global _WORK
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    samples, codes, masks = _load_arrays(plan, templates, config.geometry)
    imposters, genuine = enumerate_pairs(plan)
    kinds = np.concatenate([np.full(len(imposters), IMPOSTER, np.uint8),
                            np.full(len(genuine), GENUINE, np.uint8)])
    pa = np.concatenate([imposters.a, genuine.a])
    pb = np.concatenate([imposters.b, genuine.b])
    header = _header(plan, samples, config, chunk_size, len(imposters), len(genuine))

    store_path = Path(store_path)
    if resume and store_path.exists():
        store = ScoreStore.open(store_path)
        _check_header(store, header)
    else:
        store = ScoreStore.create(store_path, header)

    todo = list(range(store.watermark, header["n_chunks"]))
    if max_chunks is not None:
        todo = todo[:max_chunks]
    if not todo:
        return store
    log.info("%s: %d chunks to compute (%d done) with %d workers",
             config.label(), len(todo), store.watermark, workers)

    _WORK = _Work(codes, masks, [r.sample_id for r in samples], kinds, pa, pb, config,
                  chunk_size)
    try:
        if workers <= 1:
            results = map(_compute, todo)
            _drain(store, results, progress)
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(workers) as pool:
                _drain(store, pool.imap(_compute, todo), progress)
    finally:
        _WORK = None
    return store


def _drain(store, results, progress):
    for index, records in results:
        store.commit_chunk(index, records)
        if progress is not None:
            progress(store.watermark, store.n_chunks)


def resume(store_path, plan: EnrollmentPlan, templates, config: SystemConfig | None = None,
           workers: int = 1, **kwargs) -> ScoreStore:
    """Finish an interrupted store; ``config`` defaults to the one in its header."""
    store = ScoreStore.open(store_path)
    stored = SystemConfig(**store.config)
    if config is None:
        config = stored
    elif config.store_key() != stored.store_key():
        raise ConfigMismatchError(
            f"{store_path}: store was built for {stored.store_key()}, "
            f"requested {config.store_key()}")
    return run_nn(plan, templates, config, store_path, workers=workers,
                  chunk_size=store.header["chunk_size"], resume=True, **kwargs)
