"""Experiment configuration file (JSON).

Example::

    {
      "dataset": {"synth": {"n_identities": 200, "genuine_flip_prob": 0.08}},
      "grid": {
        "dimension_tags": ["D1", "D2"],
        "resolution_modes": ["Single", "Multi"],
        "quality_modes": ["ALLQ", "ISOQ"],
        "feature_levels": [100, 75, 50, 25, 20, 15, 10],
        "operating_points": [0.1, 0.01, 0.001]
      },
      "engine": {"workers": 4, "chunk_size": 4096},
      "output_dir": "out",
      "experiment_seed": 0
    }

``dataset`` holds either ``synth`` (PopulationParams fields minus geometry)
or ``manifest`` (a CSV path) with an optional ``template_dir``. ``quality``
may carry ``isoq_bounds`` mapping metric name to ``[min, max]``; ``filters``
may replace the Gabor bank with three parameter objects. Relative paths are
resolved against the config file's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataset import DEFAULT_ISO_BOUNDS, QUALITY_METRICS, QualityMode, QualityPolicy
from .engine import DEFAULT_CHUNK_SIZE, OPERATING_POINTS
from .synth import PopulationParams
from .template import FEATURE_LEVELS, DimensionTag, ResolutionMode


class ConfigError(ValueError):
    pass


@dataclass
class Grid:
    dimension_tags: list = field(default_factory=lambda: ["D1", "D2"])
    resolution_modes: list = field(default_factory=lambda: ["Single", "Multi"])
    quality_modes: list = field(default_factory=lambda: ["ALLQ", "ISOQ"])
    feature_levels: list = field(default_factory=lambda: list(FEATURE_LEVELS))
    operating_points: list = field(default_factory=lambda: list(OPERATING_POINTS))

    def validate(self):
        checks = (
            ("dimension_tags", [t.value for t in DimensionTag]),
            ("resolution_modes", [m.value for m in ResolutionMode]),
            ("quality_modes", [q.value for q in QualityMode]),
            ("feature_levels", list(FEATURE_LEVELS)),
            ("operating_points", list(OPERATING_POINTS)),
        )
        for name, allowed in checks:
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"grid.{name} must not be empty")
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ConfigError(f"grid.{name} has unsupported values {bad}; allowed {allowed}")
            if len(set(values)) != len(values):
                raise ConfigError(f"grid.{name} has duplicates")
        if 100 not in self.feature_levels:
            raise ConfigError("grid.feature_levels must include 100 (thresholds are calibrated there)")


@dataclass
class ExperimentConfig:
    grid: Grid = field(default_factory=Grid)
    synth: dict | None = None
    manifest: Path | None = None
    template_dir: Path | None = None
    isoq_bounds: dict = field(default_factory=lambda: dict(DEFAULT_ISO_BOUNDS))
    filters: list | None = None
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK_SIZE
    output_dir: Path = Path("out")
    experiment_seed: int = 0
    source: Path | None = None

    def quality_policy(self, mode) -> QualityPolicy:
        if QualityMode(mode) is QualityMode.ALLQ:
            return QualityPolicy()
        return QualityPolicy.isoq(self.isoq_bounds)

    def population_params(self, geometry) -> PopulationParams:
        params = dict(self.synth or {})
        params.setdefault("seed", self.experiment_seed)
        return PopulationParams(geometry=geometry, **params)

    def to_dict(self) -> dict:
        return {
            "grid": {f.name: getattr(self.grid, f.name) for f in fields(Grid)},
            "dataset": ({"synth": self.synth} if self.synth is not None else
                        {"manifest": str(self.manifest),
                         "template_dir": str(self.template_dir) if self.template_dir else None}),
            "quality": {"isoq_bounds": {k: [_num(v) for v in pair]
                                        for k, pair in sorted(self.isoq_bounds.items())}},
            "engine": {"workers": self.workers, "chunk_size": self.chunk_size},
            "output_dir": str(self.output_dir),
            "experiment_seed": self.experiment_seed,
        }


def _num(v):
    return None if math.isinf(v) else v


def _bounds(raw) -> dict:
    out = {}
    for name, pair in raw.items():
        if name not in QUALITY_METRICS:
            raise ConfigError(f"quality.isoq_bounds: unknown metric {name!r}")
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"quality.isoq_bounds.{name} must be [min, max]")
        lo = -math.inf if pair[0] is None else float(pair[0])
        hi = math.inf if pair[1] is None else float(pair[1])
        if lo > hi:
            raise ConfigError(f"quality.isoq_bounds.{name}: min > max")
        out[name] = (lo, hi)
    return out


def parse_config(raw: dict, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    known = {"dataset", "grid", "engine", "output_dir", "experiment_seed", "quality", "filters"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = ExperimentConfig()
    grid = raw.get("grid", {})
    try:
        cfg.grid = Grid(**grid)
    except TypeError as exc:
        raise ConfigError(f"grid: {exc}") from None
    cfg.grid.validate()

    dataset = raw.get("dataset") or {}
    if ("synth" in dataset) == ("manifest" in dataset):
        raise ConfigError("dataset needs exactly one of 'synth' or 'manifest'")
    if "synth" in dataset:
        cfg.synth = dict(dataset["synth"] or {})
        allowed = {f.name for f in fields(PopulationParams)} - {"geometry"}
        bad = set(cfg.synth) - allowed
        if bad:
            raise ConfigError(f"dataset.synth: unknown fields {sorted(bad)}")
    else:
        cfg.manifest = (base / dataset["manifest"]).resolve()
    if dataset.get("template_dir"):
        cfg.template_dir = (base / dataset["template_dir"]).resolve()

    quality = raw.get("quality", {})
    if "isoq_bounds" in quality:
        cfg.isoq_bounds = _bounds(quality["isoq_bounds"])
    cfg.filters = raw.get("filters")

    engine = raw.get("engine", {})
    cfg.workers = int(engine.get("workers", 1))
    cfg.chunk_size = int(engine.get("chunk_size", DEFAULT_CHUNK_SIZE))
    if cfg.workers < 1 or cfg.chunk_size < 1:
        raise ConfigError("engine.workers and engine.chunk_size must be >= 1")
    cfg.output_dir = (base / raw.get("output_dir", "out")).resolve()
    cfg.experiment_seed = int(raw.get("experiment_seed", 0))
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = parse_config(raw, path.parent)
    cfg.source = path.resolve()
    return cfg
