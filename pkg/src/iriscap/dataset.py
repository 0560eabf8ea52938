"""Sample manifests, quality filtering, enrollment plans and pair enumeration."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path

import numpy as np

QUALITY_METRICS = (
    "overall_quality_score",
    "iris_radius",
    "dilation",
    "usable_iris_area",
    "iris_sclera_contrast",
    "iris_pupil_contrast",
    "grayscale_utilization",
    "iris_pupil_concentricity",
    "margin_adequacy",
)
MANIFEST_COLUMNS = ("identity_id", "sample_id", "path") + QUALITY_METRICS

# Placeholder ISO/IEC 29794-6 style bounds; the real cutoffs are vendor-specific.
DEFAULT_ISO_BOUNDS = {
    "overall_quality_score": (50.0, 100.0),
    "iris_radius": (80.0, math.inf),
    "dilation": (20.0, 70.0),
    "usable_iris_area": (70.0, 100.0),
    "iris_sclera_contrast": (5.0, math.inf),
    "iris_pupil_contrast": (30.0, math.inf),
    "grayscale_utilization": (6.0, math.inf),
    "iris_pupil_concentricity": (90.0, 100.0),
    "margin_adequacy": (80.0, 100.0),
}


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    identity_id: str
    sample_id: str
    path: str = ""
    quality: dict = field(default_factory=dict)

    @property
    def key(self):
        return (self.identity_id, self.sample_id)

    @property
    def score(self) -> float:
        value = self.quality.get("overall_quality_score")
        return -math.inf if value is None else value


class QualityMode(str, Enum):
    ALLQ = "ALLQ"
    ISOQ = "ISOQ"


@dataclass(frozen=True)
class QualityPolicy:
    mode: QualityMode = QualityMode.ALLQ
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mode", QualityMode(self.mode))
        if self.mode is QualityMode.ISOQ:
            if not self.bounds:
                raise ValueError("ISOQ policy needs metric bounds")
            unknown = set(self.bounds) - set(QUALITY_METRICS)
            if unknown:
                raise ValueError(f"unknown quality metrics in bounds: {sorted(unknown)}")
            for name, pair in self.bounds.items():
                if len(pair) != 2 or pair[0] > pair[1]:
                    raise ValueError(f"bad bounds for {name}: {pair!r}")
        elif self.bounds:
            raise ValueError("ALLQ policy takes no bounds")

    @classmethod
    def isoq(cls, bounds=None) -> "QualityPolicy":
        return cls(QualityMode.ISOQ, dict(DEFAULT_ISO_BOUNDS if bounds is None else bounds))

    def accepts(self, record: SampleRecord) -> bool:
        if self.mode is QualityMode.ALLQ:
            return True
        for name, (lo, hi) in self.bounds.items():
            value = record.quality.get(name)
            if value is None or not lo <= value <= hi:
                return False
        return True


def _parse_metric(text, line, name):
    text = (text or "").strip()
    if text == "" or text.lower() in ("na", "nan", "none"):
        return None
    try:
        return float(text)
    except ValueError:
        raise ManifestError(f"line {line}: {name}={text!r} is not a number") from None


def load_manifest(path) -> list[SampleRecord]:
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{path}: missing header row")
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ManifestError(f"{path}: header lacks columns {missing}")
        for row in reader:
            line = reader.line_num
            ident = (row["identity_id"] or "").strip()
            sample = (row["sample_id"] or "").strip()
            if not ident or not sample:
                raise ManifestError(f"line {line}: identity_id and sample_id must be nonempty")
            if (ident, sample) in seen:
                raise ManifestError(f"line {line}: duplicate sample key {(ident, sample)!r}")
            seen.add((ident, sample))
            quality = {}
            for name in QUALITY_METRICS:
                value = _parse_metric(row[name], line, name)
                if value is not None:
                    quality[name] = value
            records.append(SampleRecord(ident, sample, (row["path"] or "").strip(), quality))
    return records


def write_manifest(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([r.identity_id, r.sample_id, r.path]
                            + [_fmt(r.quality.get(name)) for name in QUALITY_METRICS])


def _fmt(value):
    return "" if value is None else repr(float(value))


def apply_quality_policy(records, policy: QualityPolicy) -> list[SampleRecord]:
    if policy.mode is QualityMode.ALLQ:
        return list(records)
    return [r for r in records if policy.accepts(r)]


@dataclass(frozen=True)
class IdentityPlan:
    identity_id: str
    enrolled: SampleRecord
    probes: tuple

    @property
    def samples(self) -> tuple:
        return (self.enrolled,) + self.probes


@dataclass(frozen=True)
class EnrollmentPlan:
    identities: tuple

    @property
    def M(self) -> int:
        return len(self.identities)

    def samples(self) -> list[SampleRecord]:
        """Every planned sample, enrolled samples first in identity order."""
        enrolled = [p.enrolled for p in self.identities]
        probes = [s for p in self.identities for s in p.probes]
        return enrolled + probes

    def restrict(self, identity_ids) -> "EnrollmentPlan":
        keep = set(identity_ids)
        return EnrollmentPlan(tuple(p for p in self.identities if p.identity_id in keep))


def build_plan(records, n_probes: int = 2) -> EnrollmentPlan:
    by_identity: dict[str, list[SampleRecord]] = {}
    for r in records:
        by_identity.setdefault(r.identity_id, []).append(r)
    plans = []
    for ident in sorted(by_identity):
        ranked = sorted(by_identity[ident], key=lambda r: (-r.score, r.sample_id))
        plans.append(IdentityPlan(ident, ranked[0], tuple(ranked[1:1 + n_probes])))
    return EnrollmentPlan(tuple(plans))


@dataclass(frozen=True)
class PairList:
    """Pairs as indices into ``plan.samples()``."""
    a: np.ndarray
    b: np.ndarray

    def __len__(self):
        return len(self.a)

    def __iter__(self):
        return zip(self.a.tolist(), self.b.tolist())


def imposter_count(M: int) -> int:
    return M * (M - 1) // 2


def enumerate_pairs(plan: EnrollmentPlan) -> tuple[PairList, PairList]:
    M = plan.M
    # lexicographic (i, j), i < j over enrolled samples
    ii, jj = np.triu_indices(M, k=1)
    imposters = PairList(ii.astype(np.int64), jj.astype(np.int64))
    ga, gb = [], []
    next_probe = M
    for i, p in enumerate(plan.identities):
        members = [i] + list(range(next_probe, next_probe + len(p.probes)))
        next_probe += len(p.probes)
        for x, y in combinations(members, 2):
            ga.append(x)
            gb.append(y)
    genuine = PairList(np.array(ga, dtype=np.int64), np.array(gb, dtype=np.int64))
    return imposters, genuine


def iter_imposter_pairs(plan: EnrollmentPlan):
    """Lazy imposter enumeration as (identity_a, identity_b) ids."""
    ids = [p.identity_id for p in plan.identities]
    return combinations(ids, 2)
