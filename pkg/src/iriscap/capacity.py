"""Operating-point calibration, false-accept accounting and constrained capacity.

Accept rule everywhere: a pair matches iff ``hd <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CalibratedThreshold:
    hd_threshold: float
    target_far: float  # percent
    achieved_far: float  # fraction
    calibrated_at_feature_level: int = 100


@dataclass(frozen=True)
class IdentityErrorRecord:
    identity_id: str
    fa_count: int


@dataclass(frozen=True)
class CapacityResult:
    total_fa: int
    far: float
    cc: int
    pc: float
    nicf: int
    frr: float
    threshold: CalibratedThreshold
    M: int
    empty_overlap: int = 0


def _threshold_value(t) -> float:
    return float(t.hd_threshold if isinstance(t, CalibratedThreshold) else t)


def calibrate_threshold(imposter_scores, target_far: float,
                        feature_level: int = 100) -> CalibratedThreshold:
    """Largest observed score (or 0) whose cumulative FAR stays within ``target_far`` percent."""
    if feature_level != 100:
        raise ValueError("thresholds are calibrated on full-feature scores only")
    scores = np.sort(np.asarray(imposter_scores, dtype=float))
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty score set")
    if np.isnan(scores).any():
        raise ValueError("imposter scores contain NaN (unscorable pairs must be dropped)")
    n = scores.size
    candidates = np.unique(np.concatenate([[0.0], scores]))
    admitted = np.searchsorted(scores, candidates, side="right")
    # relative slack absorbs float noise in target_far * n (e.g. 0.1 * 3)
    ok = admitted * 100.0 <= target_far * n * (1 + 1e-12)
    if not ok.any():
        raise ValueError(
            f"no threshold admits at most {target_far}% of {n} scores "
            f"({int(admitted[0])} imposters score exactly 0)")
    k = np.flatnonzero(ok)[-1]
    return CalibratedThreshold(float(candidates[k]), float(target_far), admitted[k] / n,
                               feature_level)


def measured_far(imposter_scores, t) -> float:
    scores = np.asarray(imposter_scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty imposter score set")
    return float(np.count_nonzero(scores <= _threshold_value(t)) / scores.size)


def compute_frr(genuine_scores, t) -> float:
    scores = np.asarray(genuine_scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot compute FRR on an empty genuine score set")
    return float(np.count_nonzero(scores > _threshold_value(t)) / scores.size)


def count_false_accepts(identity_a, identity_b, scores, t, identity_ids):
    """Per-identity FA counts for imposter pairs given as indices into ``identity_ids``.

    Returns (records, total_fa).
    """
    a = np.asarray(identity_a, dtype=np.int64)
    b = np.asarray(identity_b, dtype=np.int64)
    hit = np.asarray(scores, dtype=float) <= _threshold_value(t)
    M = len(identity_ids)
    counts = (np.bincount(a[hit], minlength=M) + np.bincount(b[hit], minlength=M))
    records = [IdentityErrorRecord(str(ident), int(c)) for ident, c in zip(identity_ids, counts)]
    return records, int(hit.sum())


def constrained_capacity(records, M: int | None = None) -> tuple[int, float, int]:
    """(cc, pc, nicf): identities with no false accept, and their share of M."""
    if M is None:
        M = len(records)
    if len(records) != M:
        raise ValueError(f"expected one record per identity ({M}), got {len(records)}")
    cc = sum(1 for r in records if r.fa_count == 0)
    pc = 100.0 * cc / M if M else 0.0
    return cc, pc, M - cc


def faao_order(records) -> list[int]:
    """Indices of ``records`` in ascending false-accept order (ties by identity id)."""
    return sorted(range(len(records)), key=lambda k: (records[k].fa_count, records[k].identity_id))


def capacity_curve(records, identity_a, identity_b, scores, t) -> np.ndarray:
    """Cumulative FA pairs among the first k identities in FAAO order.

    Returns an int array ``curve`` of length M + 1 with ``curve[k]`` for
    k = 0..M identities enrolled.
    """
    M = len(records)
    order = faao_order(records)
    rank = np.empty(M, dtype=np.int64)
    rank[order] = np.arange(M)
    a = np.asarray(identity_a, dtype=np.int64)
    b = np.asarray(identity_b, dtype=np.int64)
    hit = np.asarray(scores, dtype=float) <= _threshold_value(t)
    # a pair becomes complete once its later-ranked member is added
    complete_at = np.maximum(rank[a[hit]], rank[b[hit]]) + 1
    per_k = np.bincount(complete_at, minlength=M + 1)
    return np.cumsum(per_k)


def first_error_point(curve) -> int | None:
    """Smallest identity count k with a nonzero cumulative FA, or None."""
    nz = np.flatnonzero(np.asarray(curve) > 0)
    return int(nz[0]) if nz.size else None


def evaluate(imposter_a, imposter_b, imposter_scores, genuine_scores, identity_ids,
             threshold: CalibratedThreshold, empty_overlap: int = 0):
    """FA/FAR/CC/PC/NICF/FRR at ``threshold`` plus the FAAO curve."""
    M = len(identity_ids)
    records, total_fa = count_false_accepts(imposter_a, imposter_b, imposter_scores,
                                            threshold, identity_ids)
    cc, pc, nicf = constrained_capacity(records, M)
    n_pairs = M * (M - 1) // 2
    far = total_fa / n_pairs if n_pairs else 0.0
    frr = compute_frr(genuine_scores, threshold) if len(genuine_scores) else float("nan")
    curve = capacity_curve(records, imposter_a, imposter_b, imposter_scores, threshold)
    result = CapacityResult(total_fa, far, cc, pc, nicf, frr, threshold, M, empty_overlap)
    return result, records, curve
