"""Store-level evaluation and the Tables III-V / Fig. 2 shaped CSV outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .capacity import CalibratedThreshold, CapacityResult, calibrate_threshold, evaluate
from .store import ScoreStore

RESULT_COLUMNS = ("dimension", "resolution", "quality", "feature_level", "op", "hd_threshold",
                  "fa", "far", "cc", "pc", "nicf", "frr")


@dataclass(frozen=True)
class StoreScores:
    identity_ids: list
    imposter_a: np.ndarray
    imposter_b: np.ndarray
    imposter_hd: np.ndarray
    genuine_hd: np.ndarray
    empty_overlap: int


def store_scores(store: ScoreStore) -> StoreScores:
    """Scorable imposter/genuine scores; imposter indices refer to enrolled identities."""
    store.require_complete()
    ids = store.identity_ids[:store.M]
    imp = store.imposters
    gen = store.genuine
    imp_ok = imp["compared_bits"] > 0
    gen_ok = gen["compared_bits"] > 0
    empty = int((~imp_ok).sum() + (~gen_ok).sum())
    imp = imp[imp_ok]
    return StoreScores(ids, imp["a"].astype(np.int64), imp["b"].astype(np.int64),
                       imp["hd"].copy(), gen["hd"][gen_ok].copy(), empty)


def calibrate_store(store: ScoreStore, operating_point: float) -> CalibratedThreshold:
    if store.config["feature_level"] != 100:
        raise ValueError("operating points are calibrated on the 100% feature store")
    return calibrate_threshold(store_scores(store).imposter_hd, operating_point)


def evaluate_store(store: ScoreStore, threshold: CalibratedThreshold):
    s = store_scores(store)
    return evaluate(s.imposter_a, s.imposter_b, s.imposter_hd, s.genuine_hd, s.identity_ids,
                    threshold, s.empty_overlap)


def result_row(config: dict, op: float, result: CapacityResult) -> list:
    return [
        config["dimension_tag"],
        config["resolution_mode"],
        config["quality_mode"],
        config["feature_level"],
        f"{op:g}",
        f"{result.threshold.hd_threshold:.10f}",
        result.total_fa,
        f"{result.far:.8f}",
        result.cc,
        f"{result.pc:.4f}",
        result.nicf,
        "" if np.isnan(result.frr) else f"{result.frr:.8f}",
    ]


def write_results(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)


def write_curve(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cumulative_fa"])
        for k, value in enumerate(np.asarray(curve).tolist()):
            writer.writerow([k, value])
