import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from iriscap.capacity import (
    CalibratedThreshold,
    IdentityErrorRecord,
    calibrate_threshold,
    capacity_curve,
    compute_frr,
    constrained_capacity,
    count_false_accepts,
    evaluate,
    first_error_point,
    measured_far,
)

NAMES5 = ["i1", "i2", "i3", "i4", "i5"]


def random_instance(rng, M):
    a, b = np.triu_indices(M, 1)
    scores = np.round(rng.uniform(0.2, 0.5, len(a)), 3)
    t = float(np.quantile(scores, rng.uniform(0, 0.1))) if len(scores) else 0.3
    names = [f"n{k:03d}" for k in rng.permutation(M)]
    return a, b, scores, t, names


class TestCalibrate:
    def test_hand_example(self):
        t = calibrate_threshold([0.30, 0.35, 0.40, 0.45], 25)
        assert t.hd_threshold == 0.30 and t.achieved_far == 0.25
        assert t.target_far == 25 and t.calibrated_at_feature_level == 100

    def test_full_target(self):
        assert calibrate_threshold([0.3, 0.2, 0.4], 100).hd_threshold == 0.4

    def test_sentinel(self):
        t = calibrate_threshold([0.4] * 10, 10)
        assert t.hd_threshold == 0.0 and t.achieved_far == 0.0

    def test_floating_target(self):
        # 0.1% of 3000 is 3 in exact arithmetic but not in floats
        scores = np.arange(3000) / 3000 + 0.01
        assert calibrate_threshold(scores, 0.1).achieved_far == 3 / 3000

    def test_errors(self):
        with pytest.raises(ValueError):
            calibrate_threshold([], 0.1)
        with pytest.raises(ValueError):
            calibrate_threshold([0.2, np.nan], 0.1)
        with pytest.raises(ValueError):
            calibrate_threshold([0.2], 0.1, feature_level=50)
        with pytest.raises(ValueError, match="score exactly 0"):
            calibrate_threshold([0.0, 0.5], 10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 40), min_size=1, max_size=200),
           st.sampled_from([0.001, 0.01, 0.1, 1.0, 5.0, 25.0, 100.0]))
    def test_matches_oracle_and_never_exceeds(self, ints, target):
        scores = [i / 40 for i in ints]
        expected = oracles.brute_threshold(scores, target)
        if expected is None:
            with pytest.raises(ValueError):
                calibrate_threshold(scores, target)
            return
        t = calibrate_threshold(scores, target)
        assert (t.hd_threshold, t.achieved_far) == pytest.approx(expected, abs=0)
        assert t.achieved_far <= target / 100 * (1 + 1e-12)
        assert measured_far(scores, t) == t.achieved_far


class TestFRR:
    def test_cases(self):
        assert compute_frr([0, 0, 0], 0.0) == 0.0
        assert compute_frr([0.2, 0.5], 0.3) == 0.5
        assert compute_frr([0.3], CalibratedThreshold(0.3, 1, 0)) == 0.0  # inclusive accept
        with pytest.raises(ValueError):
            compute_frr([], 0.3)

    def test_monotone(self, rng):
        g = rng.uniform(0, 0.5, 500)
        frrs = [compute_frr(g, t) for t in np.linspace(0, 0.5, 30)]
        assert all(x >= y for x, y in zip(frrs, frrs[1:]))


class TestFalseAccepts:
    def test_none(self):
        recs, total = count_false_accepts([0], [1], [0.5], 0.3, ["A", "B"])
        assert total == 0 and all(r.fa_count == 0 for r in recs)

    def test_single_pair(self):
        recs, total = count_false_accepts([0, 0, 1], [1, 2, 2], [0.1, 0.5, 0.5], 0.3, ["A", "B", "C"])
        assert total == 1
        assert [r.fa_count for r in recs] == [1, 1, 0]

    def test_sum_property(self, rng):
        for M in (2, 10, 40):
            a, b, scores, t, names = random_instance(rng, M)
            recs, total = count_false_accepts(a, b, scores, t, names)
            assert sum(r.fa_count for r in recs) == 2 * total
            assert [r.fa_count for r in recs] == oracles.brute_fa_counts(M, zip(a, b), scores, t)


class TestCapacity:
    def example(self):
        # one accepting pair between the 4th and 5th identities
        a, b = np.triu_indices(5, 1)
        scores = np.where((a == 3) & (b == 4), 0.1, 0.45)
        return a, b, scores

    def test_five_identity_example(self):
        a, b, scores = self.example()
        recs, total = count_false_accepts(a, b, scores, 0.3, NAMES5)
        assert [r.fa_count for r in recs] == [0, 0, 0, 1, 1]
        assert constrained_capacity(recs, 5) == (3, 60.0, 2)
        curve = capacity_curve(recs, a, b, scores, 0.3)
        assert curve.tolist() == [0, 0, 0, 0, 0, 1]
        assert first_error_point(curve) == 5

    def test_all_zero(self):
        recs = [IdentityErrorRecord(n, 0) for n in NAMES5]
        assert constrained_capacity(recs) == (5, 100.0, 0)
        a, b = np.triu_indices(5, 1)
        curve = capacity_curve(recs, a, b, np.full(len(a), 0.5), 0.3)
        assert not curve.any() and first_error_point(curve) is None

    def test_published_count(self):
        recs = [IdentityErrorRecord(f"x{k}", 1 if k < 47 else 0) for k in range(5158)]
        cc, pc, nicf = constrained_capacity(recs, 5158)
        assert (cc, nicf) == (5111, 47)
        assert pc == pytest.approx(99.0888, abs=1e-4)

    def test_wrong_record_count(self):
        with pytest.raises(ValueError):
            constrained_capacity([IdentityErrorRecord("a", 0)], 2)

    def test_oracle_random(self, rng):
        for _ in range(150):
            M = int(rng.integers(2, 51))
            a, b, scores, t, names = random_instance(rng, M)
            recs, total = count_false_accepts(a, b, scores, t, names)
            cc, pc, nicf = constrained_capacity(recs, M)
            exp_cc, exp_curve = oracles.brute_capacity(M, list(zip(a, b)), scores, t, names)
            curve = capacity_curve(recs, a, b, scores, t)
            assert cc == exp_cc and cc + nicf == M and 0 <= pc <= 100
            assert curve.tolist() == exp_curve
            assert curve[-1] == total
            assert np.all(np.diff(curve) >= 0)
            fe = first_error_point(curve)
            assert fe is None or fe > cc
            assert not curve[:cc + 1].any()

    def test_threshold_monotone(self, rng):
        a, b, scores, _, names = random_instance(rng, 40)
        prev = None
        for t in np.linspace(0.2, 0.5, 25):
            recs, total = count_false_accepts(a, b, scores, t, names)
            cc = constrained_capacity(recs)[0]
            if prev:
                assert total >= prev[0] and cc <= prev[1]
            prev = (total, cc)


def test_evaluate_bundle(rng):
    a, b, scores, _, names = random_instance(rng, 30)
    thr = calibrate_threshold(scores, 5.0)
    genuine = rng.uniform(0, 0.3, 90)
    result, recs, curve = evaluate(a, b, scores, genuine, names, thr)
    assert result.M == 30 and result.cc + result.nicf == 30
    assert result.far == result.total_fa / 435 == thr.achieved_far
    assert result.frr == compute_frr(genuine, thr)
    assert curve[-1] == result.total_fa
