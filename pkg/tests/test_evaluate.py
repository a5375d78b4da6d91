import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from lerkit.evaluate import (
    BudgetExceeded,
    DetectionCurve,
    QualCurve,
    detection_curve,
    exact_expected_steps,
    exact_qual,
    qual_sweep_over_p,
)
from lerkit.meta import expected_detection_steps
from lerkit._mc import qual_mc
from lerkit.model import InvalidParam, RandomSource, RecoveryConfig, WeightFunction


def _enumerated_qual(weights, t, p):
    """Independent oracle: explicit sum over all windows in exact arithmetic."""
    T = len(weights)
    pw = Fraction(p).limit_denominator(10**6)
    total = Fraction(0)
    for bits in itertools.product([0, 1], repeat=T):
        D = sum(Fraction(w) * b for w, b in zip(weights, bits))
        if D <= Fraction(t):
            prob = Fraction(1)
            for b in bits:
                prob *= pw if b else (1 - pw)
            total += prob
    return total


def _linear_solve_expected_steps(weights, t, p):
    """Independent oracle: first-passage expectation by solving (I-Q)x = 1.

    States are window contents as integers (bit 0 = most recent); absorption
    happens on entering a state with D > t. Different route than the forward
    mass propagation used by exact_expected_steps.
    """
    T = len(weights)
    n = 2**T
    D = np.zeros(n)
    states = np.arange(n)
    for i, w in enumerate(weights):
        D += w * ((states >> i) & 1)
    absorbing = D > t
    mask = n - 1
    q1 = 1.0 - p
    A = np.eye(n)
    b = np.ones(n)
    for s in range(n):
        for bit, prob in ((0, p), (1, q1)):
            target = ((s << 1) | bit) & mask
            if not absorbing[target]:
                A[s, target] -= prob
    x = np.linalg.solve(A, b)
    return float(x[0])


class TestExactQual:
    def test_hand_enumeration_321_zero_tolerance(self):
        # all 8 windows for w=(3,2,1): D in {0,1,2,3,3,4,5,6}; D <= 2.5 holds
        # for exactly {000, 001, 010}, so qual = 3/8 at p = 1/2
        weights = WeightFunction.of([3, 2, 1])
        assert exact_qual(weights, 2.5, 0.5) == 0.375
        assert _enumerated_qual([3, 2, 1], 2.5, 0.5) == Fraction(3, 8)

    def test_hand_enumeration_binary_weights_half(self):
        # with w=(4,2,1) the window IS its score in binary: D <= 3.5 keeps
        # exactly the four windows 000..011, qual = 4/8
        weights = WeightFunction.of([4, 2, 1])
        assert exact_qual(weights, 3.5, 0.5) == 0.5
        assert _enumerated_qual([4, 2, 1], 3.5, 0.5) == Fraction(1, 2)

    def test_score_multiset_321(self):
        ds = sorted(
            sum(w * b for w, b in zip([3, 2, 1], bits))
            for bits in itertools.product([0, 1], repeat=3)
        )
        assert ds == [0, 1, 2, 3, 3, 4, 5, 6]

    def test_threshold_above_sum(self):
        assert exact_qual(WeightFunction.of([3, 2, 1]), 6.0, 0.3) == 1.0

    def test_zero_threshold_closed_form(self):
        got = exact_qual(WeightFunction.uniform(10), 0.0, 0.3)
        assert got == pytest.approx(0.7**10, rel=1e-12)

    def test_degenerate_p(self):
        w = WeightFunction.of([2, 1])
        assert exact_qual(w, 0.5, 0.0) == 1.0
        assert exact_qual(w, 0.5, 1.0) == 0.0

    def test_matches_enumeration_random_instances(self):
        rng = RandomSource(21).generator()
        for _ in range(5):
            T = int(rng.integers(2, 7))
            weights = [round(float(x), 3) for x in rng.uniform(0, 3, size=T)]
            t = float(rng.uniform(0, sum(weights)))
            p = float(rng.uniform(0.05, 0.95))
            got = exact_qual(WeightFunction.of(weights), t, p)
            want = _enumerated_qual(weights, t, p)
            assert got == pytest.approx(float(want), abs=1e-9)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            exact_qual(WeightFunction.uniform(25), 1.0, 0.2)


class TestExactExpectedSteps:
    def test_deterministic_stream(self):
        # p=0: every outcome is a mismatch; D after s steps is s for unit
        # weights, so t=4.5 detects exactly at step 5
        assert exact_expected_steps(WeightFunction.uniform(10), 4.5, 0.0) == pytest.approx(5.0, abs=1e-9)

    def test_negative_binomial_identity_large_window(self):
        # 7th mismatch at NegBin(7, 0.7), exact once the window cannot truncate
        got = exact_expected_steps(WeightFunction.uniform(20), 6.5, 0.3)
        assert got == pytest.approx(10.0, abs=5e-4)

    def test_window_truncation_is_real(self):
        # at T=12 early mismatches can fall out of the window before the 7th
        # arrives, so the true mean exceeds the untruncated 10.0
        got = exact_expected_steps(WeightFunction.uniform(12), 6.5, 0.3)
        assert got > 10.2

    def test_matches_linear_solve_random_instances(self):
        rng = RandomSource(22).generator()
        for _ in range(6):
            T = int(rng.integers(2, 9))
            weights = [round(float(x), 3) for x in rng.uniform(0.2, 3.0, size=T)]
            t = float(rng.uniform(0, 0.7 * sum(weights)))
            p = float(rng.uniform(0.0, 0.5))
            wf = WeightFunction.of(weights)
            forward = exact_expected_steps(wf, t, p)
            solved = _linear_solve_expected_steps(weights, t, p)
            # forward propagation truncates at residual 1e-15 over <= 1e5 steps
            assert forward == pytest.approx(solved, rel=1e-8, abs=1e-8)

    def test_monte_carlo_agrees(self):
        wf = WeightFunction.of([1.5, 1.0, 0.5, 0.25, 2.0, 0.75, 1.25, 0.9])
        t, p = 3.1, 0.25
        exact = exact_expected_steps(wf, t, p)
        mc = expected_detection_steps(wf, t, p, 100_000, RandomSource(23))
        se = exact / math.sqrt(100_000)
        assert abs(mc - exact) <= 3 * se + 1e-3

    def test_detection_impossible(self):
        with pytest.raises(InvalidParam):
            exact_expected_steps(WeightFunction.uniform(5), 5.0, 0.3)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            exact_expected_steps(WeightFunction.uniform(25), 1.0, 0.2)


def _config(weights, t, p=0.3, E=10.0, qual_val=0.5):
    return RecoveryConfig(weights=weights, threshold=t, p=p, E=E, N=1000, qual=qual_val)


class TestDetectionCurve:
    def test_deterministic_step_function(self):
        cfg = _config(WeightFunction.uniform(30), 6.5)
        curve = detection_curve(cfg, 0.0, 500, 10, RandomSource(24))
        assert curve.values == (0, 0, 0, 0, 0, 0, 1, 1, 1, 1)

    def test_geometric_closed_form(self):
        cfg = _config(WeightFunction.uniform(5), 0.0)
        curve = detection_curve(cfg, 0.3, 200_000, 6, RandomSource(25))
        for s, got in zip(curve.steps, curve.values):
            want = 1 - 0.3**s
            se = math.sqrt(max(want * (1 - want), 1e-9) / 200_000)
            assert abs(got - want) <= 4 * se + 1e-6

    def test_monotone_enforced(self):
        cfg = _config(WeightFunction.uniform(3), 1.5)
        with pytest.raises(InvalidParam):
            DetectionCurve(values=(0.5, 0.4), config=cfg, actual_p=0.1)

    def test_csv_schema(self):
        cfg = _config(WeightFunction.uniform(5), 2.5)
        curve = detection_curve(cfg, 0.2, 1000, 5, RandomSource(26))
        lines = curve.csv().strip().splitlines()
        assert lines[0] == "step,prob"
        assert len(lines) == 6
        assert lines[1].startswith("1,")


class TestQualSweep:
    def test_p_zero_exact_one(self):
        cfg = _config(WeightFunction.uniform(10), 3.5)
        sweep = qual_sweep_over_p(cfg, [0.0, 0.1], 5000, RandomSource(27))
        assert sweep.points[0] == (0.0, 1.0)

    def test_monotone_non_increasing_within_error(self):
        # more malicious peers can only push scores up: verified against the
        # exact route so no sampling error is involved
        weights = WeightFunction.uniform(10)
        quals = [exact_qual(weights, 3.5, p) for p in np.arange(0.0, 0.45, 0.05)]
        assert all(a >= b - 1e-12 for a, b in zip(quals, quals[1:]))

    def test_sweep_matches_exact(self):
        cfg = _config(WeightFunction.uniform(10), 3.5)
        sweep = qual_sweep_over_p(cfg, [0.1, 0.3], 200_000, RandomSource(28))
        for p, got in sweep.points:
            want = exact_qual(cfg.weights, cfg.threshold, p)
            se = math.sqrt(want * (1 - want) / 200_000)
            assert abs(got - want) <= 4 * se

    def test_csv_schema(self):
        sweep = QualCurve(variable="p", points=((0.0, 1.0), (0.1, 0.95)))
        lines = sweep.csv().strip().splitlines()
        assert lines[0] == "p,qual"
        assert len(lines) == 3
