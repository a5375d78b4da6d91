import math

import numpy as np
import pytest

from lerkit.geometry import (
    Anchor,
    CoincidentCenters,
    circle_intersections,
    consistent_positions,
    spoof_feasible,
)
from lerkit.model import Coordinates, RandomSource


def _anchor(x, y, r, honest=True):
    return Anchor(Coordinates(x, y), r, honest=honest)


class TestCircleIntersections:
    def test_external_tangent_single_point(self):
        pts = circle_intersections(_anchor(0, 0, 5), _anchor(10, 0, 5))
        assert len(pts) == 1
        assert (pts[0].x, pts[0].y) == (5.0, 0.0)

    def test_two_points_pythagorean(self):
        pts = circle_intersections(_anchor(0, 0, 5), _anchor(8, 0, 5))
        assert {(p.x, p.y) for p in pts} == {(4.0, 3.0), (4.0, -3.0)}

    def test_disjoint(self):
        assert circle_intersections(_anchor(0, 0, 5), _anchor(20, 0, 5)) == []

    def test_contained_disjoint(self):
        assert circle_intersections(_anchor(0, 0, 10), _anchor(1, 0, 2)) == []

    def test_internal_tangent(self):
        pts = circle_intersections(_anchor(0, 0, 10), _anchor(4, 0, 6))
        assert len(pts) == 1
        assert pts[0].x == pytest.approx(10.0) and pts[0].y == pytest.approx(0.0)

    def test_near_tangent_within_eps(self):
        pts = circle_intersections(_anchor(0, 0, 5), _anchor(10.0000005, 0, 5), eps=1e-6)
        assert len(pts) == 1

    def test_coincident_centers(self):
        with pytest.raises(CoincidentCenters):
            circle_intersections(_anchor(3, 3, 5), _anchor(3, 3, 2))

    def test_rotated_cases_match_norm(self):
        rng = RandomSource(90).generator()
        for _ in range(30):
            c1 = rng.uniform(-50, 50, 2)
            c2 = rng.uniform(-50, 50, 2)
            if np.hypot(*(c1 - c2)) < 1e-3:
                continue
            r1, r2 = rng.uniform(5, 60, 2)
            pts = circle_intersections(
                _anchor(c1[0], c1[1], r1), _anchor(c2[0], c2[1], r2)
            )
            for p in pts:
                assert math.hypot(p.x - c1[0], p.y - c1[1]) == pytest.approx(r1, abs=1e-6)
                assert math.hypot(p.x - c2[0], p.y - c2[1]) == pytest.approx(r2, abs=1e-6)


def _honest_anchors_around(P, positions):
    return [
        Anchor(Coordinates(x, y), Coordinates(x, y).distance_to(P)) for x, y in positions
    ]


class TestConsistentPositions:
    def test_three_generic_pin_true_position(self):
        P = Coordinates(12.0, -7.0)
        anchors = _honest_anchors_around(P, [(0, 0), (30, 5), (10, 28)])
        pts = consistent_positions(anchors, delta=0.01)
        assert len(pts) == 1
        assert pts[0].distance_to(P) < 0.01

    def test_two_anchors_at_most_two(self):
        P = Coordinates(12.0, -7.0)
        anchors = _honest_anchors_around(P, [(0, 0), (30, 5)])
        pts = consistent_positions(anchors, delta=0.01)
        assert 1 <= len(pts) <= 2
        assert any(p.distance_to(P) < 0.01 for p in pts)

    def test_collinear_mirror_ambiguity(self):
        P = Coordinates(10.0, 7.0)
        anchors = _honest_anchors_around(P, [(0, 0), (14, 0), (33, 0)])
        pts = consistent_positions(anchors, delta=0.01)
        assert len(pts) == 2
        mirror = Coordinates(10.0, -7.0)
        assert any(p.distance_to(P) < 0.01 for p in pts)
        assert any(p.distance_to(mirror) < 0.01 for p in pts)

    def test_malicious_cannot_add_points(self):
        # result is always a subset of {true position} with >= 3 generic honest
        # anchors, whatever the malicious anchors claim
        rng = RandomSource(91).generator()
        for _ in range(20):
            P = Coordinates(float(rng.uniform(-40, 40)), float(rng.uniform(-40, 40)))
            honest_pos = rng.uniform(-100, 100, size=(4, 2))
            anchors = _honest_anchors_around(P, [tuple(row) for row in honest_pos])
            malicious = Anchor(
                Coordinates(float(rng.uniform(-100, 100)), float(rng.uniform(-100, 100))),
                float(rng.uniform(1, 150)),
                honest=False,
            )
            pts = consistent_positions(anchors + [malicious], delta=0.01)
            assert all(p.distance_to(P) < 0.01 for p in pts)

    def test_malicious_consistent_claim_keeps_true_position(self):
        P = Coordinates(5.0, 9.0)
        anchors = _honest_anchors_around(P, [(0, 0), (20, -3), (-4, 25)])
        friendly = Anchor(Coordinates(40.0, 40.0), Coordinates(40.0, 40.0).distance_to(P), honest=False)
        pts = consistent_positions(anchors + [friendly], delta=0.01)
        assert len(pts) == 1 and pts[0].distance_to(P) < 0.01

    def test_too_few_anchors(self):
        with pytest.raises(ValueError):
            consistent_positions([_anchor(0, 0, 5)])


class TestSpoofFeasible:
    def test_three_honest_pin(self):
        assert spoof_feasible(3, 0) is False

    def test_four_with_one_malicious(self):
        assert spoof_feasible(4, 1) is True

    def test_monotone_in_k(self):
        for n in range(0, 9):
            for k in range(0, n):
                if spoof_feasible(n, k):
                    assert spoof_feasible(n, k + 1)

    def test_domain_check(self):
        with pytest.raises(ValueError):
            spoof_feasible(3, 4)

    def test_rule_matches_support_counting_oracle(self):
        # constructive check on a few (n, k): the fake position is the second
        # intersection of two honest circles (or free when < 2 honest); it
        # gathers those honest supporters plus all k malicious, and wins iff
        # its support is at least the true position's n-k. The full sweep runs
        # in the acceptance suite.
        from tests.oracles import spoof_construction_feasible

        rng = RandomSource(92).generator()
        for n, k in [(2, 0), (3, 0), (3, 1), (4, 1), (5, 1), (6, 2), (7, 2), (8, 3)]:
            results = [spoof_construction_feasible(n, k, rng) for _ in range(40)]
            assert all(r == spoof_feasible(n, k) for r in results), (n, k)
