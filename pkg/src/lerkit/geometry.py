"""Attacker-influence geometry: multilateration from (position, distance) claims.

A position claim is consistent when it lies within delta of every anchor's
circle. Honest anchors' circles all pass through the true position; a fake
position needs enough supporting claims to be indistinguishable, which is
where the n < 2k+3 feasibility rule comes from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Coordinates

DEFAULT_DELTA_M = 3.0
_COINCIDENT_EPS = 1e-9


class CoincidentCenters(ValueError):
    pass


@dataclass(frozen=True)
class Anchor:
    """One peer's claim: its reported position and the distance measured to it."""

    position: Coordinates
    distance: float
    honest: bool = True

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError(f"distance must be >= 0, got {self.distance}")

    def circle_error(self, point: Coordinates) -> float:
        return abs(self.position.distance_to(point) - self.distance)


def circle_intersections(a: Anchor, b: Anchor, eps: float = 1e-6) -> list[Coordinates]:
    """Intersection points of the two anchors' circles (0, 1, or 2 points).

    Tangency within eps collapses to a single point. Coincident centers have
    either no intersection or infinitely many, neither useful here, so they
    raise CoincidentCenters.
    """
    dx = b.position.x - a.position.x
    dy = b.position.y - a.position.y
    d = math.hypot(dx, dy)
    if d < _COINCIDENT_EPS:
        raise CoincidentCenters(f"anchor centers coincide at {a.position}")
    r1, r2 = a.distance, b.distance
    if d > r1 + r2 + eps or d < abs(r1 - r2) - eps:
        return []
    # foot of the perpendicular from the first center along the center line
    along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d)
    h_sq = r1 * r1 - along * along
    ux, uy = dx / d, dy / d
    fx = a.position.x + along * ux
    fy = a.position.y + along * uy
    if h_sq <= 0.0 or d > r1 + r2 - eps or d < abs(r1 - r2) + eps:
        # tangent (or within eps of it): one touching point
        return [Coordinates(fx, fy)]
    h = math.sqrt(h_sq)
    return [
        Coordinates(fx - h * uy, fy + h * ux),
        Coordinates(fx + h * uy, fy - h * ux),
    ]


def _dedupe(points: list[Coordinates], tol: float) -> list[Coordinates]:
    kept: list[Coordinates] = []
    for p in points:
        if all(p.distance_to(q) > tol for q in kept):
            kept.append(p)
    return kept


def consistent_positions(anchors: list[Anchor], delta: float = DEFAULT_DELTA_M) -> list[Coordinates]:
    """All positions consistent (within delta) with every anchor's claim.

    Candidates come from pairwise circle intersections; the remaining anchors
    filter them. With three or more honest anchors in generic position only
    the true position survives; a pair of anchors can support at most two
    points. An empty result means the claims are jointly inconsistent.
    """
    if len(anchors) < 2:
        raise ValueError("need at least 2 anchors")
    candidates: list[Coordinates] = []
    for i in range(len(anchors)):
        for j in range(i + 1, len(anchors)):
            try:
                # exact intersections as candidates; delta applies to membership only
                candidates.extend(circle_intersections(anchors[i], anchors[j]))
            except CoincidentCenters:
                continue
    consistent = [
        p for p in candidates if all(anc.circle_error(p) <= delta for anc in anchors)
    ]
    return _dedupe(consistent, tol=delta)


def spoof_feasible(n: int, k: int) -> bool:
    """Can k coordinated malicious anchors among n make a fake position pass?

    A fake position can gather at most 2 honest supporters (a circle pair's
    second intersection) plus all k malicious ones, against n-k honest claims
    backing the true position; the fake wins ties, giving n < 2k+3.
    """
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    return n < 2 * k + 3
