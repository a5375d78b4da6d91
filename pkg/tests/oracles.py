"""Shared independent oracles used by module tests and the acceptance suite."""

import math

from lerkit.geometry import Anchor, circle_intersections
from lerkit.model import Coordinates


def spoof_construction_feasible(n, k, rng, delta=1e-6):
    """Constructively decide whether k coordinated malicious anchors among n
    can make some fake position at least as supported as the true one.

    Honest anchors claim their true position and true distance to the target,
    so their circles all pass through the true position P. The attacker's best
    fake position F is the second intersection of a pair of honest circles
    (two honest supporters; a third honest circle generically misses F), any
    point of the single honest circle when only one honest anchor exists, or
    an arbitrary point with no honest anchors. Malicious anchors claim
    distances consistent with F, so F's support is (honest supporters) + k
    against P's support of n - k; the attack works on ties since the target
    cannot tell the clusters apart.

    Degenerate draws (tangent or coincident geometry) are resampled.
    """
    n_honest = n - k
    while True:
        P = Coordinates(float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50)))
        honest = []
        ok = True
        for _ in range(n_honest):
            pos = Coordinates(float(rng.uniform(-200, 200)), float(rng.uniform(-200, 200)))
            if pos.distance_to(P) < 1.0:
                ok = False
                break
            honest.append(Anchor(pos, pos.distance_to(P)))
        if not ok:
            continue

        if n_honest >= 2:
            pts = circle_intersections(honest[0], honest[1])
            fakes = [q for q in pts if q.distance_to(P) > 1e-3]
            if not fakes:
                continue  # tangent draw: resample a generic configuration
            F = fakes[0]
        elif n_honest == 1:
            # anywhere on the single honest circle, away from P
            c, r = honest[0].position, honest[0].distance
            angle = float(rng.uniform(0, 2 * math.pi))
            F = Coordinates(c.x + r * math.cos(angle), c.y + r * math.sin(angle))
            if F.distance_to(P) < 1e-3:
                continue
        else:
            F = Coordinates(P.x + 10.0, P.y)

        support_f = k + sum(1 for a in honest if a.circle_error(F) <= delta)
        support_p = sum(1 for a in honest if a.circle_error(P) <= delta)
        # generic position: a third honest circle must not also pass through F
        extra = sum(1 for a in honest[2:] if a.circle_error(F) <= delta)
        if n_honest >= 3 and extra:
            continue
        return support_f >= support_p
