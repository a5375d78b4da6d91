"""Weight and threshold optimization for the recovery protocol.

Given (p, E, T, N), finds per-index weight intervals that maximize the true
negative rate subject to detecting a spoofed fix after E verifications in
expectation, then fits a monotone non-increasing weight function inside the
intervals and re-tunes its threshold.

The search over a single index's weight proceeds by interval shrinking: probe
the qual at low/mid/high (each probe re-optimizes the threshold to keep the
expected detection step at E), descend into the half whose endpoint beats the
midpoint, and once the midpoint is at least as good as both endpoints, bisect
for the plateau's left and right edges until the interval width is below 1e-5.
All probes within one index share trial streams (common random numbers), so
plateau detection compares exactly equal counts instead of resampled noise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._mc import DetectionSampler, IndexProbeSampler, QualEstimator, qual_mc
from .model import (
    InvalidParam,
    RandomSource,
    RecoveryConfig,
    ScenarioParams,
    WeightFunction,
    validate_params,
)

DEFAULT_EPS_E = 0.05
DEFAULT_INTERVAL_TOL = 1e-5
DEFAULT_STEP_CAP = 100_000
_MIN_SEARCH_STEP = 1e-4


class Nonterminating(RuntimeError):
    """Detection cannot (or almost never does) happen at this threshold."""


class Unachievable(RuntimeError):
    """No threshold can reach the requested expected detection step count."""

    def __init__(self, E: float, reason: str):
        self.E = E
        super().__init__(f"E={E}: {reason}")


class InfeasibleMonotoneFit(RuntimeError):
    """No monotone non-increasing function fits inside the per-index bounds."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"monotone fit impossible at index {index}")


@dataclass(frozen=True)
class IndexBounds:
    """Per-index weight intervals, index 1 = most recent encounter."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise InvalidParam("bounds", "lower/upper length mismatch")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper), start=1):
            if lo < 0 or not math.isfinite(lo) or not math.isfinite(hi):
                raise InvalidParam("bounds", f"index {i}: invalid interval [{lo}, {hi}]")
            if lo > hi:
                raise InvalidParam("bounds", f"index {i}: lower {lo} > upper {hi}")

    @property
    def T(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class OptimizationReport:
    """Everything the optimizer produced, sufficient to reproduce the run."""

    params: ScenarioParams
    bounds: IndexBounds
    fitted_weights: WeightFunction
    threshold: float
    qual: float
    trials_used: int
    seed: str

    def __post_init__(self):
        if not self.fitted_weights.is_monotone_nonincreasing():
            raise InvalidParam("fitted_weights", "must be monotone non-increasing")
        for i, (lo, w, hi) in enumerate(
            zip(self.bounds.lower, self.fitted_weights.weights, self.bounds.upper), start=1
        ):
            if not (lo <= w <= hi):
                raise InvalidParam(
                    "fitted_weights", f"index {i}: {w} outside bounds [{lo}, {hi}]"
                )

    def to_config(self) -> RecoveryConfig:
        return RecoveryConfig(
            weights=self.fitted_weights,
            threshold=self.threshold,
            p=self.params.p,
            E=self.params.E,
            N=self.params.N,
            qual=self.qual,
        )

    def bounds_csv(self) -> str:
        out = io.StringIO()
        out.write("index,lower,upper,fitted\n")
        for i, (lo, hi, w) in enumerate(
            zip(self.bounds.lower, self.bounds.upper, self.fitted_weights.weights), start=1
        ):
            out.write(f"{i},{lo!r},{hi!r},{w!r}\n")
        return out.getvalue()


def expected_detection_steps(
    weights: WeightFunction,
    t: float,
    p: float,
    N: int,
    src: RandomSource,
    step_cap: int = DEFAULT_STEP_CAP,
) -> float:
    """Mean number of verification steps until D > t in the spoofed scenario.

    Each encountered peer is non-malicious (v=1, contradicting the spoofed fix)
    with probability 1-p. Raises Nonterminating when t >= sum of weights (D can
    never exceed it) or when more than 1% of trials exceed the step cap; capped
    trials below that contribute the cap value to the mean.
    """
    if t < 0:
        raise InvalidParam("t", f"must be >= 0, got {t}")
    if not (0.0 <= p < 1.0):
        raise InvalidParam("p", f"must satisfy 0 <= p < 1, got {p}")
    arr = weights.as_array()
    if t >= float(arr.sum()):
        raise Nonterminating(f"threshold {t} >= sum of weights {arr.sum()}")
    sampler = DetectionSampler(arr, p, N, src, step_cap=step_cap)
    mean, capped = sampler.mean_steps(t)
    if capped > 0.01:
        raise Nonterminating(f"{capped:.1%} of trials exceeded the {step_cap}-step cap")
    return mean


def qual(
    weights: WeightFunction, t: float, p: float, T: int, N: int, src: RandomSource
) -> float:
    """Fraction of N unspoofed windows (each slot malicious with prob p) with D <= t."""
    if weights.T != T:
        raise InvalidParam("T", f"weights have length {weights.T}, expected {T}")
    return qual_mc(weights.as_array(), t, p, N, src)


def _deterministic_steps(arr: np.ndarray) -> list[int]:
    """Achievable detection steps when p = 0 (every outcome is v=1).

    The score grows by w_s at step s <= T and is constant after, so detection
    can only ever happen at a step whose weight is positive.
    """
    return [s + 1 for s in range(len(arr)) if arr[s] > 0]


def _threshold_search(
    measure: Callable[[float], tuple[float, bool]],
    E: float,
    eps: float,
    start: float,
    min_step: float = _MIN_SEARCH_STEP,
    max_iters: int = 2000,
) -> float:
    """Step-walk with direction-flip halving.

    Decrease t while the measured mean exceeds E, increase while it falls
    short; halve the step whenever the direction flips; stop when an exactly
    resolved mean is within eps of E, or return the best exactly-resolved t
    once the step drops below min_step.
    """
    t = max(start, 0.0)
    step = 1.0
    last_dir = 0
    best_t: float | None = None
    best_diff = math.inf
    cache: dict[float, tuple[float, bool]] = {}
    for _ in range(max_iters):
        if t in cache:
            m, exact = cache[t]
        else:
            m, exact = measure(t)
            cache[t] = (m, exact)
        if exact:
            diff = abs(m - E)
            if diff <= eps:
                return t
            if diff < best_diff:
                best_diff, best_t = diff, t
        direction = -1 if m > E else 1
        if last_dir != 0 and direction != last_dir:
            step /= 2
            if step < min_step:
                return best_t if best_t is not None else t
        last_dir = direction
        new_t = max(t + direction * step, 0.0)
        if new_t == t:
            # pinned at 0 wanting to go lower: halving is the only move left
            step /= 2
            if step < min_step:
                return best_t if best_t is not None else t
        else:
            t = new_t
    raise RuntimeError("threshold search did not converge")


def optimal_threshold(
    weights: WeightFunction,
    p: float,
    E: float,
    N: int,
    src: RandomSource,
    eps: float = DEFAULT_EPS_E,
    start: float | None = None,
    step_cap: int = DEFAULT_STEP_CAP,
) -> float:
    """Threshold t at which the spoofed scenario takes E expected steps to detect.

    Bracketing check first: the expected steps at t=0 must not already exceed
    E (nothing below t=0 exists), and for p=0 the deterministic all-mismatch
    stream must be able to reach E at all. Failures raise Unachievable.
    """
    if not (0.0 <= p < 1.0):
        raise InvalidParam("p", f"must satisfy 0 <= p < 1, got {p}")
    arr = weights.as_array()
    total = float(arr.sum())
    if total <= 0:
        raise Unachievable(E, "all weights are zero; D is identically 0")
    sampler = DetectionSampler(arr, p, N, src, step_cap=step_cap)
    m0, capped0 = sampler.mean_steps(0.0)
    if capped0 > 0.01:
        raise Unachievable(E, "detection at t=0 almost never happens")
    if m0 > E + eps:
        raise Unachievable(E, f"expected steps at t=0 is already {m0:.3f} > E")
    if p == 0.0:
        achievable = _deterministic_steps(arr)
        if not achievable or max(achievable) < E - eps:
            raise Unachievable(E, "deterministic stream cannot take that many steps")

    def measure(t: float) -> tuple[float, bool]:
        if t >= total:
            return math.inf, False
        return sampler.mean_vs(t, E, eps)

    if start is None:
        start = total / 2
    return _threshold_search(measure, E, eps, start)


def _shrink_interval(
    probe: Callable[[float], float],
    low: float,
    high: float,
    tol: float = DEFAULT_INTERVAL_TOL,
    margin: float = 0.0,
    max_restarts: int = 100,
) -> tuple[float, float]:
    """Interval shrinking over a qual landscape; returns the best-plateau pair.

    Descends while the midpoint is worse than an endpoint; once the midpoint
    is at least as good as both, bisects left and right plateau edges to width
    <= tol and returns the boundary pair with the highest qual. A strictly
    better value discovered during edge bisection restarts the recursion
    around it.

    qual differences within `margin` compare as ties: below the estimator's
    statistical resolution a difference is noise, and treating it as a slope
    would collapse flat regions to arbitrary hard edges instead of reporting
    the whole tied interval.
    """
    if high < low:
        raise InvalidParam("interval", f"low {low} > high {high}")

    cache: dict[float, float] = {}

    def q(x: float) -> float:
        if x not in cache:
            cache[x] = probe(x)
        return cache[x]

    def lt(a: float, b: float) -> bool:
        return a < b - margin

    while high - low > tol:
        mid = (low + high) / 2
        q_low, q_mid, q_high = q(low), q(mid), q(high)
        if lt(q_mid, q_low):
            high = mid
        elif lt(q_mid, q_high):
            low = mid
        else:
            break
    else:
        return low, high

    mid = (low + high) / 2
    mid1 = mid2 = mid
    restarts = 0
    while True:
        if mid1 - low > tol:
            mid_new = (low + mid1) / 2
            if lt(q(mid_new), q(mid1)):
                low = mid_new
            elif lt(q(mid1), q(mid_new)):
                if restarts >= max_restarts:
                    break
                restarts += 1
                low, mid1, mid2, high = low, mid_new, mid_new, mid1
            else:
                mid1 = mid_new
        elif high - mid2 > tol:
            mid_new = (mid2 + high) / 2
            if lt(q(mid_new), q(mid2)):
                high = mid_new
            elif lt(q(mid2), q(mid_new)):
                if restarts >= max_restarts:
                    break
                restarts += 1
                low, mid1, mid2, high = mid2, mid_new, mid_new, high
            else:
                mid2 = mid_new
        else:
            break
    value1 = mid1 if lt(q(low), q(mid1)) else low
    value2 = mid2 if lt(q(high), q(mid2)) else high
    return value1, value2


def optimize_index(
    weights: WeightFunction,
    index: int,
    low: float,
    high: float,
    ctx: ScenarioParams,
    src: RandomSource,
    eps: float = DEFAULT_EPS_E,
    tol: float = DEFAULT_INTERVAL_TOL,
    warm_t: float | None = None,
    step_cap: int = DEFAULT_STEP_CAP,
) -> tuple[float, float]:
    """Best-qual weight interval for one index, other indices held fixed.

    Each probe value re-optimizes the threshold for the modified weight
    function and measures its qual; probes whose threshold search is
    unachievable score qual 0 so the interval search steers away from them.
    All probes share trial streams (common random numbers).
    """
    if not (1 <= index <= weights.T):
        raise InvalidParam("index", f"must be in 1..{weights.T}, got {index}")
    validate_params(ctx)
    p, E, N = ctx.p, ctx.E, ctx.N
    # probes whose threshold search cannot get this close to E score qual 0,
    # steering the interval search away from weight values that quantize the
    # score so coarsely that E falls between two expected-step plateaus
    probe_gate = max(4 * eps, 0.025 * E)

    base = weights.as_array()
    ips = IndexProbeSampler(base, index, p, N, src, step_cap=step_cap)
    qe = QualEstimator(weights.T, p, N, src)
    qual_base, qual_col = qe.affine(base, index)

    last_t = warm_t

    def probe(x: float) -> float:
        nonlocal last_t
        total = ips.total_weight_at(x)
        if total <= 0:
            return 0.0
        if p == 0.0:
            arr = base.copy()
            arr[index - 1] = x
            achievable = _deterministic_steps(arr)
            if not min((abs(s - E) for s in achievable), default=math.inf) <= probe_gate:
                return 0.0
        m0, exact0 = ips.mean_vs(x, 0.0, E, eps)
        if m0 > E + eps:
            return 0.0

        def measure(t: float) -> tuple[float, bool]:
            if t >= total:
                return math.inf, False
            return ips.mean_vs(x, t, E, eps)

        start = last_t if last_t is not None else total / 2
        t_x = _threshold_search(measure, E, eps, start)
        achieved, exact = ips.mean_vs(x, t_x, E, probe_gate)
        if not exact or abs(achieved - E) > probe_gate:
            return 0.0
        last_t = t_x
        return float(((qual_base + x * qual_col) <= t_x).mean())

    # differences below the qual estimator's resolution are ties
    margin = 0.5 / math.sqrt(N)
    return _shrink_interval(probe, low, high, tol=tol, margin=margin)


def fit_monotone(bounds: IndexBounds) -> WeightFunction:
    """Greedy monotone non-increasing fit inside per-index bounds.

    w1 = upper_1; w_i = min(w_{i-1}, upper_i); fails if any w_i drops below
    lower_i.
    """
    fitted: list[float] = []
    prev = math.inf
    for i, (lo, hi) in enumerate(zip(bounds.lower, bounds.upper), start=1):
        w = min(prev, hi)
        if w < lo:
            raise InfeasibleMonotoneFit(i)
        fitted.append(w)
        prev = w
    return WeightFunction.of(fitted)


_GOLDEN = 0.6180339887498949


def _midpoint_fit(bounds: IndexBounds) -> WeightFunction | None:
    """Monotone fit through interval midpoints, or None if that is infeasible."""
    fitted: list[float] = []
    prev = math.inf
    for lo, hi in zip(bounds.lower, bounds.upper):
        w = min(prev, (lo + hi) / 2)
        if w < lo:
            return None
        fitted.append(w)
        prev = w
    return WeightFunction.of(fitted)


def optimize_weights(
    params: ScenarioParams,
    src: RandomSource,
    eps: float = DEFAULT_EPS_E,
    tol: float = DEFAULT_INTERVAL_TOL,
    step_cap: int = DEFAULT_STEP_CAP,
    progress: Callable[[str], None] | None = None,
) -> OptimizationReport:
    """Full optimization: per-index bounds, monotone in-band fit, final threshold
    and qual.

    The starting weight function is fixed to all-ones for reproducibility, and
    the first index's interval is [0, 2 * t_opt(all-ones)]. The weight found
    for an index carries over while later indices are probed (coordinate
    descent), and each subsequent interval is capped at the carried weight, so
    a monotone non-increasing function always exists inside the bounds. The
    carried value is a fixed golden-ratio interior point of the found interval
    rather than its edge: every point of the interval is qual-equivalent by
    construction, and distinct weights keep the score lattice fine enough for
    the threshold search to land within tolerance of E (repeated identical
    weights quantize the score and can make E unreachable).

    The fitted function is the carried one when the expected detection steps
    of its re-tuned threshold verify at E on an independent stream, with the
    greedy upper-bound fit as fallback; the candidate closest to E wins if
    neither verifies. Each index and each verification draws from its own
    derived stream, so the whole run is bit-reproducible for a given source.
    """
    validate_params(params)
    p, E, T, N = params.p, params.E, params.T, params.N

    w0 = WeightFunction.uniform(T)
    t0 = optimal_threshold(w0, p, E, N, src.child(0), eps=eps, step_cap=step_cap)
    high = 2.0 * t0
    if progress:
        progress(f"initial threshold {t0:.4f} for uniform weights; probing [0, {high:.4f}]")

    carried = list(w0.weights)
    lowers: list[float] = []
    uppers: list[float] = []
    cap = high
    for i in range(1, T + 1):
        lo, hi = optimize_index(
            WeightFunction.of(carried), i, 0.0, cap, params, src.child(i),
            eps=eps, tol=tol, warm_t=t0, step_cap=step_cap,
        )
        lowers.append(lo)
        uppers.append(hi)
        w_i = min(lo + (hi - lo) * ((i * _GOLDEN) % 1.0), cap)
        carried[i - 1] = w_i
        cap = w_i
        if progress:
            progress(f"index {i}/{T}: weight interval [{lo:.5f}, {hi:.5f}] -> {w_i:.5f}")

    bounds = IndexBounds(tuple(lowers), tuple(uppers))

    candidates = [WeightFunction.of(carried)]
    for alt in (fit_monotone(bounds), _midpoint_fit(bounds)):
        if alt is not None and alt not in candidates:
            candidates.append(alt)

    # Re-tune each candidate's threshold and verify the expected steps on an
    # independent stream: thresholds straddling a score plateau can miss E by
    # more than the search tolerance, which the verification catches. Among
    # candidates that verify, the best measured qual wins; if none do, the one
    # closest to E does.
    passing: list[tuple[float, WeightFunction, float]] = []
    fallback: tuple[float, WeightFunction, float] | None = None
    qual_stream = src.child(3 * T + 7)
    for j, cand in enumerate(candidates):
        try:
            t_cand = optimal_threshold(
                cand, p, E, N, src.child(T + 1 + 2 * j), eps=eps, step_cap=step_cap
            )
            measured = expected_detection_steps(
                cand, t_cand, p, N, src.child(T + 2 + 2 * j), step_cap=step_cap
            )
        except (Unachievable, Nonterminating):
            continue
        diff = abs(measured - E)
        q_cand = qual_mc(cand.as_array(), t_cand, p, N, qual_stream)
        if progress:
            progress(
                f"candidate {j}: threshold {t_cand:.4f}, verified E {measured:.4f}, qual {q_cand:.4f}"
            )
        if diff <= 2 * eps:
            passing.append((q_cand, cand, t_cand))
        if fallback is None or diff < fallback[0]:
            fallback = (diff, cand, t_cand)
    if passing:
        _, fitted, t_final = max(passing, key=lambda item: item[0])
    elif fallback is not None:
        _, fitted, t_final = fallback
    else:
        raise Unachievable(E, "no monotone in-band candidate reaches E")

    q_final = qual_mc(fitted.as_array(), t_final, p, N, qual_stream)
    if progress:
        progress(f"fitted threshold {t_final:.4f}, qual {q_final:.4f}")
    return OptimizationReport(
        params=params,
        bounds=bounds,
        fitted_weights=fitted,
        threshold=t_final,
        qual=q_final,
        trials_used=N,
        seed=src.descriptor(),
    )
