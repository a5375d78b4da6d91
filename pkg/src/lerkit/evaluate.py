"""Evaluation harnesses: detection-probability curves, qual sweeps, and exact
small-instance oracles.

The exact functions enumerate or propagate over all 2^T window states and are
the ground truth that anchors every Monte Carlo estimator in the package; they
are deliberately independent of the sampling code paths they check.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ._mc import DetectionSampler, qual_mc
from .model import InvalidParam, RandomSource, RecoveryConfig, WeightFunction

DP_MAX_WINDOW = 20
DEFAULT_DP_CAP = 100_000
_DP_RESIDUAL_TOL = 1e-15


class BudgetExceeded(RuntimeError):
    """The 2^T state space (or cap * 2^T work) is too large for exact DP."""


@dataclass(frozen=True)
class DetectionCurve:
    """Cumulative probability of detection by step s, for s = 1..len(values)."""

    values: tuple[float, ...]
    config: RecoveryConfig
    actual_p: float

    def __post_init__(self):
        prev = 0.0
        for i, v in enumerate(self.values, start=1):
            if not (0.0 <= v <= 1.0) or v + 1e-12 < prev:
                raise InvalidParam("values", f"step {i}: curve must be non-decreasing in [0,1]")
            prev = v

    @property
    def steps(self) -> range:
        return range(1, len(self.values) + 1)

    def csv(self) -> str:
        out = io.StringIO()
        out.write("step,prob\n")
        for s, v in zip(self.steps, self.values):
            out.write(f"{s},{v!r}\n")
        return out.getvalue()


@dataclass(frozen=True)
class QualCurve:
    """qual measured at each value of a sweep variable (actual p, or E)."""

    variable: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.variable not in ("p", "E"):
            raise InvalidParam("variable", f"must be 'p' or 'E', got {self.variable}")
        for x, q in self.points:
            if not (0.0 <= q <= 1.0):
                raise InvalidParam("points", f"qual at {x} out of [0,1]: {q}")

    def csv(self) -> str:
        out = io.StringIO()
        out.write(f"{self.variable},qual\n")
        for x, q in self.points:
            out.write(f"{x!r},{q!r}\n")
        return out.getvalue()


def detection_curve(
    config: RecoveryConfig,
    actual_p: float,
    N: int,
    max_steps: int,
    src: RandomSource,
) -> DetectionCurve:
    """Fraction of N spoofed trials detected by each step s <= max_steps.

    actual_p may differ from the p the config was optimized for; that is the
    point of the sweep figures.
    """
    if max_steps < 1:
        raise InvalidParam("max_steps", f"must be >= 1, got {max_steps}")
    sampler = DetectionSampler(config.weights.as_array(), actual_p, N, src)
    frac = sampler.frac_detected_by(config.threshold, max_steps)
    return DetectionCurve(values=tuple(float(v) for v in frac), config=config, actual_p=actual_p)


def qual_sweep_over_p(
    config: RecoveryConfig,
    p_values: list[float],
    N: int,
    src: RandomSource,
) -> QualCurve:
    """qual of a fixed config evaluated at each actual malicious fraction.

    Each sweep point draws from its own derived stream, so results are
    independent of evaluation order and of how points are distributed across
    workers.
    """
    points = []
    for i, p in enumerate(p_values):
        if not (0.0 <= p <= 1.0):
            raise InvalidParam("p_values", f"p={p} out of [0, 1]")
        if p == 0.0:
            q = 1.0 if config.threshold >= 0 else 0.0
        else:
            q = qual_mc(config.weights.as_array(), config.threshold, p, N, src.child(i))
        points.append((float(p), float(q)))
    return QualCurve(variable="p", points=tuple(points))


def _check_dp_budget(T: int, cap: int) -> None:
    if T > DP_MAX_WINDOW:
        raise BudgetExceeded(f"window size {T} > {DP_MAX_WINDOW}: 2^T state space too large")
    if cap * (2**T) > 4e11:
        raise BudgetExceeded(f"cap {cap} * 2^{T} states exceeds the work budget")


def _score_table(weights: WeightFunction) -> np.ndarray:
    """D for every window state; bit i of the state is v_{i+1} (bit 0 = most recent)."""
    T = weights.T
    states = np.arange(2**T, dtype=np.int64)
    D = np.zeros(2**T)
    for i, w in enumerate(weights.weights):
        D += w * ((states >> i) & 1)
    return D


def exact_expected_steps(
    weights: WeightFunction,
    t: float,
    p: float,
    cap: int = DEFAULT_DP_CAP,
) -> float:
    """Exact expected first step with D > t in the spoofed scenario.

    Probability mass is propagated over all 2^T window states, absorbing mass
    as it first enters a state with D > t. The sum is truncated at `cap` steps:
    leftover mass contributes cap * residual, so the returned value
    underestimates the true expectation by at most residual * (E_tail - cap),
    with residual ~ 1e-13 for any threshold a calibrated config would use.
    """
    if not (0.0 <= p < 1.0):
        raise InvalidParam("p", f"must satisfy 0 <= p < 1, got {p}")
    T = weights.T
    _check_dp_budget(T, cap)
    q1 = 1.0 - p  # P(v=1): non-malicious peer contradicts the spoofed fix
    D = _score_table(weights)
    if t >= float(np.asarray(weights.weights).sum()):
        raise InvalidParam("t", f"t={t} >= sum of weights: detection impossible")

    mask = 2**T - 1
    states = np.arange(2**T, dtype=np.int64)
    shift0 = (states << 1) & mask
    shift1 = shift0 | 1
    absorbing = D > t

    prob = np.zeros(2**T)
    prob[0] = 1.0  # empty window: absent entries score 0, same as the all-zero state
    expected = 0.0
    residual = 1.0
    for step in range(1, cap + 1):
        next_prob = np.bincount(shift0, weights=prob * p, minlength=mask + 1)
        next_prob += np.bincount(shift1, weights=prob * q1, minlength=mask + 1)
        absorbed = float(next_prob[absorbing].sum())
        expected += step * absorbed
        next_prob[absorbing] = 0.0
        prob = next_prob
        residual -= absorbed
        if residual < _DP_RESIDUAL_TOL:
            break
    return expected + max(residual, 0.0) * cap


def exact_qual(weights: WeightFunction, t: float, p: float) -> float:
    """Exact qual: total Bernoulli(p) probability of windows with D <= t.

    In the unspoofed scenario each window slot is malicious (v=1) with
    probability p, independently.
    """
    if not (0.0 <= p <= 1.0):
        raise InvalidParam("p", f"must be in [0, 1], got {p}")
    T = weights.T
    _check_dp_budget(T, 1)
    if t >= weights.total:
        return 1.0  # every window satisfies D <= t; avoids summation round-off
    D = _score_table(weights)
    states = np.arange(2**T, dtype=np.int64)
    ones = np.zeros(2**T, dtype=np.int64)
    for i in range(T):
        ones += (states >> i) & 1
    # 0**0 == 1 makes p = 0 and p = 1 come out right without special cases
    prob = (p ** ones.astype(np.float64)) * ((1.0 - p) ** (T - ones).astype(np.float64))
    return float(prob[D <= t].sum())
