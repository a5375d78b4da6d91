"""Sliding-window recovery protocol.

Keeps the T most recent verification outcomes, scores them with a weight
function (most recent entry gets weight index 1), and switches to Recovery
mode when the weighted failure sum D exceeds the threshold t. The comparison
is strict: D == t stays in Normal mode.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction

from .model import RecoveryConfig, VerificationOutcome, WeightFunction


class CapacityMismatch(ValueError):
    """Weight function length differs from the window capacity."""


class Mode(str, Enum):
    NORMAL = "Normal"
    RECOVERY = "Recovery"


@dataclass(frozen=True)
class SlidingWindow:
    """Up to ``capacity`` outcomes, most recent first."""

    capacity: int
    entries: tuple[VerificationOutcome, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if len(self.entries) > self.capacity:
            raise ValueError("window overfull")

    def __len__(self) -> int:
        return len(self.entries)


def push(window: SlidingWindow, outcome: VerificationOutcome) -> SlidingWindow:
    """New outcome becomes index 1; at capacity the least recent entry is dropped."""
    entries = (outcome,) + window.entries
    if len(entries) > window.capacity:
        entries = entries[: window.capacity]
    return replace(window, entries=entries)


def score(window: SlidingWindow, weights: WeightFunction) -> float:
    """Weighted failure sum D over occupied indices; absent entries contribute 0."""
    if weights.T != window.capacity:
        raise CapacityMismatch(
            f"weights length {weights.T} != window capacity {window.capacity}"
        )
    return float(sum(w * e.v for w, e in zip(weights.weights, window.entries)))


def score_exact(window: SlidingWindow, weights: WeightFunction) -> Fraction:
    """Exact-rational D, for oracles where the D == t boundary must be precise.

    Binary floats are rationals, so Fraction(w) is lossless for any weight.
    """
    if weights.T != window.capacity:
        raise CapacityMismatch(
            f"weights length {weights.T} != window capacity {window.capacity}"
        )
    total = Fraction(0)
    for w, e in zip(weights.weights, window.entries):
        if e.v:
            total += Fraction(w)
    return total


def decide(D: float, t: float) -> Mode:
    """Recovery iff D > t, strictly; D == t stays Normal."""
    if t < 0:
        raise ValueError(f"threshold must be >= 0, got {t}")
    return Mode.RECOVERY if D > t else Mode.NORMAL


@dataclass(frozen=True)
class ModeState:
    """Detector mode plus the D-score history. Recovery is latched: once
    entered, the state stays in Recovery until reset() is called."""

    mode: Mode = Mode.NORMAL
    entered_at: float | None = None
    score_history: tuple[tuple[float, float], ...] = ()

    def reset(self) -> "ModeState":
        return ModeState()


def step(
    state: ModeState,
    window: SlidingWindow,
    outcome: VerificationOutcome,
    config: RecoveryConfig,
) -> tuple[ModeState, SlidingWindow]:
    """Push the outcome, recompute D, and update the latched mode."""
    window = push(window, outcome)
    D = score(window, config.weights)
    history = state.score_history + ((outcome.at_time, D),)
    if state.mode is Mode.RECOVERY:
        return replace(state, score_history=history), window
    if decide(D, config.threshold) is Mode.RECOVERY:
        new_state = ModeState(
            mode=Mode.RECOVERY, entered_at=outcome.at_time, score_history=history
        )
    else:
        new_state = replace(state, score_history=history)
    return new_state, window


def history_csv(state: ModeState) -> str:
    """Score history as ``step,D,mode`` rows; mode reflects the latched state
    at each step (Recovery from the step whose D first exceeded the threshold
    is not reconstructable here, so rows carry the time-ordered D values and
    the mode is derived from entered_at)."""
    out = io.StringIO()
    out.write("step,D,mode\n")
    for i, (at_time, D) in enumerate(state.score_history, start=1):
        if state.entered_at is not None and at_time >= state.entered_at:
            mode = Mode.RECOVERY.value
        else:
            mode = Mode.NORMAL.value
        out.write(f"{i},{D!r},{mode}\n")
    return out.getvalue()
