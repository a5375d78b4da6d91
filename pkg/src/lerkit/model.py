"""Shared domain types, parameter validation, and the seeded random-source contract.

Every randomized component takes a :class:`RandomSource` descriptor instead of a
live generator, so any run can be replayed bit-identically and parallel trials
can derive independent child streams from (master_seed, trial index).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF


class InvalidParam(ValueError):
    """A scenario parameter violates its allowed range."""

    def __init__(self, fieldname: str, reason: str):
        self.field = fieldname
        self.reason = reason
        super().__init__(f"{fieldname}: {reason}")


@dataclass(frozen=True)
class ScenarioParams:
    """The user-chosen (p, E, T) triple plus Monte Carlo repetition count N.

    p: assumed fraction of malicious entities, 0 <= p < 1
    E: target expected number of verifications until spoofing is detected
    T: sliding-window size (most recently encountered entities considered)
    N: Monte Carlo repetitions per estimate
    """

    p: float
    E: float
    T: int
    N: int = 10_000


def validate_params(params: ScenarioParams) -> ScenarioParams:
    """Return ``params`` unchanged if all invariants hold, else raise InvalidParam.

    p = 1 is rejected outright: with every encounter malicious, detection of a
    spoofed fix is impossible and the expected detection time diverges.
    """
    p, E, T, N = params.p, params.E, params.T, params.N
    if not (isinstance(p, (int, float)) and math.isfinite(p)):
        raise InvalidParam("p", f"must be a finite number, got {p!r}")
    if not (0.0 <= p < 1.0):
        raise InvalidParam("p", f"must satisfy 0 <= p < 1, got {p}")
    if not (isinstance(E, (int, float)) and math.isfinite(E)):
        raise InvalidParam("E", f"must be a finite number, got {E!r}")
    if E < 1:
        raise InvalidParam("E", f"must be >= 1, got {E}")
    if not isinstance(T, int) or isinstance(T, bool):
        raise InvalidParam("T", f"must be an integer, got {T!r}")
    if T < 1:
        raise InvalidParam("T", f"must be >= 1, got {T}")
    if not isinstance(N, int) or isinstance(N, bool):
        raise InvalidParam("N", f"must be an integer, got {N!r}")
    if N < 1:
        raise InvalidParam("N", f"must be >= 1, got {N}")
    return params


@dataclass(frozen=True)
class WeightFunction:
    """Per-index weights over a sliding window; index 1 is the most recent entry."""

    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.weights) == 0:
            raise InvalidParam("weights", "must not be empty")
        for i, w in enumerate(self.weights, start=1):
            if not math.isfinite(w) or w < 0:
                raise InvalidParam("weights", f"index {i}: must be finite and >= 0, got {w}")

    @property
    def T(self) -> int:
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(sum(self.weights))

    def is_monotone_nonincreasing(self) -> bool:
        return all(a >= b for a, b in zip(self.weights, self.weights[1:]))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    @staticmethod
    def uniform(T: int, value: float = 1.0) -> "WeightFunction":
        return WeightFunction(tuple(float(value) for _ in range(T)))

    @staticmethod
    def of(values: Sequence[float]) -> "WeightFunction":
        return WeightFunction(tuple(float(v) for v in values))


@dataclass(frozen=True)
class RecoveryConfig:
    """A tuned recovery protocol: weight function, threshold, and its provenance."""

    weights: WeightFunction
    threshold: float
    p: float
    E: float
    N: int
    qual: float

    def __post_init__(self):
        if self.threshold < 0:
            raise InvalidParam("threshold", f"must be >= 0, got {self.threshold}")
        if not (0.0 <= self.qual <= 1.0):
            raise InvalidParam("qual", f"must be in [0, 1], got {self.qual}")

    @property
    def T(self) -> int:
        return self.weights.T

    def to_json(self) -> str:
        doc = {
            "T": self.T,
            "weights": list(self.weights.weights),
            "threshold": self.threshold,
            "p": self.p,
            "E": self.E,
            "N": self.N,
            "qual": self.qual,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "RecoveryConfig":
        doc = json.loads(text)
        weights = WeightFunction.of(doc["weights"])
        if weights.T != int(doc["T"]):
            raise InvalidParam("T", f"declared T={doc['T']} but {weights.T} weights given")
        return RecoveryConfig(
            weights=weights,
            threshold=float(doc["threshold"]),
            p=float(doc["p"]),
            E=float(doc["E"]),
            N=int(doc["N"]),
            qual=float(doc["qual"]),
        )


@dataclass(frozen=True)
class Coordinates:
    """Planar position in meters. z defaults to 0 (2D approximation)."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParam(name, f"must be finite, got {v}")

    def distance_to(self, other: "Coordinates") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


@dataclass(frozen=True)
class VerificationOutcome:
    """Binary result of one location verification with a peer.

    v = 1 means the peer's reported coordinates do NOT match the measured
    distance (a failed verification); v = 0 means they match.
    """

    peer_id: str
    v: int
    at_time: float

    def __post_init__(self):
        if self.v not in (0, 1):
            raise InvalidParam("v", f"must be 0 or 1, got {self.v}")


def _mix64(a: int, b: int) -> int:
    # splitmix64 finalizer; folds (stream, index) into a fresh 64-bit stream id
    x = (a * 0x632BE59BD9B4E019 + b * 0x9E3779B97F4A7C15 + 0xD1B54A32D192ED03) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return (x ^ (x >> 31)) & _U64


@dataclass(frozen=True)
class RandomSource:
    """Descriptor of a deterministic random stream.

    Equal (master_seed, stream_id) pairs always reproduce the same draws;
    distinct stream_ids give statistically independent streams. The descriptor
    itself is immutable; call :meth:`generator` for a fresh stateful generator.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed <= _U64):
            raise InvalidParam("master_seed", "must fit in 64 bits")
        if self.stream_id < 0:
            raise InvalidParam("stream_id", "must be >= 0")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._seed_seq()))

    def _seed_seq(self, *subkey: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id, *subkey)
        )

    def child(self, index: int) -> "RandomSource":
        """Derive an independent stream for a parallel trial or sub-component."""
        return RandomSource(self.master_seed, _mix64(self.stream_id, index))

    def descriptor(self) -> str:
        return f"seed={self.master_seed}/stream={self.stream_id}"


def bernoulli(src: "RandomSource | np.random.Generator", prob: float) -> int:
    """One biased coin flip: returns 1 with probability ``prob``.

    Accepts a live generator (draws advance its state) or a RandomSource
    (a fresh generator is materialized, so the call is a pure function of
    the descriptor and prob).
    """
    if not (0.0 <= prob <= 1.0):
        raise InvalidParam("prob", f"must be in [0, 1], got {prob}")
    rng = src.generator() if isinstance(src, RandomSource) else src
    return int(rng.random() < prob)
