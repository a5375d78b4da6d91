"""Mobility traces, encounter extraction, and wall-clock time-to-detection.

Traces are position samples (time, vehicle id, x, y) sorted by time. An
encounter is the first sample at which a peer is within communication range,
deduplicated per key-rotation period: a peer that stays in range produces one
encounter per period, mirroring the first-ranging-only rule of the
verification protocol.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .model import Coordinates, RandomSource, RecoveryConfig, VerificationOutcome
from . import recovery

DEFAULT_RANGE_M = 100.0
DEFAULT_T_K_S = 600.0

_HEADER = "t_sec,vehicle_id,x_m,y_m"


class ParseError(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnknownEntity(KeyError):
    def __init__(self, entity_id: str):
        self.entity_id = entity_id
        super().__init__(f"entity {entity_id!r} not present in trace")


@dataclass(frozen=True)
class TraceRow:
    t: float
    vehicle_id: str
    x: float
    y: float


@dataclass(frozen=True)
class EncounterTrace:
    """Time-sorted position samples; (time, id) pairs are unique."""

    rows: tuple[TraceRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def end_time(self) -> float:
        return self.rows[-1].t if self.rows else 0.0

    def entity_ids(self) -> set[str]:
        return {r.vehicle_id for r in self.rows}

    def csv(self) -> str:
        out = io.StringIO()
        out.write(_HEADER + "\n")
        for r in self.rows:
            out.write(f"{r.t!r},{r.vehicle_id},{r.x!r},{r.y!r}\n")
        return out.getvalue()


@dataclass(frozen=True)
class EncounterEvent:
    time_s: float
    peer_id: str


@dataclass(frozen=True)
class EncounterSequence:
    """First-contact events for one focal entity, deduplicated per t_k."""

    focal_id: str
    events: tuple[EncounterEvent, ...]

    def __len__(self) -> int:
        return len(self.events)


def parse_trace(text: str) -> EncounterTrace:
    """Parse the trace CSV; malformed rows are rejected with their line number."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise ParseError(1, f"expected header {_HEADER!r}")
    rows: list[TraceRow] = []
    seen: set[tuple[float, str]] = set()
    last_t = -math.inf
    for no, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise ParseError(no, f"expected 4 columns, got {len(parts)}")
        try:
            t = float(parts[0])
            x = float(parts[2])
            y = float(parts[3])
        except ValueError as e:
            raise ParseError(no, str(e)) from None
        if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
            raise ParseError(no, "non-finite value")
        vid = parts[1].strip()
        if not vid:
            raise ParseError(no, "empty vehicle_id")
        if t < last_t:
            raise ParseError(no, f"timestamps out of order: {t} after {last_t}")
        if (t, vid) in seen:
            raise ParseError(no, f"duplicate sample for {vid!r} at t={t}")
        seen.add((t, vid))
        last_t = t
        rows.append(TraceRow(t, vid, x, y))
    return EncounterTrace(tuple(rows))


def _samples_by_time(trace: EncounterTrace) -> list[tuple[float, dict[str, tuple[float, float]]]]:
    grouped: list[tuple[float, dict[str, tuple[float, float]]]] = []
    for row in trace.rows:
        if not grouped or grouped[-1][0] != row.t:
            grouped.append((row.t, {}))
        grouped[-1][1][row.vehicle_id] = (row.x, row.y)
    return grouped


def encounters(
    trace: EncounterTrace,
    focal: str,
    range_m: float = DEFAULT_RANGE_M,
    t_k: float = DEFAULT_T_K_S,
) -> EncounterSequence:
    """First-contact events for `focal`: a peer within range_m at a sample time,
    with no prior event for that peer in the last t_k seconds."""
    if focal not in trace.entity_ids():
        raise UnknownEntity(focal)
    last_event: dict[str, float] = {}
    events: list[EncounterEvent] = []
    for t, positions in _samples_by_time(trace):
        if focal not in positions:
            continue
        fx, fy = positions[focal]
        for peer, (px, py) in positions.items():
            if peer == focal:
                continue
            if math.hypot(px - fx, py - fy) > range_m:
                continue
            last = last_event.get(peer)
            if last is not None and t - last < t_k:
                continue
            last_event[peer] = t
            events.append(EncounterEvent(t, peer))
    return EncounterSequence(focal, tuple(events))


@dataclass(frozen=True)
class NotDetected:
    """Value (not an error) carried when the trace ends before detection."""

    trace_end_s: float
    encounters_used: int


def time_to_detection(
    trace: EncounterTrace,
    focal: str,
    config: RecoveryConfig,
    p: float,
    spoof_start: float,
    range_m: float = DEFAULT_RANGE_M,
    t_k: float = DEFAULT_T_K_S,
    src: RandomSource | None = None,
    recovery_rate_multiplier: float = 1.0,
) -> float | NotDetected:
    """Wall-clock delay from spoof_start until the recovery protocol fires.

    Encounters before spoof_start feed the window with outcomes drawn for the
    unspoofed regime (v=1 with probability p); encounters at or after it are
    spoofed-regime draws (v=1 with probability 1-p, each peer malicious with
    probability p). Mode transitions are evaluated only from spoof_start on.

    recovery_rate_multiplier (>= 1, default off) is the hook for ranging more
    aggressively once in Recovery mode; it only affects consumers that keep
    simulating past the detection event, which this latency measurement does
    not.
    """
    if not (0.0 <= p < 1.0):
        raise ValueError(f"p must satisfy 0 <= p < 1, got {p}")
    if recovery_rate_multiplier < 1.0:
        raise ValueError(
            f"recovery_rate_multiplier must be >= 1, got {recovery_rate_multiplier}"
        )
    seq = encounters(trace, focal, range_m=range_m, t_k=t_k)
    rng = (src or RandomSource(0)).generator()
    window = recovery.SlidingWindow(capacity=config.T)
    used = 0
    for ev in seq.events:
        spoofed = ev.time_s >= spoof_start
        prob_mismatch = (1.0 - p) if spoofed else p
        v = int(rng.random() < prob_mismatch)
        window = recovery.push(window, VerificationOutcome(ev.peer_id, v, ev.time_s))
        if spoofed:
            used += 1
            D = recovery.score(window, config.weights)
            if recovery.decide(D, config.threshold) is recovery.Mode.RECOVERY:
                return ev.time_s - spoof_start
    return NotDetected(trace_end_s=trace.end_time, encounters_used=used)


def active_counts(trace: EncounterTrace, bin_s: float) -> list[tuple[float, int]]:
    """Distinct vehicle ids per time bin of width bin_s."""
    if bin_s <= 0:
        raise ValueError(f"bin must be > 0, got {bin_s}")
    bins: dict[int, set[str]] = {}
    for row in trace.rows:
        bins.setdefault(int(row.t // bin_s), set()).add(row.vehicle_id)
    return [(idx * bin_s, len(ids)) for idx, ids in sorted(bins.items())]


def counts_csv(series: list[tuple[float, int]]) -> str:
    out = io.StringIO()
    out.write("bin_start_s,count\n")
    for start, count in series:
        out.write(f"{start!r},{count}\n")
    return out.getvalue()


def synth_trace(
    n_entities: int,
    area: tuple[float, float],
    speed: float,
    duration: float,
    sample_dt: float,
    src: RandomSource,
) -> EncounterTrace:
    """Random-waypoint mobility trace, deterministic under the source.

    Each entity picks uniform waypoints in the area and moves toward the
    current one at constant speed; positions are sampled every sample_dt from
    t=0 through t=duration inclusive.
    """
    if n_entities < 0:
        raise ValueError("n_entities must be >= 0")
    if min(area) <= 0 or speed <= 0 or duration <= 0 or sample_dt <= 0:
        raise ValueError("area, speed, duration, sample_dt must be positive")
    n_samples = int(math.floor(duration / sample_dt)) + 1
    ids = [f"v{i:03d}" for i in range(n_entities)]
    positions = np.zeros((n_entities, n_samples, 2))
    for i in range(n_entities):
        rng = src.child(i).generator()
        x, y = rng.uniform(0, area[0]), rng.uniform(0, area[1])
        wx, wy = rng.uniform(0, area[0]), rng.uniform(0, area[1])
        for s in range(n_samples):
            positions[i, s] = (x, y)
            remaining = speed * sample_dt
            while remaining > 0:
                gap = math.hypot(wx - x, wy - y)
                if gap <= remaining:
                    x, y = wx, wy
                    remaining -= gap
                    wx, wy = rng.uniform(0, area[0]), rng.uniform(0, area[1])
                else:
                    x += (wx - x) / gap * remaining
                    y += (wy - y) / gap * remaining
                    remaining = 0.0
    rows: list[TraceRow] = []
    for s in range(n_samples):
        t = round(s * sample_dt, 9)
        for i, vid in enumerate(ids):
            rows.append(TraceRow(t, vid, float(positions[i, s, 0]), float(positions[i, s, 1])))
    return EncounterTrace(tuple(rows))


def results_csv(rows: list[tuple[str, float, float | NotDetected, int]]) -> str:
    """Detection-latency results: focal_id,spoof_start_s,detect_s,encounters_used."""
    out = io.StringIO()
    out.write("focal_id,spoof_start_s,detect_s,encounters_used\n")
    for focal, start, detect, used in rows:
        if isinstance(detect, NotDetected):
            out.write(f"{focal},{start!r},NA,{detect.encounters_used}\n")
        else:
            out.write(f"{focal},{start!r},{detect!r},{used}\n")
    return out.getvalue()
