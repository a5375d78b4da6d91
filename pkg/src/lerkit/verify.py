"""Location verification exchange between a verifier and a prover.

Simulates one two-way ranging run: six timestamps, arrival-time-protected
codes, signed payloads, and the three acceptance checks (code integrity, data
validation with duplicate suppression, distance-estimate validation). The
physical layer is abstracted to a bit-error/success-probability channel;
adversaries manipulate timestamps and validity flags according to their
capabilities rather than waveforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from .model import Coordinates, RandomSource, VerificationOutcome

SPEED_OF_LIGHT = 299_792_458.0
_MSG_BYTES = 16


class KeyExpired(RuntimeError):
    def __init__(self, entity_id: str):
        self.entity_id = entity_id
        super().__init__(f"key expired for {entity_id}")


class LengthMismatch(ValueError):
    pass


class UnknownId(KeyError):
    def __init__(self, entity_id: str):
        self.entity_id = entity_id
        super().__init__(f"unknown entity id {entity_id!r}")


class AdversaryKind(str, Enum):
    NONE = "none"
    MAFIA_FRAUD = "mafia"
    DISTANCE_FRAUD = "distance"
    TERRORIST_FRAUD = "terrorist"
    DISTANCE_HIJACKING = "hijack"


@dataclass(frozen=True)
class Entity:
    """A road user, roadside unit, or base station taking part in ranging."""

    id: str
    true_position: Coordinates
    reported_position: Coordinates
    key_valid_from: float = 0.0
    key_valid_for: float = 600.0
    role_honest: bool = True
    te_intact: bool = True

    def __post_init__(self):
        if self.key_valid_for <= 0:
            raise ValueError("key_valid_for must be > 0")

    def key_live_at(self, now: float) -> bool:
        return self.key_valid_from <= now <= self.key_valid_from + self.key_valid_for


@dataclass(frozen=True)
class ChannelModel:
    """Abstracted physical channel for the arrival-time-protected codes.

    delta is the slack (meters) allowed between the measured distance and the
    distance implied by the reported coordinates.
    """

    bit_error_rate: float = 0.0
    max_bit_errors_accepted: int = 0
    delta: float = 3.0
    code_bits: int = 128

    def __post_init__(self):
        if not (0.0 <= self.bit_error_rate <= 1.0):
            raise ValueError("bit_error_rate must be in [0, 1]")
        if self.max_bit_errors_accepted < 0 or self.delta < 0:
            raise ValueError("max_bit_errors_accepted and delta must be >= 0")


@dataclass(frozen=True)
class AdversaryModel:
    """Attack configuration for one exchange.

    distance_shift_m is the manipulation the attacker aims for (negative =
    shortening). Shortening by a dishonest prover is clamped to
    max_shortening_m; the symbol-duration bound (3/4 of a symbol at the
    configured subcarrier spacing) is available as an alternative preset via
    symbol_bound_shortening_m(). External (mafia) manipulation only succeeds
    with probability mafia_success_prob; a failed attempt corrupts the code
    and is caught by the integrity check.
    """

    kind: AdversaryKind = AdversaryKind.NONE
    mafia_success_prob: float = 1e-4
    subcarriers: int = 4096
    subcarrier_spacing_hz: float = 480e3
    clock_skew_theta_s: float = 300e-9
    max_shortening_m: float = 200.0
    distance_shift_m: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.mafia_success_prob <= 1.0):
            raise ValueError("mafia_success_prob must be in [0, 1]")
        if self.subcarriers < 1:
            raise ValueError("subcarriers must be >= 1")

    def symbol_bound_shortening_m(self) -> float:
        """3/4 of one symbol duration converted to meters."""
        return 0.75 * (1.0 / self.subcarrier_spacing_hz) * SPEED_OF_LIGHT


@dataclass(frozen=True)
class RangingSession:
    """Record of one full exchange: timestamps T1..T6, messages, codes, tokens."""

    verifier_id: str
    prover_id: str
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    processing_time: float
    m1: bytes
    m2: bytes
    m3: bytes
    c1: bytes
    c2: bytes
    c3: bytes
    sign_r1: bytes
    signatures_valid: bool = True
    integrity_flag: bool = False
    adversary_kind: AdversaryKind = AdversaryKind.NONE
    applied_shift_m: float = 0.0
    attack_succeeded: bool = False

    def measured_distance_m(self) -> float:
        """Verifier-side one-way distance from the round trip minus processing."""
        return (self.t4 - self.t1 - self.processing_time) / 2.0 * SPEED_OF_LIGHT

    def prover_measured_distance_m(self) -> float:
        return (self.t6 - self.t3 - self.processing_time) / 2.0 * SPEED_OF_LIGHT


def _sign_token(entity_id: str, payload: bytes) -> bytes:
    # opaque stand-in for a signature generated inside the trusted environment
    return hashlib.sha256(entity_id.encode() + b"|" + payload).digest()[:_MSG_BYTES]


def _mtac_code(message: bytes) -> bytes:
    return hashlib.sha256(b"MTAC|" + message).digest()[:_MSG_BYTES]


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise LengthMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    return bytes(x ^ y for x, y in zip(a, b))


def recover_signature(m1: bytes, m2: bytes) -> bytes:
    """Recover the signature token linked into the response: m1 xor m2."""
    return xor_bytes(m1, m2)


def run_exchange(
    verifier: Entity,
    prover: Entity,
    chan: ChannelModel,
    adv: AdversaryModel,
    src: RandomSource,
    now: float = 0.0,
    processing_time: float = 1e-6,
) -> RangingSession:
    """Execute one ranging exchange and return the full session record.

    Timestamps reflect true geometry plus whatever manipulation the adversary
    achieves; validity flags reflect which checks the manipulation trips.
    """
    for e in (verifier, prover):
        if not e.key_live_at(now):
            raise KeyExpired(e.id)

    rng = src.generator()
    true_d = verifier.true_position.distance_to(prover.true_position)
    tof = true_d / SPEED_OF_LIGHT

    shift_m = 0.0
    signatures_valid = True
    integrity_flag = False
    attack_succeeded = False
    kind = adv.kind

    if kind is AdversaryKind.DISTANCE_FRAUD:
        requested = adv.distance_shift_m if adv.distance_shift_m is not None else -adv.max_shortening_m
        skew_m = float(rng.uniform(-adv.clock_skew_theta_s, adv.clock_skew_theta_s)) / 2.0 * SPEED_OF_LIGHT
        shift_m = max(requested + skew_m, -adv.max_shortening_m)
        attack_succeeded = True
    elif kind is AdversaryKind.MAFIA_FRAUD:
        if rng.random() < adv.mafia_success_prob:
            shift_m = adv.distance_shift_m if adv.distance_shift_m is not None else -adv.max_shortening_m
            attack_succeeded = True
        else:
            integrity_flag = True  # failed manipulation corrupts the code
    elif kind is AdversaryKind.TERRORIST_FRAUD:
        if prover.te_intact:
            # the remote prover's tokens never leave its trusted environment
            signatures_valid = False
        else:
            shift_m = adv.distance_shift_m if adv.distance_shift_m is not None else -adv.max_shortening_m
            attack_succeeded = True
    elif kind is AdversaryKind.DISTANCE_HIJACKING:
        # the hijacked response recovers to the honest prover's token, not the
        # dishonest one's: the explicit xor linking exposes the substitution
        signatures_valid = False

    m1 = rng.bytes(_MSG_BYTES)
    sign_r1 = _sign_token(prover.id, m1)
    m2 = xor_bytes(m1, sign_r1)
    m3 = rng.bytes(_MSG_BYTES)

    t1 = now
    t2 = t1 + tof
    t3 = t2 + processing_time
    t4 = t3 + tof + 2.0 * shift_m / SPEED_OF_LIGHT
    t5 = t4 + processing_time
    t6 = t5 + tof

    return RangingSession(
        verifier_id=verifier.id,
        prover_id=prover.id,
        t1=t1, t2=t2, t3=t3, t4=t4, t5=t5, t6=t6,
        processing_time=processing_time,
        m1=m1, m2=m2, m3=m3,
        c1=_mtac_code(m1), c2=_mtac_code(m2), c3=_mtac_code(m3),
        sign_r1=sign_r1,
        signatures_valid=signatures_valid,
        integrity_flag=integrity_flag,
        adversary_kind=kind,
        applied_shift_m=shift_m,
        attack_succeeded=attack_succeeded,
    )


def mtac_check(session: RangingSession, chan: ChannelModel, src: RandomSource) -> bool:
    """Arrival-code integrity: simulated bit errors within the accepted budget
    and no integrity flag raised by a detected manipulation attempt."""
    if session.integrity_flag:
        return False
    rng = src.generator()
    errors = int(rng.binomial(chan.code_bits, chan.bit_error_rate))
    return errors <= chan.max_bit_errors_accepted


class KeyDirectory:
    """In-memory stand-in for the key server plus per-verifier contact log.

    Each id maps to one live key window. An accepted ranging with a peer
    suppresses further ranging with the same id until the peer's key validity
    period has elapsed (the id rotates with the key).
    """

    def __init__(self):
        self._entities: dict[str, Entity] = {}
        self._accepted: dict[tuple[str, str], float] = {}
        self.duplicates: list[tuple[float, str, str]] = []

    def register(self, entity: Entity) -> None:
        self._entities[entity.id] = entity

    def lookup(self, entity_id: str) -> Entity:
        if entity_id not in self._entities:
            raise UnknownId(entity_id)
        return self._entities[entity_id]

    def reset_contacts(self) -> None:
        self._accepted.clear()
        self.duplicates.clear()


def data_validate(session: RangingSession, directory: KeyDirectory, now: float) -> bool:
    """Signature, key-window, and first-contact checks.

    Returns False (and logs the duplicate) for a repeat peer within its key
    validity period; the same peer becomes acceptable again once the key has
    rotated. Unknown ids raise UnknownId.
    """
    verifier = directory.lookup(session.verifier_id)
    prover = directory.lookup(session.prover_id)
    if not session.signatures_valid:
        return False
    if recover_signature(session.m1, session.m2) != session.sign_r1:
        return False
    if not (verifier.key_live_at(now) and prover.key_live_at(now)):
        return False
    key = (session.verifier_id, session.prover_id)
    last = directory._accepted.get(key)
    if last is not None and now - last < prover.key_valid_for:
        directory.duplicates.append((now, session.verifier_id, session.prover_id))
        return False
    directory._accepted[key] = now
    return True


def distance_validate(
    session: RangingSession,
    reported_a: Coordinates,
    reported_b: Coordinates,
    chan: ChannelModel,
) -> VerificationOutcome:
    """Compare the measured distance against the reported coordinates.

    v = 0 iff the absolute difference is within delta, boundary inclusive.
    """
    measured = session.measured_distance_m()
    claimed = reported_a.distance_to(reported_b)
    v = 0 if abs(measured - claimed) <= chan.delta else 1
    return VerificationOutcome(peer_id=session.prover_id, v=v, at_time=session.t1)


# -- scripted scenarios ---------------------------------------------------------

_KIND_ALIASES = {
    "none": AdversaryKind.NONE,
    "mafia": AdversaryKind.MAFIA_FRAUD,
    "mafiafraud": AdversaryKind.MAFIA_FRAUD,
    "distance": AdversaryKind.DISTANCE_FRAUD,
    "distancefraud": AdversaryKind.DISTANCE_FRAUD,
    "terrorist": AdversaryKind.TERRORIST_FRAUD,
    "terroristfraud": AdversaryKind.TERRORIST_FRAUD,
    "hijack": AdversaryKind.DISTANCE_HIJACKING,
    "distancehijacking": AdversaryKind.DISTANCE_HIJACKING,
}


class ScriptError(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


@dataclass(frozen=True)
class ScriptLine:
    time_s: float
    verifier_id: str
    prover_id: str
    adversary_kind: AdversaryKind


def parse_script(text: str) -> list[ScriptLine]:
    """Parse `time_s verifier_id prover_id adversary_kind` lines.

    Blank lines and lines starting with # are skipped.
    """
    lines: list[ScriptLine] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ScriptError(no, f"expected 4 fields, got {len(parts)}")
        try:
            time_s = float(parts[0])
        except ValueError:
            raise ScriptError(no, f"bad time {parts[0]!r}") from None
        kind = _KIND_ALIASES.get(parts[3].lower())
        if kind is None:
            raise ScriptError(no, f"unknown adversary kind {parts[3]!r}")
        lines.append(ScriptLine(time_s, parts[1], parts[2], kind))
    return lines


@dataclass(frozen=True)
class ExchangeRecord:
    """Outcome of one scripted exchange after all three checks."""

    time_s: float
    verifier_id: str
    prover_id: str
    adversary_kind: AdversaryKind
    mtac_ok: bool
    data_ok: bool
    outcome: VerificationOutcome | None
    measured_m: float
    true_m: float
    applied_shift_m: float
    discarded: str = ""


def run_script(
    script: list[ScriptLine],
    src: RandomSource,
    chan: ChannelModel | None = None,
    adv_defaults: AdversaryModel | None = None,
    entity_spacing_m: float = 80.0,
    key_valid_for: float = 600.0,
) -> list[ExchangeRecord]:
    """Drive a sequence of exchanges, auto-creating honest entities on a line.

    Entities are placed at x = spacing * (order of first appearance); honest
    entities report their true position. Each exchange derives its own random
    stream from the script position, so reruns are bit-identical.
    """
    chan = chan or ChannelModel()
    adv_defaults = adv_defaults or AdversaryModel()
    directory = KeyDirectory()
    entities: dict[str, Entity] = {}

    def ensure(entity_id: str) -> Entity:
        if entity_id not in entities:
            pos = Coordinates(entity_spacing_m * len(entities), 0.0)
            e = Entity(
                id=entity_id,
                true_position=pos,
                reported_position=pos,
                key_valid_from=0.0,
                key_valid_for=key_valid_for,
            )
            entities[entity_id] = e
            directory.register(e)
        return entities[entity_id]

    records: list[ExchangeRecord] = []
    for i, line in enumerate(script):
        verifier = ensure(line.verifier_id)
        prover = ensure(line.prover_id)
        adv = AdversaryModel(
            kind=line.adversary_kind,
            mafia_success_prob=adv_defaults.mafia_success_prob,
            subcarriers=adv_defaults.subcarriers,
            subcarrier_spacing_hz=adv_defaults.subcarrier_spacing_hz,
            clock_skew_theta_s=adv_defaults.clock_skew_theta_s,
            max_shortening_m=adv_defaults.max_shortening_m,
            distance_shift_m=adv_defaults.distance_shift_m,
        )
        session = run_exchange(verifier, prover, chan, adv, src.child(i), now=line.time_s)
        true_m = verifier.true_position.distance_to(prover.true_position)
        mtac_ok = mtac_check(session, chan, src.child(i).child(1))
        if not mtac_ok:
            records.append(ExchangeRecord(
                line.time_s, verifier.id, prover.id, line.adversary_kind,
                False, False, None, session.measured_distance_m(), true_m,
                session.applied_shift_m, discarded="mtac",
            ))
            continue
        data_ok = data_validate(session, directory, now=line.time_s)
        if not data_ok:
            reason = "duplicate" if directory.duplicates and directory.duplicates[-1][0] == line.time_s else "data"
            records.append(ExchangeRecord(
                line.time_s, verifier.id, prover.id, line.adversary_kind,
                True, False, None, session.measured_distance_m(), true_m,
                session.applied_shift_m, discarded=reason,
            ))
            continue
        outcome = distance_validate(
            session, verifier.reported_position, prover.reported_position, chan
        )
        records.append(ExchangeRecord(
            line.time_s, verifier.id, prover.id, line.adversary_kind,
            True, True, outcome, session.measured_distance_m(), true_m,
            session.applied_shift_m,
        ))
    return records
