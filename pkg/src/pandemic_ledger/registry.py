"""Event-sourced citizen registry: identity, colour band, travel, tokens mirror.

All state here is a pure function of the chain's event stream. The same
``apply`` path drives both incremental maintenance (as the authority
appends) and full replay from genesis, so the two can never diverge.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from datetime import date
from enum import IntEnum
from typing import Any

from .errors import (
    DuplicatePassport,
    IllegalTransition,
    InvalidAirportCode,
    LedgerError,
    NotFound,
    ReplayConflict,
    UnknownUid,
    ValidationError,
)
from .events import AIRPORT_RE, Event, EventKind

MAX_INFO_BYTES = 4096

# 60 random bits -> exactly 12 base32 characters.
_UID_RANDOM_BITS = 60
_BASE32_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"


class ColourBand(IntEnum):
    GREEN = 0
    AMBER = 1
    RED = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "ColourBand":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValidationError("band", f"unknown colour band: {label!r}") from None


# Green->Amber: suspicion raised or test ordered; Amber->Red: positive result;
# Amber->Green: negative result; Red->Amber: recovery retest ordered.
ALLOWED_TRANSITIONS = frozenset(
    {
        (ColourBand.GREEN, ColourBand.AMBER),
        (ColourBand.AMBER, ColourBand.RED),
        (ColourBand.AMBER, ColourBand.GREEN),
        (ColourBand.RED, ColourBand.AMBER),
    }
)


def can_transition(current: ColourBand, new: ColourBand, confirmed_positive: bool = False) -> bool:
    if (current, new) in ALLOWED_TRANSITIONS:
        return True
    # Green->Red needs an explicit confirmed-positive override.
    return confirmed_positive and current is ColourBand.GREEN and new is ColourBand.RED


def generate_uid(prefix: str = "IN") -> str:
    bits = secrets.randbits(_UID_RANDOM_BITS)
    chars = []
    for _ in range(12):
        chars.append(_BASE32_ALPHABET[bits & 0x1F])
        bits >>= 5
    return f"{prefix}-{''.join(reversed(chars))}"


@dataclass(frozen=True)
class TravelVisit:
    airport_code: str
    visit_date: date
    note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "airport": self.airport_code,
            "date": self.visit_date.isoformat(),
            "note": self.note,
        }


def validate_airport_code(code: str) -> None:
    if not AIRPORT_RE.match(code or ""):
        raise InvalidAirportCode(f"airport code must match [A-Z]{{3}}: {code!r}")


@dataclass
class UserRecord:
    uid: str
    passport_number: str | None
    band: ColourBand
    band_reason: str
    token_balance: int
    current_location: str
    additional_info: str
    travel_history: list[TravelVisit] = field(default_factory=list)
    registered_at: int = 0
    updated_at: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "passport_number": self.passport_number,
            "band": self.band.label,
            "band_reason": self.band_reason,
            "token_balance": self.token_balance,
            "current_location": self.current_location,
            "additional_info": self.additional_info,
            "travel_history": [v.to_dict() for v in self.travel_history],
            "registered_at": self.registered_at,
            "updated_at": self.updated_at,
        }


class RegistryState:
    """In-memory projection of all user-facing events."""

    def __init__(self):
        self.users: dict[str, UserRecord] = {}
        self.passports: dict[str, str] = {}

    # --- lookups ---------------------------------------------------------

    def get(self, uid: str) -> UserRecord:
        try:
            return self.users[uid]
        except KeyError:
            raise UnknownUid(uid) from None

    def by_passport(self, passport: str) -> UserRecord | None:
        uid = self.passports.get(passport)
        return self.users.get(uid) if uid is not None else None

    def find(self, query: str) -> UserRecord:
        """Look a user up by uid first, then by passport number."""
        record = self.users.get(query) or self.by_passport(query)
        if record is None:
            raise NotFound(f"no user matches {query!r}")
        return record

    # --- event application -------------------------------------------------

    def apply(self, event: Event) -> None:
        """Apply one chain event; invariant violations raise ReplayConflict."""
        try:
            self._apply(event)
        except ReplayConflict:
            raise
        except LedgerError as exc:
            raise ReplayConflict(event.event_id.hex(), exc.message) from exc

    def _apply(self, event: Event) -> None:
        kind = event.kind
        if kind in (EventKind.CONFIG, EventKind.HOTSPOT_INGEST):
            return
        uid = event.subject_uid
        assert uid is not None  # enforced by event schema
        p = event.payload

        if kind is EventKind.REGISTER:
            if uid in self.users:
                raise ReplayConflict(event.event_id.hex(), f"uid {uid} already registered")
            passport = p.get("passport")
            if passport is not None and passport in self.passports:
                raise DuplicatePassport(passport, self.passports[passport])
            self.users[uid] = UserRecord(
                uid=uid,
                passport_number=passport,
                band=ColourBand.GREEN,
                band_reason="",
                token_balance=0,
                current_location=p.get("location", ""),
                additional_info=p.get("info", ""),
                registered_at=event.timestamp,
                updated_at=event.timestamp,
            )
            if passport is not None:
                self.passports[passport] = uid
            return

        record = self.get(uid)
        if kind is EventKind.BAND_UPDATE:
            new_band = ColourBand(p["band"])
            if not can_transition(record.band, new_band, p.get("confirmed_positive", False)):
                raise IllegalTransition(record.band.label, new_band.label)
            record.band = new_band
            record.band_reason = p.get("reason", "")
        elif kind is EventKind.LOCATION_UPDATE:
            record.current_location = p["location"]
        elif kind is EventKind.INFO_UPDATE:
            record.additional_info = p["text"]
        elif kind is EventKind.TRAVEL_LOG:
            visit = TravelVisit(
                airport_code=p["airport"],
                visit_date=date.fromisoformat(p["date"]),
                note=p.get("note"),
            )
            record.travel_history.append(visit)
            record.travel_history.sort(key=lambda v: v.visit_date)
        elif kind is EventKind.TOKEN_ISSUE:
            record.token_balance += p["amount"]
        elif kind is EventKind.TOKEN_REDEEM:
            if record.token_balance < p["cost"]:
                raise ReplayConflict(
                    event.event_id.hex(),
                    f"redeem of {p['cost']} exceeds balance {record.token_balance}",
                )
            record.token_balance -= p["cost"]
        else:  # pragma: no cover - all kinds handled above
            raise ReplayConflict(event.event_id.hex(), f"unhandled kind {kind.label}")
        record.updated_at = event.timestamp

    # --- snapshots -----------------------------------------------------------

    def snapshot(self) -> dict[str, Any]:
        """Canonical serializable view of the whole registry."""
        return {uid: self.users[uid].to_dict() for uid in sorted(self.users)}
