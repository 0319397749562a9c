"""Typed chain events and their canonical payload codecs.

Every state change in the system is an Event appended to the block store.
Payloads are plain dicts validated against a per-kind schema; the codec
fixes field order so each payload has exactly one byte encoding.
"""

from __future__ import annotations

import re
import secrets
import time
from dataclasses import dataclass, field
from datetime import date
from enum import IntEnum
from typing import Any, Callable

from .errors import InvalidEvent
from .wire import Reader, Writer, WireError

EVENT_ID_LEN = 16
AIRPORT_RE = re.compile(r"^[A-Z]{3}$")


class EventKind(IntEnum):
    CONFIG = 0
    REGISTER = 1
    BAND_UPDATE = 2
    LOCATION_UPDATE = 3
    TRAVEL_LOG = 4
    TOKEN_ISSUE = 5
    TOKEN_REDEEM = 6
    HOTSPOT_INGEST = 7
    INFO_UPDATE = 8

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]


_KIND_LABELS = {
    EventKind.CONFIG: "Config",
    EventKind.REGISTER: "Register",
    EventKind.BAND_UPDATE: "BandUpdate",
    EventKind.LOCATION_UPDATE: "LocationUpdate",
    EventKind.TRAVEL_LOG: "TravelLog",
    EventKind.TOKEN_ISSUE: "TokenIssue",
    EventKind.TOKEN_REDEEM: "TokenRedeem",
    EventKind.HOTSPOT_INGEST: "HotspotIngest",
    EventKind.INFO_UPDATE: "InfoUpdate",
}
_LABEL_KINDS = {v: k for k, v in _KIND_LABELS.items()}

# Kinds that carry no subject uid.
_SUBJECTLESS = (EventKind.CONFIG, EventKind.HOTSPOT_INGEST)


def kind_from_label(label: str) -> EventKind:
    try:
        return _LABEL_KINDS[label]
    except KeyError:
        raise InvalidEvent(label, "unknown event kind") from None


@dataclass(frozen=True)
class Event:
    kind: EventKind
    event_id: bytes
    subject_uid: str | None
    timestamp: int
    payload: dict[str, Any] = field(default_factory=dict)

    @property
    def event_id_hex(self) -> str:
        return self.event_id.hex()

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.label,
            "event_id": self.event_id.hex(),
            "subject_uid": self.subject_uid,
            "timestamp": self.timestamp,
            "payload": dict(self.payload),
        }


def new_event(
    kind: EventKind,
    subject_uid: str | None,
    payload: dict[str, Any],
    timestamp: int | None = None,
) -> Event:
    return Event(
        kind=kind,
        event_id=secrets.token_bytes(EVENT_ID_LEN),
        subject_uid=subject_uid,
        timestamp=int(time.time()) if timestamp is None else timestamp,
        payload=payload,
    )


# --- payload codecs ----------------------------------------------------------
#
# One (encode, decode) pair per kind. Encoders write fields in the documented
# order; decoders reverse exactly and reject trailing bytes at the frame level.

def _enc_config(w: Writer, p: dict) -> None:
    items = sorted(p.items())
    w.u32(len(items))
    for key, value in items:
        w.string(key)
        w.string(value)


def _dec_config(r: Reader) -> dict:
    count = r.u32()
    out = {}
    for _ in range(count):
        key = r.string()
        out[key] = r.string()
    return out


def _enc_register(w: Writer, p: dict) -> None:
    w.opt_string(p.get("passport"))
    w.string(p.get("location", ""))
    w.string(p.get("info", ""))


def _dec_register(r: Reader) -> dict:
    return {"passport": r.opt_string(), "location": r.string(), "info": r.string()}


def _enc_band(w: Writer, p: dict) -> None:
    w.u8(p["band"])
    w.string(p.get("reason", ""))
    w.u8(1 if p.get("confirmed_positive") else 0)
    triggers = p.get("triggered_by", [])
    w.u32(len(triggers))
    for hex_id in triggers:
        w.raw(bytes.fromhex(hex_id))


def _dec_band(r: Reader) -> dict:
    band = r.u8()
    reason = r.string()
    flag = r.u8()
    if flag > 1:
        raise WireError(f"bad bool flag: {flag}")
    triggers = [r.raw(EVENT_ID_LEN).hex() for _ in range(r.u32())]
    return {
        "band": band,
        "reason": reason,
        "confirmed_positive": bool(flag),
        "triggered_by": triggers,
    }


def _enc_location(w: Writer, p: dict) -> None:
    w.string(p["location"])


def _dec_location(r: Reader) -> dict:
    return {"location": r.string()}


def _enc_travel(w: Writer, p: dict) -> None:
    w.string(p["airport"])
    w.string(p["date"])
    w.opt_string(p.get("note"))


def _dec_travel(r: Reader) -> dict:
    return {"airport": r.string(), "date": r.string(), "note": r.opt_string()}


def _enc_issue(w: Writer, p: dict) -> None:
    w.string(p["reason"])
    w.u64(p["amount"])


def _dec_issue(r: Reader) -> dict:
    return {"reason": r.string(), "amount": r.u64()}


def _enc_redeem(w: Writer, p: dict) -> None:
    w.string(p["benefit_id"])
    w.u64(p["cost"])


def _dec_redeem(r: Reader) -> dict:
    return {"benefit_id": r.string(), "cost": r.u64()}


def _enc_hotspot(w: Writer, p: dict) -> None:
    w.string(p["airport"])
    w.string(p["date"])
    w.u64(p["count"])
    w.string(p.get("source", ""))


def _dec_hotspot(r: Reader) -> dict:
    return {"airport": r.string(), "date": r.string(), "count": r.u64(), "source": r.string()}


def _enc_info(w: Writer, p: dict) -> None:
    w.string(p["text"])


def _dec_info(r: Reader) -> dict:
    return {"text": r.string()}


_CODECS: dict[EventKind, tuple[Callable, Callable]] = {
    EventKind.CONFIG: (_enc_config, _dec_config),
    EventKind.REGISTER: (_enc_register, _dec_register),
    EventKind.BAND_UPDATE: (_enc_band, _dec_band),
    EventKind.LOCATION_UPDATE: (_enc_location, _dec_location),
    EventKind.TRAVEL_LOG: (_enc_travel, _dec_travel),
    EventKind.TOKEN_ISSUE: (_enc_issue, _dec_issue),
    EventKind.TOKEN_REDEEM: (_enc_redeem, _dec_redeem),
    EventKind.HOTSPOT_INGEST: (_enc_hotspot, _dec_hotspot),
    EventKind.INFO_UPDATE: (_enc_info, _dec_info),
}


def encode_event(event: Event) -> bytes:
    w = Writer()
    w.u8(int(event.kind))
    if len(event.event_id) != EVENT_ID_LEN:
        raise WireError("event_id must be 16 bytes")
    w.raw(event.event_id)
    w.opt_string(event.subject_uid)
    w.u64(event.timestamp)
    pw = Writer()
    _CODECS[event.kind][0](pw, event.payload)
    w.bytes_(pw.getvalue())
    return w.getvalue()


def decode_event(buf: bytes) -> Event:
    r = Reader(buf)
    raw_kind = r.u8()
    try:
        kind = EventKind(raw_kind)
    except ValueError:
        raise WireError(f"unknown event kind: {raw_kind}") from None
    event_id = r.raw(EVENT_ID_LEN)
    subject = r.opt_string()
    timestamp = r.u64()
    payload_bytes = r.bytes_()
    r.expect_eof()
    pr = Reader(payload_bytes)
    payload = _CODECS[kind][1](pr)
    pr.expect_eof()
    return Event(kind=kind, event_id=event_id, subject_uid=subject, timestamp=timestamp, payload=payload)


# --- schema validation --------------------------------------------------------

def _require(cond: bool, kind: EventKind, reason: str) -> None:
    if not cond:
        raise InvalidEvent(kind.label, reason)


def _check_date(value: Any, kind: EventKind, field_name: str) -> None:
    _require(isinstance(value, str), kind, f"{field_name} must be an ISO date string")
    try:
        date.fromisoformat(value)
    except ValueError:
        raise InvalidEvent(kind.label, f"{field_name} is not a valid date: {value!r}") from None


def validate_event(event: Event, check_roundtrip: bool = True) -> None:
    """Check structural and schema invariants; raises InvalidEvent.

    check_roundtrip=False skips the encode/decode identity check; used on
    events that were just decoded from canonical bytes, where the round
    trip is a tautology.
    """
    kind = event.kind
    _require(len(event.event_id) == EVENT_ID_LEN, kind, "event_id must be 16 bytes")
    _require(event.timestamp >= 0, kind, "timestamp must be non-negative")
    if kind in _SUBJECTLESS:
        _require(event.subject_uid is None, kind, "subject_uid must be absent")
    else:
        _require(bool(event.subject_uid), kind, "subject_uid required")

    p = event.payload
    if kind is EventKind.CONFIG:
        _require(all(isinstance(k, str) and isinstance(v, str) for k, v in p.items()),
                 kind, "entries must be string pairs")
    elif kind is EventKind.REGISTER:
        passport = p.get("passport")
        _require(passport is None or isinstance(passport, str), kind, "passport must be a string")
        _require(passport is None or passport == passport.strip(), kind,
                 "passport must be trimmed")
        _require(passport != "", kind, "blank passport must be absent, not empty")
        _require(isinstance(p.get("location", ""), str), kind, "location must be a string")
        _require(isinstance(p.get("info", ""), str), kind, "info must be a string")
    elif kind is EventKind.BAND_UPDATE:
        _require(p.get("band") in (0, 1, 2), kind, "band must be 0, 1 or 2")
        _require(isinstance(p.get("reason", ""), str), kind, "reason must be a string")
        for hex_id in p.get("triggered_by", []):
            _require(isinstance(hex_id, str) and len(hex_id) == EVENT_ID_LEN * 2,
                     kind, "trigger ids must be 32 hex chars")
            try:
                bytes.fromhex(hex_id)
            except ValueError:
                raise InvalidEvent(kind.label, f"bad trigger id: {hex_id!r}") from None
    elif kind is EventKind.LOCATION_UPDATE:
        _require(isinstance(p.get("location"), str), kind, "location required")
    elif kind is EventKind.TRAVEL_LOG:
        airport = p.get("airport")
        _require(isinstance(airport, str) and bool(AIRPORT_RE.match(airport)),
                 kind, f"airport must match [A-Z]{{3}}: {airport!r}")
        _check_date(p.get("date"), kind, "date")
        note = p.get("note")
        _require(note is None or isinstance(note, str), kind, "note must be a string")
    elif kind is EventKind.TOKEN_ISSUE:
        _require(isinstance(p.get("reason"), str) and p["reason"] != "", kind, "reason required")
        _require(isinstance(p.get("amount"), int) and p["amount"] >= 1, kind, "amount must be >= 1")
    elif kind is EventKind.TOKEN_REDEEM:
        _require(isinstance(p.get("benefit_id"), str) and p["benefit_id"] != "",
                 kind, "benefit_id required")
        _require(isinstance(p.get("cost"), int) and p["cost"] >= 1, kind, "cost must be >= 1")
    elif kind is EventKind.HOTSPOT_INGEST:
        airport = p.get("airport")
        _require(isinstance(airport, str) and bool(AIRPORT_RE.match(airport)),
                 kind, f"airport must match [A-Z]{{3}}: {airport!r}")
        _check_date(p.get("date"), kind, "date")
        _require(isinstance(p.get("count"), int) and p["count"] >= 1, kind, "count must be >= 1")
        _require(isinstance(p.get("source", ""), str), kind, "source must be a string")
    elif kind is EventKind.INFO_UPDATE:
        _require(isinstance(p.get("text"), str), kind, "text required")

    # The canonical form must round-trip to an identical event; this rejects
    # stray payload keys and values the codec cannot represent exactly.
    if check_roundtrip:
        try:
            if decode_event(encode_event(event)) != event:
                raise InvalidEvent(kind.label, "payload is not in canonical form")
        except WireError as exc:
            raise InvalidEvent(kind.label, f"not encodable: {exc}") from None
