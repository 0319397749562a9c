"""Domain error hierarchy.

Every error carries a stable machine-readable ``code`` (surfaced in the
HTTP error envelope and CLI output) and the HTTP status it maps to.
The full code table is documented in docs/api.md.
"""

from __future__ import annotations


class LedgerError(Exception):
    """Base class for all domain errors."""

    code = "INTERNAL"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# --- ledger / block store ---------------------------------------------------

class NotAuthority(LedgerError):
    code = "NOT_AUTHORITY"
    http_status = 403


class EmptyBatch(LedgerError):
    code = "EMPTY_BATCH"
    http_status = 400


class BatchTooLarge(LedgerError):
    code = "BATCH_TOO_LARGE"
    http_status = 400


class InvalidEvent(LedgerError):
    code = "INVALID_EVENT"
    http_status = 400

    def __init__(self, kind: str, reason: str):
        super().__init__(f"invalid {kind} event: {reason}")
        self.kind = kind
        self.reason = reason


class StorageFailure(LedgerError):
    code = "STORAGE_FAILURE"
    http_status = 500


class RangeOutOfBounds(LedgerError):
    code = "RANGE_OUT_OF_BOUNDS"
    http_status = 400


class NotFound(LedgerError):
    code = "NOT_FOUND"
    http_status = 404


class CorruptStore(LedgerError):
    code = "CORRUPT_STORE"
    http_status = 500


# --- registry ----------------------------------------------------------------

class UnknownUid(LedgerError):
    code = "UNKNOWN_UID"
    http_status = 404

    def __init__(self, uid: str):
        super().__init__(f"unknown uid: {uid}")
        self.uid = uid


class DuplicatePassport(LedgerError):
    code = "DUPLICATE_PASSPORT"
    http_status = 409

    def __init__(self, passport: str, existing_uid: str):
        super().__init__(f"passport already registered to {existing_uid}")
        self.passport = passport
        self.existing_uid = existing_uid


class IllegalTransition(LedgerError):
    code = "ILLEGAL_TRANSITION"
    http_status = 409

    def __init__(self, from_band: str, to_band: str):
        super().__init__(f"illegal band transition {from_band} -> {to_band}")
        self.from_band = from_band
        self.to_band = to_band


class InvalidAirportCode(LedgerError):
    code = "INVALID_AIRPORT_CODE"
    http_status = 400


class FutureDate(LedgerError):
    code = "FUTURE_DATE"
    http_status = 400


class TooLong(LedgerError):
    code = "TOO_LONG"
    http_status = 400


class ChainInvalid(LedgerError):
    code = "CHAIN_INVALID"
    http_status = 500


class ReplayConflict(LedgerError):
    code = "REPLAY_CONFLICT"
    http_status = 500

    def __init__(self, event_id: str, reason: str):
        super().__init__(f"event {event_id} conflicts during replay: {reason}")
        self.event_id = event_id
        self.reason = reason


# --- exposure ----------------------------------------------------------------

class InvalidReport(LedgerError):
    code = "INVALID_REPORT"
    http_status = 400


# --- incentives ---------------------------------------------------------------

class UnknownReason(LedgerError):
    code = "UNKNOWN_REASON"
    http_status = 400


class UnknownBenefit(LedgerError):
    code = "UNKNOWN_BENEFIT"
    http_status = 404


class BenefitDisabled(LedgerError):
    code = "BENEFIT_DISABLED"
    http_status = 409


class InsufficientBalance(LedgerError):
    code = "INSUFFICIENT_BALANCE"
    http_status = 409

    def __init__(self, balance: int, cost: int):
        super().__init__(f"balance {balance} below cost {cost}")
        self.balance = balance
        self.cost = cost


class ParseError(LedgerError):
    code = "PARSE_ERROR"
    http_status = 400


class DuplicateBenefitId(LedgerError):
    code = "DUPLICATE_BENEFIT_ID"
    http_status = 400


class NonPositiveCost(LedgerError):
    code = "NON_POSITIVE_COST"
    http_status = 400


# --- node / API ----------------------------------------------------------------

class ReadOnlyReplica(LedgerError):
    code = "READ_ONLY_REPLICA"
    http_status = 403


class ValidationError(LedgerError):
    code = "VALIDATION_ERROR"
    http_status = 400

    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class Unauthorized(LedgerError):
    code = "UNAUTHORIZED"
    http_status = 401


class PeerUnreachable(LedgerError):
    code = "PEER_UNREACHABLE"
    http_status = 502


class InvalidBlock(LedgerError):
    code = "INVALID_BLOCK"
    http_status = 502

    def __init__(self, height: int, reason: str):
        super().__init__(f"invalid block at height {height}: {reason}")
        self.height = height
        self.reason = reason


class BindFailure(LedgerError):
    code = "BIND_FAILURE"
    http_status = 500
