"""Core application service: chain-backed registry, exposure, and tokens.

Every mutating operation validates against current state, appends one
block holding the operation's events, then applies those events to the
in-memory projections. Projections are therefore always reachable by
replaying the chain, and multi-event operations (the volunteer flow) are
atomic because their events share a block.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Iterable, Sequence

from .blocks import MAX_BATCH, Block
from .errors import (
    ChainInvalid,
    DuplicatePassport,
    FutureDate,
    IllegalTransition,
    LedgerError,
    TooLong,
    ValidationError,
)
from .events import Event, EventKind, new_event
from .exposure import (
    HotspotIndex,
    HotspotReport,
    SuspicionFinding,
    SweepSummary,
    find_suspicions,
    parse_hotspot_line,
    validate_report,
)
from .incentives import (
    DEFAULT_REASON_CODES,
    RedemptionPolicy,
    RedemptionReceipt,
    TokenAccount,
    TokenLedgerState,
    check_reason,
    check_redeemable,
    parse_policy,
)
from .ledger import ChainStore
from .registry import (
    ColourBand,
    MAX_INFO_BYTES,
    RegistryState,
    TravelVisit,
    UserRecord,
    can_transition,
    generate_uid,
    validate_airport_code,
)

EXPOSURE_FLAG_REASON = "airport exposure"


@dataclass(frozen=True)
class VerifyResponse:
    """Minimal-disclosure answer for service gatekeepers.

    Deliberately excludes passport number, token balance, and free-text
    info; to_dict() is the exact wire field set.
    """

    uid: str
    band: ColourBand
    band_reason: str
    as_of_block: int
    chain_head_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "band": self.band.label,
            "band_reason": self.band_reason,
            "as_of_block": self.as_of_block,
            "chain_head_hash": self.chain_head_hash,
        }


def _utc_today():
    return datetime.now(timezone.utc).date()


def _normalize_passport(passport: str | None) -> str | None:
    if passport is None:
        return None
    passport = passport.strip()
    return passport or None


class HealthLedgerService:
    """Registry, exposure, and incentive operations over one chain store."""

    def __init__(
        self,
        store: ChainStore,
        uid_prefix: str = "IN",
        reason_codes: Sequence[str] = DEFAULT_REASON_CODES,
        policy: RedemptionPolicy | None = None,
    ):
        self.store = store
        self.uid_prefix = uid_prefix
        self.reason_codes = frozenset(reason_codes)
        self.policy = policy or RedemptionPolicy()
        self.registry = RegistryState()
        self.hotspots = HotspotIndex()
        self.tokens = TokenLedgerState()
        self.last_policy_digest: str | None = None
        self._lock = threading.RLock()
        for block in store.iter_blocks():
            self._apply_block(block)

    # --- projection plumbing ---------------------------------------------------

    def _apply_block(self, block: Block) -> None:
        for event in block.events:
            self._apply_event(event)

    def _apply_event(self, event: Event) -> None:
        self.registry.apply(event)
        self.hotspots.apply(event)
        self.tokens.apply(event)
        if event.kind is EventKind.CONFIG and "policy_digest" in event.payload:
            self.last_policy_digest = event.payload["policy_digest"]

    def _commit(self, events: list[Event]) -> Block:
        block = self.store.append_events(events)
        self._apply_block(block)
        return block

    def _fresh_uid(self) -> str:
        while True:
            uid = generate_uid(self.uid_prefix)
            if uid not in self.registry.users:
                return uid

    # --- bootstrap ----------------------------------------------------------------

    def initialize_genesis(self, entries: dict[str, str]) -> Block | None:
        """Append the height-0 configuration block on a fresh authority store."""
        with self._lock:
            if self.store.head_height >= 0:
                return None
            event = new_event(EventKind.CONFIG, None, dict(entries))
            return self._commit([event])

    # --- registry operations ----------------------------------------------------------

    def register_user(
        self, passport: str | None = None, location: str = "", info: str = ""
    ) -> tuple[UserRecord, int]:
        with self._lock:
            passport = _normalize_passport(passport)
            if passport is not None:
                existing = self.registry.by_passport(passport)
                if existing is not None:
                    raise DuplicatePassport(passport, existing.uid)
            uid = self._fresh_uid()
            event = new_event(
                EventKind.REGISTER,
                uid,
                {"passport": passport, "location": location, "info": info},
            )
            block = self._commit([event])
            return self.registry.get(uid), block.height

    def update_band(
        self,
        uid: str,
        new_band: ColourBand,
        reason: str,
        confirmed_positive: bool = False,
        triggered_by: Iterable[str] = (),
    ) -> tuple[UserRecord, int]:
        with self._lock:
            record = self.registry.get(uid)
            if not can_transition(record.band, new_band, confirmed_positive):
                raise IllegalTransition(record.band.label, new_band.label)
            event = new_event(
                EventKind.BAND_UPDATE,
                uid,
                {
                    "band": int(new_band),
                    "reason": reason,
                    "confirmed_positive": bool(confirmed_positive),
                    "triggered_by": list(dict.fromkeys(triggered_by)),
                },
            )
            block = self._commit([event])
            return record, block.height

    def log_travel(self, uid: str, visit: TravelVisit) -> tuple[UserRecord, int]:
        with self._lock:
            record = self.registry.get(uid)
            validate_airport_code(visit.airport_code)
            if visit.visit_date > _utc_today():
                raise FutureDate(f"visit date {visit.visit_date} is in the future")
            event = new_event(
                EventKind.TRAVEL_LOG,
                uid,
                {
                    "airport": visit.airport_code,
                    "date": visit.visit_date.isoformat(),
                    "note": visit.note,
                },
            )
            block = self._commit([event])
            return record, block.height

    def update_location(self, uid: str, location: str) -> tuple[UserRecord, int]:
        with self._lock:
            record = self.registry.get(uid)
            event = new_event(EventKind.LOCATION_UPDATE, uid, {"location": location})
            block = self._commit([event])
            return record, block.height

    def update_info(self, uid: str, text: str) -> tuple[UserRecord, int]:
        with self._lock:
            record = self.registry.get(uid)
            if len(text.encode("utf-8")) > MAX_INFO_BYTES:
                raise TooLong(f"info exceeds {MAX_INFO_BYTES} bytes")
            event = new_event(EventKind.INFO_UPDATE, uid, {"text": text})
            block = self._commit([event])
            return record, block.height

    def find_user(self, query: str) -> UserRecord:
        with self._lock:
            return self.registry.find(query)

    def verify_user(self, query: str) -> VerifyResponse:
        with self._lock:
            record = self.registry.find(query)
            head = self.store.head
            return VerifyResponse(
                uid=record.uid,
                band=record.band,
                band_reason=record.band_reason,
                as_of_block=head.height if head else -1,
                chain_head_hash=head.block_hash.hex() if head else "",
            )

    # --- exposure operations -------------------------------------------------------------

    def ingest_hotspot(self, report: HotspotReport) -> tuple[str, int]:
        """Returns (ingest event id hex, block height)."""
        with self._lock:
            validate_report(report)
            event = new_event(
                EventKind.HOTSPOT_INGEST,
                None,
                {
                    "airport": report.airport_code,
                    "date": report.case_date.isoformat(),
                    "count": report.case_count,
                    "source": report.source,
                },
            )
            block = self._commit([event])
            return event.event_id.hex(), block.height

    def import_hotspots(self, text: str) -> dict[str, Any]:
        """Bulk-ingest the newline-delimited hotspot format.

        Bad lines are reported individually and do not abort the rest;
        valid reports are appended in file order, batched per block.
        """
        reports: list[tuple[int, HotspotReport]] = []
        errors: list[dict[str, Any]] = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                reports.append((line_no, parse_hotspot_line(stripped)))
            except LedgerError as exc:
                errors.append({"line": line_no, "error": exc.message})
        heights: list[int] = []
        with self._lock:
            timestamp = int(time.time())
            for start in range(0, len(reports), MAX_BATCH):
                chunk = reports[start : start + MAX_BATCH]
                events = [
                    new_event(
                        EventKind.HOTSPOT_INGEST,
                        None,
                        {
                            "airport": r.airport_code,
                            "date": r.case_date.isoformat(),
                            "count": r.case_count,
                            "source": r.source,
                        },
                        timestamp=timestamp,
                    )
                    for _, r in chunk
                ]
                block = self._commit(events)
                heights.append(block.height)
        return {"ingested": len(reports), "errors": errors, "block_heights": heights}

    def evaluate_user(self, uid: str) -> list[SuspicionFinding]:
        with self._lock:
            record = self.registry.get(uid)
            return find_suspicions(uid, record.travel_history, self.hotspots)

    def sweep_and_flag(self) -> SweepSummary:
        """Flag every Green user with at least one finding; Green->Amber only."""
        with self._lock:
            evaluated = 0
            newly_flagged: list[str] = []
            for uid in list(self.registry.users):
                record = self.registry.users[uid]
                evaluated += 1
                if record.band is not ColourBand.GREEN:
                    continue
                findings = find_suspicions(uid, record.travel_history, self.hotspots)
                if not findings:
                    continue
                self.update_band(
                    uid,
                    ColourBand.AMBER,
                    reason=EXPOSURE_FLAG_REASON,
                    triggered_by=[f.report_event_id for f in findings],
                )
                newly_flagged.append(uid)
            return SweepSummary(evaluated=evaluated, newly_flagged=newly_flagged)

    # --- incentive operations ---------------------------------------------------------------

    def issue_tokens(self, uid: str, reason_code: str, amount: int = 1) -> tuple[TokenAccount, int]:
        with self._lock:
            self.registry.get(uid)
            check_reason(reason_code, self.reason_codes)
            if amount < 1:
                raise ValidationError("amount", "must be a positive integer")
            event = new_event(EventKind.TOKEN_ISSUE, uid, {"reason": reason_code, "amount": amount})
            block = self._commit([event])
            account = self.tokens.account(uid)
            assert account is not None
            return account, block.height

    def redeem_tokens(self, uid: str, benefit_id: str) -> RedemptionReceipt:
        with self._lock:
            self.registry.get(uid)
            account = self.tokens.account(uid)
            assert account is not None
            benefit = check_redeemable(self.policy, benefit_id, account.balance)
            event = new_event(
                EventKind.TOKEN_REDEEM, uid, {"benefit_id": benefit_id, "cost": benefit.cost}
            )
            block = self._commit([event])
            return RedemptionReceipt(
                uid=uid,
                benefit_id=benefit_id,
                cost=benefit.cost,
                remaining_balance=account.balance,
                block_height=block.height,
            )

    def run_volunteer_flow(
        self,
        passport: str | None = None,
        uid: str | None = None,
        reason_code: str = "VoluntaryTest",
    ) -> tuple[UserRecord, TokenAccount, int]:
        """Resolve-or-create the volunteer, then issue one token, atomically.

        Both events (when a registration is needed) land in the same block.
        """
        with self._lock:
            check_reason(reason_code, self.reason_codes)
            timestamp = int(time.time())
            events: list[Event] = []
            if uid is not None:
                resolved_uid = self.registry.get(uid).uid
            else:
                passport = _normalize_passport(passport)
                existing = self.registry.by_passport(passport) if passport else None
                if existing is not None:
                    resolved_uid = existing.uid
                else:
                    resolved_uid = self._fresh_uid()
                    events.append(
                        new_event(
                            EventKind.REGISTER,
                            resolved_uid,
                            {"passport": passport, "location": "", "info": ""},
                            timestamp=timestamp,
                        )
                    )
            events.append(
                new_event(
                    EventKind.TOKEN_ISSUE,
                    resolved_uid,
                    {"reason": reason_code, "amount": 1},
                    timestamp=timestamp,
                )
            )
            block = self._commit(events)
            account = self.tokens.account(resolved_uid)
            assert account is not None
            return self.registry.get(resolved_uid), account, block.height

    def activate_policy(self, raw: bytes, record_on_chain: bool = True) -> RedemptionPolicy:
        """Parse and activate a policy document; its digest goes on chain once."""
        policy = parse_policy(raw)
        with self._lock:
            self.policy = policy
            if record_on_chain and policy.digest != self.last_policy_digest:
                event = new_event(EventKind.CONFIG, None, {"policy_digest": policy.digest})
                self._commit([event])
        return policy

    # --- replication -------------------------------------------------------------------------

    def apply_frame(self, frame: bytes) -> Block:
        """Verify, persist, and project a block signed by the authority."""
        with self._lock:
            block = self.store.append_frame(frame)
            self._apply_block(block)
            return block

    # --- replay and snapshots -----------------------------------------------------------------

    def replay_from_ledger(self) -> tuple[RegistryState, HotspotIndex, TokenLedgerState]:
        """Rebuild fresh projections from the chain after verifying it."""
        if self.store.head_height >= 0:
            report = self.store.verify_chain()
            if not report.ok:
                raise ChainInvalid(
                    f"{report.failure} at height {report.failure_height}: {report.detail}"
                )
        return replay_projections(self.store)

    def state_snapshot(self) -> dict[str, Any]:
        with self._lock:
            return {
                "users": self.registry.snapshot(),
                "accounts": self.tokens.snapshot(),
                "hotspots": self.hotspots.snapshot(),
            }


def replay_projections(store: ChainStore) -> tuple[RegistryState, HotspotIndex, TokenLedgerState]:
    """Pure replay of a chain into fresh projections (no verification)."""
    registry = RegistryState()
    hotspots = HotspotIndex()
    tokens = TokenLedgerState()
    for block in store.iter_blocks():
        for event in block.events:
            registry.apply(event)
            hotspots.apply(event)
            tokens.apply(event)
    return registry, hotspots, tokens


def snapshot_bytes(
    registry: RegistryState, hotspots: HotspotIndex, tokens: TokenLedgerState
) -> bytes:
    """Canonical serialization of full system state, for equality checks."""
    state = {
        "users": registry.snapshot(),
        "accounts": tokens.snapshot(),
        "hotspots": hotspots.snapshot(),
    }
    return json.dumps(state, sort_keys=True, separators=(",", ":")).encode("utf-8")
