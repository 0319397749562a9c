"""Incentive tokens: authority-issued credits and policy-governed redemption.

Balances are a projection of TokenIssue/TokenRedeem chain events, so the
conservation identity (sum issued - sum redeemed == sum balances) is
checkable by replay. Redemption rules come from a government-editable
policy file, one benefit per line: ``benefit_id|cost|enabled(0/1)|description``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

from .errors import (
    BenefitDisabled,
    DuplicateBenefitId,
    InsufficientBalance,
    NonPositiveCost,
    ParseError,
    ReplayConflict,
    UnknownBenefit,
    UnknownReason,
)
from .events import Event, EventKind

# Reason codes accepted out of the box; deployments may add more via config.
DEFAULT_REASON_CODES = ("VoluntaryTest", "SelfQuarantine")


@dataclass(frozen=True)
class IncentiveReason:
    code: str
    description: str = ""


@dataclass(frozen=True)
class Benefit:
    benefit_id: str
    cost: int
    description: str = ""
    enabled: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "benefit_id": self.benefit_id,
            "cost": self.cost,
            "description": self.description,
            "enabled": self.enabled,
        }


@dataclass(frozen=True)
class RedemptionPolicy:
    benefits: dict[str, Benefit] = field(default_factory=dict)
    digest: str = ""  # SHA-256 hex of the exact policy file bytes

    def benefit(self, benefit_id: str) -> Benefit:
        try:
            return self.benefits[benefit_id]
        except KeyError:
            raise UnknownBenefit(f"no benefit {benefit_id!r} in the active policy") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "benefits": [self.benefits[b].to_dict() for b in sorted(self.benefits)],
            "digest": self.digest,
        }


def parse_policy(raw: bytes) -> RedemptionPolicy:
    """Parse a policy document; the digest covers the exact file bytes."""
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"policy file is not UTF-8: {exc}") from exc
    benefits: dict[str, Benefit] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("|", 3)
        if len(parts) != 4:
            raise ParseError(f"line {line_no}: expected benefit_id|cost|enabled|description")
        benefit_id, cost_s, enabled_s, description = (p.strip() for p in parts)
        if not benefit_id:
            raise ParseError(f"line {line_no}: empty benefit_id")
        if benefit_id in benefits:
            raise DuplicateBenefitId(f"line {line_no}: duplicate benefit {benefit_id!r}")
        try:
            cost = int(cost_s)
        except ValueError:
            raise ParseError(f"line {line_no}: bad cost {cost_s!r}") from None
        if cost < 1:
            raise NonPositiveCost(f"line {line_no}: cost must be >= 1, got {cost}")
        if enabled_s not in ("0", "1"):
            raise ParseError(f"line {line_no}: enabled must be 0 or 1, got {enabled_s!r}")
        benefits[benefit_id] = Benefit(
            benefit_id=benefit_id,
            cost=cost,
            description=description,
            enabled=enabled_s == "1",
        )
    return RedemptionPolicy(benefits=benefits, digest=hashlib.sha256(raw).hexdigest())


@dataclass
class TokenAccount:
    uid: str
    balance: int = 0
    lifetime_issued: int = 0
    lifetime_redeemed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "balance": self.balance,
            "lifetime_issued": self.lifetime_issued,
            "lifetime_redeemed": self.lifetime_redeemed,
        }


@dataclass(frozen=True)
class RedemptionReceipt:
    uid: str
    benefit_id: str
    cost: int
    remaining_balance: int
    block_height: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "benefit_id": self.benefit_id,
            "cost": self.cost,
            "remaining_balance": self.remaining_balance,
            "block_height": self.block_height,
        }


class TokenLedgerState:
    """Projection of token accounts from Register/TokenIssue/TokenRedeem events."""

    def __init__(self):
        self.accounts: dict[str, TokenAccount] = {}

    def account(self, uid: str) -> TokenAccount | None:
        return self.accounts.get(uid)

    def apply(self, event: Event) -> None:
        if event.kind is EventKind.REGISTER:
            uid = event.subject_uid
            assert uid is not None
            self.accounts.setdefault(uid, TokenAccount(uid=uid))
            return
        if event.kind not in (EventKind.TOKEN_ISSUE, EventKind.TOKEN_REDEEM):
            return
        uid = event.subject_uid
        assert uid is not None
        account = self.accounts.get(uid)
        if account is None:
            raise ReplayConflict(event.event_id.hex(), f"token event for unknown uid {uid}")
        if event.kind is EventKind.TOKEN_ISSUE:
            amount = event.payload["amount"]
            account.balance += amount
            account.lifetime_issued += amount
        else:
            cost = event.payload["cost"]
            if account.balance < cost:
                raise ReplayConflict(
                    event.event_id.hex(),
                    f"redeem of {cost} exceeds balance {account.balance}",
                )
            account.balance -= cost
            account.lifetime_redeemed += cost

    def totals(self) -> tuple[int, int, int]:
        """(sum issued, sum redeemed, sum balances) across all accounts."""
        issued = sum(a.lifetime_issued for a in self.accounts.values())
        redeemed = sum(a.lifetime_redeemed for a in self.accounts.values())
        balance = sum(a.balance for a in self.accounts.values())
        return issued, redeemed, balance

    def snapshot(self) -> dict[str, Any]:
        return {uid: self.accounts[uid].to_dict() for uid in sorted(self.accounts)}


def check_reason(code: str, registered: frozenset[str]) -> None:
    if code not in registered:
        raise UnknownReason(f"reason code {code!r} is not registered")


def check_redeemable(policy: RedemptionPolicy, benefit_id: str, balance: int) -> Benefit:
    benefit = policy.benefit(benefit_id)
    if not benefit.enabled:
        raise BenefitDisabled(f"benefit {benefit_id!r} is disabled")
    if balance < benefit.cost:
        raise InsufficientBalance(balance, benefit.cost)
    return benefit
