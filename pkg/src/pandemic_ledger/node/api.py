"""HTTP surface of a node.

JSON in and out; errors use the envelope {"code": MACHINE_CODE,
"message": text} (table in docs/api.md). Write endpoints exist only on
the authority and, when an auth token is configured, require it as a
bearer token. Block frames travel base64-wrapped in JSON.
"""

from __future__ import annotations

import base64
from datetime import date
from typing import Any

from fastapi import Depends, FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .. import crypto
from ..blocks import signing_preimage
from ..errors import (
    LedgerError,
    RangeOutOfBounds,
    ReadOnlyReplica,
    Unauthorized,
    ValidationError,
)
from ..exposure import HotspotReport
from ..registry import ColourBand, TravelVisit

MAX_SYNC_PAGE = 500
DEFAULT_SYNC_PAGE = 100


class RegisterBody(BaseModel):
    passport: str | None = None
    location: str = ""
    info: str = ""


class BandBody(BaseModel):
    band: str
    reason: str = ""
    confirmed_positive: bool = False


class LocationBody(BaseModel):
    location: str


class InfoBody(BaseModel):
    text: str


class TravelBody(BaseModel):
    airport: str
    date: str
    note: str | None = None


class IssueBody(BaseModel):
    reason: str
    amount: int = 1


class RedeemBody(BaseModel):
    benefit_id: str


class VolunteerBody(BaseModel):
    passport: str | None = None
    uid: str | None = None
    reason: str = "VoluntaryTest"


class HotspotBody(BaseModel):
    airport: str
    date: str
    count: int
    source: str = ""


def _parse_date(value: str, field: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise ValidationError(field, f"not a valid ISO date: {value!r}") from None


def write_guard(request: Request) -> None:
    node = request.app.state.node
    if not node.config.is_authority:
        raise ReadOnlyReplica("this node is a read-only replica")
    token = node.config.auth_token
    if token:
        supplied = request.headers.get("authorization", "")
        if supplied != f"Bearer {token}":
            raise Unauthorized("missing or wrong bearer token")


def create_app(node: Any) -> FastAPI:
    app = FastAPI(title="pandemic-ledger node", docs_url=None, redoc_url=None)
    app.state.node = node
    service = node.service

    @app.exception_handler(LedgerError)
    async def ledger_error_handler(_req: Request, exc: LedgerError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    async def request_validation_handler(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=400,
            content={"code": "VALIDATION_ERROR", "message": f"{loc}: {first.get('msg', 'invalid')}"},
        )

    # --- users -----------------------------------------------------------

    @app.post("/users", status_code=201, dependencies=[Depends(write_guard)])
    def register(body: RegisterBody):
        record, height = service.register_user(
            passport=body.passport, location=body.location, info=body.info
        )
        return {"uid": record.uid, "block_height": height, "record": record.to_dict()}

    @app.get("/users")
    def user_by_passport(passport: str | None = None):
        if passport is None:
            raise ValidationError("passport", "query parameter required")
        record = service.find_user(passport)
        return record.to_dict()

    @app.get("/users/{uid}")
    def user_by_uid(uid: str):
        return service.registry.get(uid).to_dict()

    @app.post("/users/{uid}/band", dependencies=[Depends(write_guard)])
    def update_band(uid: str, body: BandBody):
        record, height = service.update_band(
            uid,
            ColourBand.from_label(body.band),
            reason=body.reason,
            confirmed_positive=body.confirmed_positive,
        )
        return {"block_height": height, "record": record.to_dict()}

    @app.post("/users/{uid}/location", dependencies=[Depends(write_guard)])
    def update_location(uid: str, body: LocationBody):
        record, height = service.update_location(uid, body.location)
        return {"block_height": height, "record": record.to_dict()}

    @app.post("/users/{uid}/info", dependencies=[Depends(write_guard)])
    def update_info(uid: str, body: InfoBody):
        record, height = service.update_info(uid, body.text)
        return {"block_height": height, "record": record.to_dict()}

    @app.post("/users/{uid}/travel", dependencies=[Depends(write_guard)])
    def log_travel(uid: str, body: TravelBody):
        visit = TravelVisit(
            airport_code=body.airport,
            visit_date=_parse_date(body.date, "date"),
            note=body.note,
        )
        record, height = service.log_travel(uid, visit)
        return {"block_height": height, "record": record.to_dict()}

    # --- tokens -----------------------------------------------------------

    @app.post("/users/{uid}/tokens/issue", dependencies=[Depends(write_guard)])
    def issue_tokens(uid: str, body: IssueBody):
        account, height = service.issue_tokens(uid, body.reason, body.amount)
        return {"block_height": height, "account": account.to_dict()}

    @app.post("/users/{uid}/tokens/redeem", dependencies=[Depends(write_guard)])
    def redeem_tokens(uid: str, body: RedeemBody):
        receipt = service.redeem_tokens(uid, body.benefit_id)
        return receipt.to_dict()

    @app.post("/volunteer", dependencies=[Depends(write_guard)])
    def volunteer(body: VolunteerBody):
        record, account, height = service.run_volunteer_flow(
            passport=body.passport, uid=body.uid, reason_code=body.reason
        )
        return {
            "block_height": height,
            "record": record.to_dict(),
            "account": account.to_dict(),
        }

    # --- verification ---------------------------------------------------------

    @app.get("/verify")
    def verify(uid: str | None = None, passport: str | None = None):
        query = uid or passport
        if not query:
            raise ValidationError("query", "pass uid=... or passport=...")
        return service.verify_user(query).to_dict()

    # --- exposure ----------------------------------------------------------

    @app.post("/hotspots", dependencies=[Depends(write_guard)])
    def ingest_hotspot(body: HotspotBody):
        report = HotspotReport(
            airport_code=body.airport,
            case_date=_parse_date(body.date, "date"),
            case_count=body.count,
            source=body.source,
        )
        event_id, height = service.ingest_hotspot(report)
        return {"block_height": height, "event_id": event_id}

    @app.post("/hotspots/import", dependencies=[Depends(write_guard)])
    async def import_hotspots(request: Request):
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ValidationError("body", "import file must be UTF-8") from None
        return service.import_hotspots(text)

    @app.post("/exposure/sweep", dependencies=[Depends(write_guard)])
    def sweep():
        return service.sweep_and_flag().to_dict()

    # --- policy ------------------------------------------------------------

    @app.get("/policy")
    def policy():
        doc = service.policy.to_dict()
        doc["reason_codes"] = sorted(service.reason_codes)
        return doc

    # --- chain -------------------------------------------------------------

    @app.get("/chain/head")
    def chain_head():
        head = service.store.head
        if head is None:
            return {"height": -1, "block_hash": ""}
        return head.to_dict()

    @app.get("/chain/blocks/{height}")
    def block_at(height: int):
        frame = service.store.get_frame(height)
        block = service.store.get_block(height)
        decoded = block.to_dict()
        preimage = signing_preimage(
            block.height, block.prev_hash, block.events_root, block.timestamp, block.authority_id
        )
        decoded["signature_valid"] = crypto.verify(
            node.config.public_key_bytes(), block.signature, preimage
        )
        return {
            "height": height,
            "frame": base64.b64encode(frame).decode("ascii"),
            "block": decoded,
        }

    @app.get("/chain/blocks")
    def blocks_from(
        from_height: int = Query(0, alias="from"),
        limit: int = DEFAULT_SYNC_PAGE,
    ):
        if from_height < 0:
            raise RangeOutOfBounds("from must be >= 0")
        limit = max(1, min(limit, MAX_SYNC_PAGE))
        head = service.store.head
        head_height = head.height if head else -1
        frames = []
        for height in range(from_height, min(from_height + limit - 1, head_height) + 1):
            frames.append(
                {
                    "height": height,
                    "frame": base64.b64encode(service.store.get_frame(height)).decode("ascii"),
                }
            )
        return {
            "head": {"height": head_height, "block_hash": head.block_hash.hex() if head else ""},
            "blocks": frames,
        }

    @app.get("/chain/verify")
    def chain_verify(
        from_height: int = Query(0, alias="from"),
        to_height: int | None = Query(None, alias="to"),
    ):
        return service.store.verify_chain(from_height, to_height).to_dict()

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "role": node.config.role,
            "height": service.store.head_height,
        }

    return app
