"""Operator CLI (`pl`): scripted administration over the node HTTP API.

Exit codes: 0 success, 2 usage error, 3 network error, 4 API domain error
(the API's machine code is printed). `--json` emits the raw response
envelope. Defaults come from PL_NODE_URL and PL_AUTH_TOKEN.
"""

from __future__ import annotations

import json as jsonlib
import sys
from dataclasses import dataclass
from datetime import date

import click
import httpx

from .events import AIRPORT_RE
from .registry import ColourBand

EXIT_NETWORK = 3
EXIT_API = 4


@dataclass
class CliContext:
    node_url: str
    auth_token: str | None
    as_json: bool


@click.group()
@click.option("--node", envvar="PL_NODE_URL", default="http://127.0.0.1:8800",
              show_default=True, help="Base URL of the node.")
@click.option("--token", envvar="PL_AUTH_TOKEN", default=None,
              help="Bearer token for authority write endpoints.")
@click.option("--json", "as_json", is_flag=True, help="Print raw response JSON.")
@click.pass_context
def main(ctx: click.Context, node: str, token: str | None, as_json: bool) -> None:
    """Administer a pandemic-ledger node."""
    ctx.obj = CliContext(node_url=node.rstrip("/"), auth_token=token, as_json=as_json)


def _call(ctx: CliContext, method: str, path: str, *, body=None, params=None, content=None):
    headers = {}
    if ctx.auth_token:
        headers["Authorization"] = f"Bearer {ctx.auth_token}"
    try:
        response = httpx.request(
            method,
            ctx.node_url + path,
            json=body,
            params=params,
            content=content,
            headers=headers,
            timeout=30.0,
        )
    except httpx.HTTPError as exc:
        click.echo(f"network error: {exc}", err=True)
        sys.exit(EXIT_NETWORK)
    try:
        data = response.json()
    except ValueError:
        click.echo(f"network error: non-JSON response (HTTP {response.status_code})", err=True)
        sys.exit(EXIT_NETWORK)
    if response.status_code >= 400:
        if ctx.as_json:
            click.echo(jsonlib.dumps(data, indent=2))
        else:
            click.echo(f"error [{data.get('code', '?')}]: {data.get('message', '')}", err=True)
        sys.exit(EXIT_API)
    return data


def _emit(ctx: CliContext, data, human: str) -> None:
    if ctx.as_json:
        click.echo(jsonlib.dumps(data, indent=2))
    else:
        click.echo(human)


def _record_lines(record: dict) -> str:
    lines = [
        f"uid:       {record['uid']}",
        f"passport:  {record['passport_number'] or '(blank)'}",
        f"band:      {record['band']}" + (f" ({record['band_reason']})" if record["band_reason"] else ""),
        f"tokens:    {record['token_balance']}",
        f"location:  {record['current_location'] or '-'}",
        f"info:      {record['additional_info'] or '-'}",
    ]
    if record["travel_history"]:
        lines.append("travel:")
        for visit in record["travel_history"]:
            note = f" ({visit['note']})" if visit.get("note") else ""
            lines.append(f"  {visit['date']}  {visit['airport']}{note}")
    return "\n".join(lines)


# --- user ------------------------------------------------------------------

@main.group()
def user() -> None:
    """Registration, search, bands, travel."""


@user.command("register")
@click.option("--passport", default=None, help="May be left blank.")
@click.option("--location", default="")
@click.option("--info", default="")
@click.pass_obj
def cmd_register(ctx: CliContext, passport, location, info) -> None:
    data = _call(ctx, "POST", "/users",
                 body={"passport": passport, "location": location, "info": info})
    _emit(ctx, data, f"registered {data['uid']} (block {data['block_height']})")


@user.command("search")
@click.option("--uid", default=None)
@click.option("--passport", default=None)
@click.pass_obj
def cmd_search(ctx: CliContext, uid, passport) -> None:
    if (uid is None) == (passport is None):
        raise click.UsageError("pass exactly one of --uid or --passport")
    if uid is not None:
        data = _call(ctx, "GET", f"/users/{uid}")
    else:
        data = _call(ctx, "GET", "/users", params={"passport": passport})
    _emit(ctx, data, _record_lines(data))


@user.command("band")
@click.argument("uid")
@click.argument("band", type=click.Choice([b.label for b in ColourBand], case_sensitive=False))
@click.option("--reason", default="")
@click.option("--confirmed-positive", is_flag=True,
              help="Allow the direct Green->Red override.")
@click.pass_obj
def cmd_band(ctx: CliContext, uid, band, reason, confirmed_positive) -> None:
    band_label = ColourBand.from_label(band).label
    data = _call(ctx, "POST", f"/users/{uid}/band",
                 body={"band": band_label, "reason": reason,
                       "confirmed_positive": confirmed_positive})
    _emit(ctx, data,
          f"{uid} band -> {data['record']['band']} (block {data['block_height']})")


@user.command("travel")
@click.argument("uid")
@click.argument("airport")
@click.argument("visit_date", metavar="DATE")
@click.option("--note", default=None)
@click.pass_obj
def cmd_travel(ctx: CliContext, uid, airport, visit_date, note) -> None:
    if not AIRPORT_RE.match(airport):
        raise click.UsageError(f"airport must be three uppercase letters, got {airport!r}")
    try:
        date.fromisoformat(visit_date)
    except ValueError:
        raise click.UsageError(f"DATE must be YYYY-MM-DD, got {visit_date!r}")
    data = _call(ctx, "POST", f"/users/{uid}/travel",
                 body={"airport": airport, "date": visit_date, "note": note})
    _emit(ctx, data, f"logged {airport} {visit_date} for {uid} (block {data['block_height']})")


# --- volunteer / tokens ---------------------------------------------------------

@main.command("volunteer")
@click.option("--passport", default=None)
@click.option("--uid", default=None)
@click.option("--reason", default="VoluntaryTest", show_default=True)
@click.pass_obj
def cmd_volunteer(ctx: CliContext, passport, uid, reason) -> None:
    if passport is None and uid is None:
        raise click.UsageError("pass --passport or --uid to identify the volunteer")
    data = _call(ctx, "POST", "/volunteer",
                 body={"passport": passport, "uid": uid, "reason": reason})
    record, account = data["record"], data["account"]
    _emit(ctx, data,
          f"volunteer {record['uid']}: balance {account['balance']} "
          f"(block {data['block_height']})")


@main.group()
def token() -> None:
    """Incentive token issuance and redemption."""


@token.command("issue")
@click.argument("uid")
@click.option("--reason", default="VoluntaryTest", show_default=True)
@click.option("--amount", type=int, default=1, show_default=True)
@click.pass_obj
def cmd_issue(ctx: CliContext, uid, reason, amount) -> None:
    if amount < 1:
        raise click.UsageError("--amount must be >= 1")
    data = _call(ctx, "POST", f"/users/{uid}/tokens/issue",
                 body={"reason": reason, "amount": amount})
    _emit(ctx, data,
          f"issued {amount} to {uid}: balance {data['account']['balance']} "
          f"(block {data['block_height']})")


@token.command("redeem")
@click.argument("uid")
@click.argument("benefit_id")
@click.pass_obj
def cmd_redeem(ctx: CliContext, uid, benefit_id) -> None:
    data = _call(ctx, "POST", f"/users/{uid}/tokens/redeem", body={"benefit_id": benefit_id})
    _emit(ctx, data,
          f"redeemed {benefit_id} (cost {data['cost']}): remaining "
          f"{data['remaining_balance']} (block {data['block_height']})")


# --- hotspots / exposure ----------------------------------------------------------

@main.group()
def hotspot() -> None:
    """Hotspot report ingestion."""


@hotspot.command("import")
@click.argument("file", type=click.File("r", encoding="utf-8"))
@click.pass_obj
def cmd_hotspot_import(ctx: CliContext, file) -> None:
    data = _call(ctx, "POST", "/hotspots/import", content=file.read().encode("utf-8"))
    lines = [f"ingested {data['ingested']} reports"]
    for failure in data["errors"]:
        lines.append(f"  line {failure['line']}: {failure['error']}")
    _emit(ctx, data, "\n".join(lines))


@main.group()
def exposure() -> None:
    """Suspicion evaluation."""


@exposure.command("sweep")
@click.pass_obj
def cmd_sweep(ctx: CliContext) -> None:
    data = _call(ctx, "POST", "/exposure/sweep")
    flagged = ", ".join(data["newly_flagged"]) or "none"
    _emit(ctx, data, f"evaluated {data['evaluated']} users; newly flagged: {flagged}")


# --- chain -------------------------------------------------------------------------

@main.group()
def chain() -> None:
    """Chain auditing."""


@chain.command("verify")
@click.option("--from", "from_height", type=int, default=0, show_default=True)
@click.option("--to", "to_height", type=int, default=None)
@click.pass_obj
def cmd_chain_verify(ctx: CliContext, from_height, to_height) -> None:
    params = {"from": from_height}
    if to_height is not None:
        params["to"] = to_height
    data = _call(ctx, "GET", "/chain/verify", params=params)
    if data["ok"]:
        _emit(ctx, data, f"chain OK ({data['checked']} blocks verified)")
    else:
        _emit(ctx, data,
              f"chain FAILED at height {data['failure_height']}: "
              f"{data['failure']} ({data['detail']})")
        sys.exit(EXIT_API)


@chain.command("show")
@click.argument("height", type=int)
@click.pass_obj
def cmd_block_show(ctx: CliContext, height) -> None:
    data = _call(ctx, "GET", f"/chain/blocks/{height}")
    block = data["block"]
    lines = [
        f"height:     {block['height']}",
        f"timestamp:  {block['timestamp']}",
        f"prev_hash:  {block['prev_hash']}",
        f"hash:       {block['block_hash']}",
        f"authority:  {block['authority_id']} "
        f"(signature {'valid' if block['signature_valid'] else 'INVALID'})",
        f"events ({len(block['events'])}):",
    ]
    for event in block["events"]:
        subject = event["subject_uid"] or "-"
        lines.append(f"  {event['kind']:<14} {subject:<18} {jsonlib.dumps(event['payload'])}")
    _emit(ctx, data, "\n".join(lines))


if __name__ == "__main__":
    main()
