"""Airport hotspot reports and the suspicion rule.

A traveller is suspect when a reported case at a visited airport falls
within 14 days on either side of the visit, boundaries inclusive. Day
arithmetic is in UTC calendar days; case counts do not weight the
decision (any report triggers).
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Any, Iterable

from .errors import InvalidReport, ParseError
from .events import AIRPORT_RE, Event, EventKind
from .registry import TravelVisit

EXPOSURE_WINDOW_DAYS = 14


@dataclass(frozen=True)
class HotspotReport:
    airport_code: str
    case_date: date
    case_count: int
    source: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "airport": self.airport_code,
            "date": self.case_date.isoformat(),
            "count": self.case_count,
            "source": self.source,
        }


def validate_report(report: HotspotReport) -> None:
    if not AIRPORT_RE.match(report.airport_code or ""):
        raise InvalidReport(f"airport code must match [A-Z]{{3}}: {report.airport_code!r}")
    if report.case_count < 1:
        raise InvalidReport(f"case_count must be >= 1, got {report.case_count}")


@dataclass(frozen=True)
class SuspicionFinding:
    uid: str
    visit: TravelVisit
    report: HotspotReport
    day_offset: int  # report.case_date - visit.visit_date, in whole days
    report_event_id: str  # hex id of the HotspotIngest event

    def to_dict(self) -> dict[str, Any]:
        return {
            "uid": self.uid,
            "visit": self.visit.to_dict(),
            "report": self.report.to_dict(),
            "day_offset": self.day_offset,
            "report_event_id": self.report_event_id,
        }


class HotspotIndex:
    """Per-airport, date-sorted projection of HotspotIngest events."""

    def __init__(self):
        # airport -> parallel lists sorted by date; duplicates are kept as
        # separate observations (counts are additive, not deduplicated).
        self._dates: dict[str, list[date]] = {}
        self._entries: dict[str, list[tuple[HotspotReport, str]]] = {}
        self._total = 0

    def apply(self, event: Event) -> None:
        if event.kind is not EventKind.HOTSPOT_INGEST:
            return
        p = event.payload
        report = HotspotReport(
            airport_code=p["airport"],
            case_date=date.fromisoformat(p["date"]),
            case_count=p["count"],
            source=p.get("source", ""),
        )
        dates = self._dates.setdefault(report.airport_code, [])
        entries = self._entries.setdefault(report.airport_code, [])
        # insert in date order, after any same-date entries (stable ingest order)
        pos = bisect_right(dates, report.case_date)
        dates.insert(pos, report.case_date)
        entries.insert(pos, (report, event.event_id.hex()))
        self._total += 1

    @property
    def report_count(self) -> int:
        return self._total

    def reports_between(
        self, airport: str, first: date, last: date
    ) -> Iterable[tuple[HotspotReport, str]]:
        """All (report, ingest event id) at ``airport`` with first <= date <= last."""
        dates = self._dates.get(airport)
        if not dates:
            return []
        lo = bisect_left(dates, first)
        hi = bisect_right(dates, last)
        return self._entries[airport][lo:hi]

    def snapshot(self) -> list[dict[str, Any]]:
        out = []
        for airport in sorted(self._entries):
            for report, event_id in self._entries[airport]:
                entry = report.to_dict()
                entry["event_id"] = event_id
                out.append(entry)
        return out


def find_suspicions(
    uid: str, visits: Iterable[TravelVisit], index: HotspotIndex
) -> list[SuspicionFinding]:
    """Every (visit, report) pair at the same airport within the inclusive window."""
    window = timedelta(days=EXPOSURE_WINDOW_DAYS)
    findings: list[SuspicionFinding] = []
    for visit in visits:
        matches = index.reports_between(
            visit.airport_code, visit.visit_date - window, visit.visit_date + window
        )
        for report, event_id in matches:
            offset = (report.case_date - visit.visit_date).days
            findings.append(
                SuspicionFinding(
                    uid=uid,
                    visit=visit,
                    report=report,
                    day_offset=offset,
                    report_event_id=event_id,
                )
            )
    return findings


def parse_hotspot_line(line: str) -> HotspotReport:
    """Parse one ``AIRPORT,YYYY-MM-DD,COUNT,SOURCE`` record."""
    parts = line.split(",", 3)
    if len(parts) < 3:
        raise ParseError(f"expected AIRPORT,YYYY-MM-DD,COUNT[,SOURCE]: {line!r}")
    airport = parts[0].strip()
    try:
        case_date = date.fromisoformat(parts[1].strip())
    except ValueError:
        raise ParseError(f"bad date {parts[1]!r}") from None
    try:
        count = int(parts[2].strip())
    except ValueError:
        raise ParseError(f"bad count {parts[2]!r}") from None
    source = parts[3].strip() if len(parts) == 4 else ""
    report = HotspotReport(airport_code=airport, case_date=case_date, case_count=count, source=source)
    validate_report(report)
    return report


@dataclass(frozen=True)
class SweepSummary:
    evaluated: int
    newly_flagged: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {"evaluated": self.evaluated, "newly_flagged": list(self.newly_flagged)}
