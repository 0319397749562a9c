"""Exposure rule: inclusive 14-day window, oracle equivalence, sweep safety."""

from __future__ import annotations

import random
from collections import Counter
from datetime import date, timedelta

import pytest

from pandemic_ledger.errors import InvalidReport, ParseError, UnknownUid
from pandemic_ledger.events import EventKind, new_event
from pandemic_ledger.exposure import (
    EXPOSURE_WINDOW_DAYS,
    HotspotIndex,
    HotspotReport,
    find_suspicions,
    parse_hotspot_line,
)
from pandemic_ledger.registry import ColourBand, TravelVisit

BASE = date(2020, 3, 1)


def brute_force_findings(visits, reports):
    """The spec's oracle: a double loop over all (visit, report) pairs."""
    out = []
    for visit in visits:
        for report, event_id in reports:
            offset = (report.case_date - visit.visit_date).days
            if report.airport_code == visit.airport_code and abs(offset) <= 14:
                out.append((visit, report, event_id, offset))
    return out


def as_counter(findings):
    return Counter(
        (f.visit, f.report, f.report_event_id, f.day_offset) for f in findings
    )


def index_of(reports):
    index = HotspotIndex()
    ids = []
    for report in reports:
        event = new_event(EventKind.HOTSPOT_INGEST, None, {
            "airport": report.airport_code,
            "date": report.case_date.isoformat(),
            "count": report.case_count,
            "source": report.source,
        })
        index.apply(event)
        ids.append((report, event.event_id.hex()))
    return index, ids


# --- ingestion -----------------------------------------------------------------

def test_ingest_lands_on_chain(service):
    event_id, height = service.ingest_hotspot(HotspotReport("DEL", BASE, 5, "news"))
    stored = [e for e in service.store.iter_events(kind=EventKind.HOTSPOT_INGEST)]
    assert [e.event_id.hex() for e in stored] == [event_id]
    assert height == service.store.head_height


def test_ingest_rejects_zero_count(service):
    with pytest.raises(InvalidReport):
        service.ingest_hotspot(HotspotReport("DEL", BASE, 0, "news"))


def test_ingest_rejects_bad_airport(service):
    with pytest.raises(InvalidReport):
        service.ingest_hotspot(HotspotReport("de1", BASE, 1, "news"))


def test_duplicate_reports_are_separate_observations(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    report = HotspotReport("DEL", BASE + timedelta(days=3), 2, "lab")
    service.ingest_hotspot(report)
    service.ingest_hotspot(report)
    findings = service.evaluate_user(uid)
    assert len(findings) == 2


# --- evaluation ----------------------------------------------------------------

def test_case_ten_days_after_visit_is_flagged(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    service.ingest_hotspot(HotspotReport("DEL", BASE + timedelta(days=10), 5, ""))
    findings = service.evaluate_user(uid)
    assert len(findings) == 1
    assert findings[0].day_offset == 10


def test_case_fifteen_days_after_visit_is_not_flagged(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    service.ingest_hotspot(HotspotReport("DEL", BASE + timedelta(days=15), 5, ""))
    assert service.evaluate_user(uid) == []


def test_airport_mismatch_is_not_flagged(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    service.ingest_hotspot(HotspotReport("BOM", BASE, 5, ""))
    assert service.evaluate_user(uid) == []


@pytest.mark.parametrize("offset,flagged", [
    (-15, False), (-14, True), (-13, True), (0, True), (13, True), (14, True), (15, False),
])
def test_window_boundaries_inclusive(offset, flagged):
    visits = [TravelVisit("DEL", BASE)]
    index, _ = index_of([HotspotReport("DEL", BASE + timedelta(days=offset), 1, "")])
    findings = find_suspicions("u", visits, index)
    assert bool(findings) is flagged
    if flagged:
        assert findings[0].day_offset == offset


def test_evaluate_unknown_uid(service):
    with pytest.raises(UnknownUid):
        service.evaluate_user("IN-GHOSTGHOSTGH")


def test_symmetry_of_window_over_thirty_days():
    for k in range(0, 31):
        visits = [TravelVisit("DEL", BASE)]
        before, _ = index_of([HotspotReport("DEL", BASE - timedelta(days=k), 1, "")])
        after, _ = index_of([HotspotReport("DEL", BASE + timedelta(days=k), 1, "")])
        hit_before = bool(find_suspicions("u", visits, before))
        hit_after = bool(find_suspicions("u", visits, after))
        assert hit_before == hit_after == (k <= EXPOSURE_WINDOW_DAYS)


def test_randomized_equivalence_with_brute_force_oracle():
    rng = random.Random(14)
    airports = [f"A{chr(65 + i)}X" for i in range(8)]
    reports = [
        HotspotReport(rng.choice(airports), BASE + timedelta(days=rng.randrange(-40, 40)),
                      rng.randrange(1, 9), f"s{i}")
        for i in range(60)
    ]
    index, id_pairs = index_of(reports)
    for _ in range(100):
        visits = [
            TravelVisit(rng.choice(airports), BASE + timedelta(days=rng.randrange(-40, 40)))
            for _ in range(rng.randrange(0, 6))
        ]
        actual = find_suspicions("u", visits, index)
        expected = brute_force_findings(visits, id_pairs)
        assert as_counter(actual) == Counter(
            (v, r, eid, off) for v, r, eid, off in expected
        )


def test_adding_a_report_never_removes_findings():
    rng = random.Random(99)
    visits = [TravelVisit("DEL", BASE), TravelVisit("BOM", BASE + timedelta(days=5))]
    index = HotspotIndex()
    seen = Counter()
    for i in range(40):
        report = HotspotReport(
            rng.choice(["DEL", "BOM", "MAA"]),
            BASE + timedelta(days=rng.randrange(-30, 30)), 1, f"s{i}",
        )
        index.apply(new_event(EventKind.HOTSPOT_INGEST, None, {
            "airport": report.airport_code, "date": report.case_date.isoformat(),
            "count": 1, "source": report.source,
        }))
        now = as_counter(find_suspicions("u", visits, index))
        assert all(now[key] >= count for key, count in seen.items())
        seen = now


# --- sweep ----------------------------------------------------------------------

def test_sweep_flags_green_user_and_is_idempotent(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    service.ingest_hotspot(HotspotReport("DEL", BASE + timedelta(days=2), 3, ""))
    summary = service.sweep_and_flag()
    assert summary.newly_flagged == [uid]
    record = service.registry.get(uid)
    assert record.band is ColourBand.AMBER
    assert record.band_reason == "airport exposure"
    again = service.sweep_and_flag()
    assert again.newly_flagged == []
    assert again.evaluated == summary.evaluated


def test_sweep_leaves_red_and_amber_users_alone(service):
    red = service.register_user()[0].uid
    service.update_band(red, ColourBand.AMBER, "s")
    service.update_band(red, ColourBand.RED, "positive")
    service.log_travel(red, TravelVisit("DEL", BASE))
    service.ingest_hotspot(HotspotReport("DEL", BASE, 1, ""))
    summary = service.sweep_and_flag()
    assert red not in summary.newly_flagged
    assert service.registry.get(red).band is ColourBand.RED


def test_sweep_records_triggering_report_ids(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("DEL", BASE))
    eid, _ = service.ingest_hotspot(HotspotReport("DEL", BASE, 1, ""))
    service.sweep_and_flag()
    band_events = list(service.store.iter_events(kind=EventKind.BAND_UPDATE, subject_uid=uid))
    assert band_events[-1].payload["triggered_by"] == [eid]


def test_sweep_only_ever_raises_green_to_amber(service):
    rng = random.Random(5)
    for i in range(20):
        uid = service.register_user()[0].uid
        if i % 3 == 1:
            service.update_band(uid, ColourBand.AMBER, "s")
        if i % 3 == 2:
            service.update_band(uid, ColourBand.AMBER, "s")
            service.update_band(uid, ColourBand.RED, "p")
        if rng.random() < 0.8:
            service.log_travel(uid, TravelVisit("DEL", BASE + timedelta(days=rng.randrange(10))))
    service.ingest_hotspot(HotspotReport("DEL", BASE, 2, ""))
    before = {u: r.band for u, r in service.registry.users.items()}
    summary = service.sweep_and_flag()
    for uid, record in service.registry.users.items():
        if uid in summary.newly_flagged:
            assert before[uid] is ColourBand.GREEN
            assert record.band is ColourBand.AMBER
        else:
            assert record.band is before[uid]


# --- bulk format ---------------------------------------------------------------------

def test_parse_hotspot_line_variants():
    report = parse_hotspot_line("DEL,2020-03-10,5,city surveillance, with commas")
    assert report == HotspotReport("DEL", date(2020, 3, 10), 5, "city surveillance, with commas")
    assert parse_hotspot_line("BOM,2020-01-01,1").source == ""
    for bad in ("DEL", "DEL,notadate,1", "DEL,2020-01-01,zero", "dl1,2020-01-01,1"):
        with pytest.raises((ParseError, InvalidReport)):
            parse_hotspot_line(bad)


def test_import_reports_per_line_failures_without_aborting(service):
    text = (
        "# header comment\n"
        "DEL,2020-03-10,5,news\n"
        "\n"
        "BOGUS LINE\n"
        "BOM,2020-03-11,2,lab\n"
        "MAA,bad-date,1,x\n"
    )
    result = service.import_hotspots(text)
    assert result["ingested"] == 2
    assert [e["line"] for e in result["errors"]] == [4, 6]
    assert service.hotspots.report_count == 2
