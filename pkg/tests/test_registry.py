"""Registry: identification, band transitions, travel, replay determinism."""

from __future__ import annotations

import random
from datetime import date, timedelta

import pytest

from pandemic_ledger.errors import (
    DuplicatePassport,
    FutureDate,
    IllegalTransition,
    InvalidAirportCode,
    NotFound,
    ReplayConflict,
    TooLong,
    UnknownUid,
)
from pandemic_ledger.events import EventKind, new_event
from pandemic_ledger.registry import (
    ALLOWED_TRANSITIONS,
    ColourBand,
    RegistryState,
    TravelVisit,
    can_transition,
    generate_uid,
)
from pandemic_ledger.service import replay_projections, snapshot_bytes

G, A, R = ColourBand.GREEN, ColourBand.AMBER, ColourBand.RED


# --- registration ------------------------------------------------------------

def test_register_defaults_to_green_with_zero_tokens(service):
    record, height = service.register_user(passport="P1234567", location="Vellore, TN")
    assert record.band is ColourBand.GREEN
    assert record.token_balance == 0
    assert record.current_location == "Vellore, TN"
    assert record.uid.startswith("IN-")
    assert height == service.store.head_height


def test_register_with_blank_passport(service):
    record, _ = service.register_user()
    assert record.passport_number is None
    again, _ = service.register_user(passport="   ")
    assert again.passport_number is None
    assert again.uid != record.uid


def test_duplicate_passport_reports_existing_uid(service):
    first, _ = service.register_user(passport="P1234567")
    with pytest.raises(DuplicatePassport) as excinfo:
        service.register_user(passport="P1234567")
    assert excinfo.value.existing_uid == first.uid


def test_passport_stored_trimmed_and_case_sensitive(service):
    first, _ = service.register_user(passport="  P77  ")
    assert first.passport_number == "P77"
    with pytest.raises(DuplicatePassport):
        service.register_user(passport="P77")
    lower, _ = service.register_user(passport="p77")  # different value
    assert lower.uid != first.uid


def test_generated_uids_are_prefixed_base32():
    for _ in range(50):
        uid = generate_uid("IN")
        prefix, body = uid.split("-", 1)
        assert prefix == "IN"
        assert len(body) == 12
        assert set(body) <= set("ABCDEFGHIJKLMNOPQRSTUVWXYZ234567")


# --- band transitions ---------------------------------------------------------

def _user_in_band(service, band: ColourBand) -> str:
    uid = service.register_user()[0].uid
    if band in (A, R):
        service.update_band(uid, A, "suspicion raised")
    if band is R:
        service.update_band(uid, R, "positive test")
    return uid


@pytest.mark.parametrize("start,target,confirmed,allowed", [
    (G, A, False, True),
    (G, R, False, False),
    (G, R, True, True),   # explicit confirmed-positive override
    (G, G, False, False),
    (A, R, False, True),
    (A, G, False, True),
    (A, A, False, False),
    (A, A, True, False),  # override only unlocks Green->Red
    (R, A, False, True),
    (R, G, False, False),
    (R, G, True, False),
    (R, R, False, False),
])
def test_band_transition_matrix(service, start, target, confirmed, allowed):
    uid = _user_in_band(service, start)
    assert can_transition(start, target, confirmed) is allowed
    if allowed:
        record, _ = service.update_band(uid, target, "test", confirmed_positive=confirmed)
        assert record.band is target
    else:
        with pytest.raises(IllegalTransition):
            service.update_band(uid, target, "test", confirmed_positive=confirmed)


def test_amber_reason_stored(service):
    uid = _user_in_band(service, G)
    record, _ = service.update_band(uid, A, "airport exposure")
    assert record.band is A
    assert record.band_reason == "airport exposure"


def test_band_update_unknown_uid(service):
    with pytest.raises(UnknownUid):
        service.update_band("IN-GHOSTGHOSTGH", A, "x")


# --- travel --------------------------------------------------------------------

def test_travel_log_appends_history(service):
    uid = service.register_user()[0].uid
    record, _ = service.log_travel(uid, TravelVisit("DEL", date(2020, 3, 1)))
    assert [v.airport_code for v in record.travel_history] == ["DEL"]


def test_travel_history_is_date_sorted(service):
    uid = service.register_user()[0].uid
    service.log_travel(uid, TravelVisit("BOM", date(2020, 4, 10)))
    record, _ = service.log_travel(uid, TravelVisit("DEL", date(2020, 3, 1)))
    assert [v.airport_code for v in record.travel_history] == ["DEL", "BOM"]


def test_travel_rejects_bad_airport_code(service):
    uid = service.register_user()[0].uid
    for bad in ("de1", "DELL", "DE", "d3l", ""):
        with pytest.raises(InvalidAirportCode):
            service.log_travel(uid, TravelVisit(bad, date(2020, 3, 1)))


def test_travel_rejects_future_date(service):
    uid = service.register_user()[0].uid
    tomorrow = date.today() + timedelta(days=2)
    with pytest.raises(FutureDate):
        service.log_travel(uid, TravelVisit("DEL", tomorrow))


# --- location / info ----------------------------------------------------------------

def test_update_location(service):
    uid = service.register_user()[0].uid
    record, _ = service.update_location(uid, "Vellore, TN")
    assert record.current_location == "Vellore, TN"
    with pytest.raises(UnknownUid):
        service.update_location("IN-GHOSTGHOSTGH", "x")


def test_location_last_write_wins_with_both_events_on_chain(service):
    uid = service.register_user()[0].uid
    service.update_location(uid, "first")
    record, _ = service.update_location(uid, "second")
    assert record.current_location == "second"
    updates = [e for e in service.store.iter_events(kind=EventKind.LOCATION_UPDATE)
               if e.subject_uid == uid]
    assert [e.payload["location"] for e in updates] == ["first", "second"]
    replayed_registry, _, _ = replay_projections(service.store)
    assert replayed_registry.get(uid).current_location == "second"


def test_info_update_replaces_and_clears(service):
    uid = service.register_user()[0].uid
    record, _ = service.update_info(uid, "comorbidity: asthma")
    assert record.additional_info == "comorbidity: asthma"
    record, _ = service.update_info(uid, "")
    assert record.additional_info == ""


def test_info_update_boundary_is_4096_bytes(service):
    uid = service.register_user()[0].uid
    record, _ = service.update_info(uid, "x" * 4096)
    assert len(record.additional_info) == 4096
    with pytest.raises(TooLong):
        service.update_info(uid, "x" * 4097)
    # multi-byte characters count in bytes, not characters
    with pytest.raises(TooLong):
        service.update_info(uid, "€" * 1366)  # 3 bytes each -> 4098


# --- find ------------------------------------------------------------------------

def test_find_by_uid_and_passport_return_identical_records(service):
    registered, _ = service.register_user(passport="P42", location="Goa")
    by_uid = service.find_user(registered.uid)
    by_passport = service.find_user("P42")
    assert by_uid.to_dict() == by_passport.to_dict()


def test_find_unknown_query(service):
    with pytest.raises(NotFound):
        service.find_user("ghost")


# --- replay ---------------------------------------------------------------------------

def test_replay_of_empty_chain_has_zero_users(store):
    registry, hotspots, tokens = replay_projections(store)
    assert registry.users == {}
    assert tokens.accounts == {}
    assert hotspots.report_count == 0


def test_replay_matches_incremental_state_after_random_ops(service):
    rng = random.Random(20_2008)
    uids: list[str] = []
    for step in range(400):
        op = rng.randrange(6)
        if op == 0 or not uids:
            passport = f"P{step}" if rng.random() < 0.7 else None
            uids.append(service.register_user(passport=passport)[0].uid)
        elif op == 1:
            uid = rng.choice(uids)
            band = service.registry.get(uid).band
            targets = [t for (f, t) in ALLOWED_TRANSITIONS if f is band]
            if targets:
                service.update_band(uid, rng.choice(targets), "random walk")
        elif op == 2:
            visit = TravelVisit(
                rng.choice(["DEL", "BOM", "MAA"]),
                date(2020, 1, 1) + timedelta(days=rng.randrange(300)),
            )
            service.log_travel(rng.choice(uids), visit)
        elif op == 3:
            service.update_location(rng.choice(uids), f"city-{rng.randrange(20)}")
        elif op == 4:
            service.update_info(rng.choice(uids), f"note {step}")
        else:
            service.issue_tokens(rng.choice(uids), "VoluntaryTest", rng.randrange(1, 4))
    incremental = snapshot_bytes(service.registry, service.hotspots, service.tokens)
    replay_a = snapshot_bytes(*service.replay_from_ledger())
    replay_b = snapshot_bytes(*service.replay_from_ledger())
    assert replay_a == incremental
    assert replay_a == replay_b


def test_replay_uid_and_passport_uniqueness_held_at_every_prefix(service):
    for i in range(10):
        service.register_user(passport=f"P{i}")
    seen_uids: set[str] = set()
    seen_passports: set[str] = set()
    for event in service.store.iter_events(kind=EventKind.REGISTER):
        assert event.subject_uid not in seen_uids
        seen_uids.add(event.subject_uid)
        passport = event.payload["passport"]
        if passport is not None:
            assert passport not in seen_passports
            seen_passports.add(passport)


def test_band_history_follows_transition_relation(service):
    rng = random.Random(7)
    uid = service.register_user()[0].uid
    for _ in range(30):
        band = service.registry.get(uid).band
        targets = [t for (f, t) in ALLOWED_TRANSITIONS if f is band]
        service.update_band(uid, rng.choice(targets), "walk")
    path = [ColourBand.GREEN]
    for event in service.store.iter_events(kind=EventKind.BAND_UPDATE, subject_uid=uid):
        path.append(ColourBand(event.payload["band"]))
    for frm, to in zip(path, path[1:]):
        assert (frm, to) in ALLOWED_TRANSITIONS


def test_forged_duplicate_passport_chain_conflicts_on_replay(store):
    # two Register events claiming the same passport, appended behind the
    # registry's back: schema-valid for the ledger, invalid for the registry
    ts = 1_600_000_000
    store.append_events([new_event(
        EventKind.REGISTER, "IN-AAAAAAAAAAAA",
        {"passport": "P1", "location": "", "info": ""}, timestamp=ts)])
    store.append_events([new_event(
        EventKind.REGISTER, "IN-BBBBBBBBBBBB",
        {"passport": "P1", "location": "", "info": ""}, timestamp=ts)])
    with pytest.raises(ReplayConflict):
        replay_projections(store)


def test_forged_illegal_transition_conflicts_on_replay(store):
    ts = 1_600_000_000
    store.append_events([new_event(
        EventKind.REGISTER, "IN-AAAAAAAAAAAA",
        {"passport": None, "location": "", "info": ""}, timestamp=ts)])
    store.append_events([new_event(
        EventKind.BAND_UPDATE, "IN-AAAAAAAAAAAA",
        {"band": 2, "reason": "forged", "confirmed_positive": False, "triggered_by": []},
        timestamp=ts)])
    with pytest.raises(ReplayConflict):
        replay_projections(store)


def test_registry_state_apply_rejects_unknown_subject():
    state = RegistryState()
    event = new_event(EventKind.INFO_UPDATE, "IN-GHOSTGHOSTGH", {"text": "x"})
    with pytest.raises(ReplayConflict):
        state.apply(event)
