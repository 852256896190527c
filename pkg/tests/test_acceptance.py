"""End-to-end acceptance gates.

Each test exercises one system-level guarantee at scale and prints a
single pass/fail line, so a full run reads as a scorecard.  Run with
``pytest tests/test_acceptance.py -v -s``.
"""
import csv
import random
import threading
from importlib import resources
from time import perf_counter

from fabric import DR_PW, PAT_PW, api, build_cloud, fail, login, ok, seed
from oracle import (
    ID_GRAMMARS,
    correct_links,
    linkage_join_candidates,
    mutate_id,
    oracle_scan_position,
    random_valid_id,
)
from test_federation import DIRECTORY, build_world

from ghr.audit import APPEND, FOREIGN_FORWARD, READ, AuditLog, verify_lines
from ghr.clock import ManualClock
from ghr.errors import MalformedId
from ghr.harness import Topology, run_scenario, sweep, verify_effects
from ghr.ids import (
    HospitalId,
    MinistryId,
    PatientId,
    PhysicianId,
    RootId,
    kind_of,
    parse_id,
)
from ghr.policy import (
    LocationClass,
    PresenceKind,
    Relationship,
    RequesterKind,
    decide_access,
)
from ghr.sealing import new_signing_key, unseal
from ghr.wire import seal_envelope


def note(num: int, passed: bool, detail: str) -> None:
    print(f"\n[acceptance {num:02d}] {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, detail


def test_01_access_matrix_matches_frozen_table():
    started = perf_counter()
    raw = resources.files("ghr.data").joinpath("access_matrix.csv").read_text()
    rows = list(csv.DictReader(raw.splitlines()))
    mismatches = 0
    for row in rows:
        scope = decide_access(
            RequesterKind(row["requester"]),
            LocationClass(row["location"]),
            PresenceKind(row["presence"]),
            Relationship(
                row["registered_at_hospital"] == "yes",
                row["previously_treated"] == "yes",
                row["on_trusted_list"] == "yes",
            ),
        )
        axes = "+".join(sorted(a.value for a in scope.searchable_by))
        if (
            scope.level.value != row["level"]
            or axes != row["searchable_by"]
            or scope.identifiers_visible.value != row["identifiers_visible"]
            or ("yes" if scope.can_write_medical else "no") != row["can_write_medical"]
        ):
            mismatches += 1
    elapsed = perf_counter() - started
    passed = len(rows) == 432 and mismatches == 0 and elapsed < 1.0
    note(1, passed, f"{len(rows) - mismatches}/432 decision rows match the table in {elapsed:.3f}s")


def test_02_backend_dump_stays_unlinkable_for_fifty_patients():
    started = perf_counter()
    cloud, _ = build_cloud()
    world = seed(cloud)
    hospital_session = world["hos_session"]
    truth = {}
    for i in range(50):
        name = f"Join Probe {i:03d}"
        created = ok(
            api(
                cloud,
                "register_patient",
                session=hospital_session,
                display_name=name,
                province="ALX",
                province_number=2,
                city="MAN",
                city_number=4,
                password=f"probe-pw-{i}",
                contact={"phone": f"+20-55-{i:03d}", "address": f"flat {i}"},
                insurance={"payer": "NationalCare"},
            )
        )
        pid = created["patient_id"]
        hit = ok(api(cloud, "search", session=hospital_session, query=name))["hits"][0]
        truth[pid] = hit["sections"]
        ok(
            api(
                cloud,
                "append_entry",
                session=hospital_session,
                virtual_id=hit["sections"]["medical"],
                entry_kind="case",
                body={"summary": f"observation round {i}"},
                hospital_tag=world["hospital"],
            )
        )

    dump = cloud.vault.dump()
    blind_links = correct_links(linkage_join_candidates(dump), truth)

    leaked_pid = sorted(truth)[25]
    pat_session = login(cloud, leaked_pid, "probe-pw-25")["session"]
    ok(api(cloud, "grant_trust", session=pat_session, grantee=world["physician"], kinds=["medical"]))
    grant = cloud.gateway.trust.grants_of(leaked_pid)[0]
    blob = cloud.vault.dump()["grant_unlocks"][0]["blob"]
    payload = unseal(bytes.fromhex(grant.key_hex), blob, aad=f"grant:{grant.grant_id}")
    leaked_links = correct_links(
        linkage_join_candidates(cloud.vault.dump(), unsealed_payloads=[payload]), truth
    )
    elapsed = perf_counter() - started
    passed = (
        blind_links == set()
        and leaked_links == {(leaked_pid, truth[leaked_pid]["medical"])}
        and elapsed < 60.0
    )
    note(
        2,
        passed,
        f"join oracle: {len(blind_links)} links from the raw dump, "
        f"{len(leaked_links)} after one grant key leaks, {elapsed:.1f}s",
    )


def test_03_one_time_codes_redeem_exactly_once():
    cloud, clock = build_cloud()
    world = seed(cloud)
    patient = world["patients"]["Omar Nabil"]
    pat_session = login(cloud, patient, PAT_PW)["session"]
    dr_session = login(cloud, world["physician"], DR_PW)["session"]
    ttl = cloud.config.otp_ttl_s

    def redeem(code):
        return api(cloud, "otp_redeem", session=dr_session, patient_id=patient, code=code)

    double_spends = 0
    races = 0
    late_redemptions = 0
    expiries = 0
    stale_accepted = 0
    regenerations = 0

    for trial in range(1000):
        code = ok(api(cloud, "otp_generate", session=pat_session))["code"]
        mode = trial % 3
        if mode == 0:
            races += 1
            barrier = threading.Barrier(2)
            outcomes = []

            def attempt():
                barrier.wait()
                outcomes.append(redeem(code))

            threads = [threading.Thread(target=attempt) for _ in range(2)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            wins = sum(1 for r in outcomes if r.get("ok"))
            if wins != 1:
                double_spends += 1
        elif mode == 1:
            expiries += 1
            clock.advance(ttl + 1)
            if redeem(code).get("ok"):
                late_redemptions += 1
        else:
            regenerations += 1
            fresh = ok(api(cloud, "otp_generate", session=pat_session))["code"]
            if redeem(code).get("ok"):
                stale_accepted += 1
            assert ok(redeem(fresh))["patient_id"] == patient

    passed = double_spends == 0 and late_redemptions == 0 and stale_accepted == 0
    note(
        3,
        passed,
        f"{races} races each redeemed exactly once, {late_redemptions}/{expiries} expired codes "
        f"accepted, {stale_accepted}/{regenerations} superseded codes accepted",
    )


def test_04_backend_executes_nothing_unsigned():
    cloud, clock = build_cloud()
    transport = cloud.transport
    control = seal_envelope(
        cloud.gateway_name,
        {
            "op": "patient_init",
            "args": {
                "patient_id": "EG.ALX-02.MAN-004.0000AA",
                "password": "pw",
                "biometric_digest": None,
                "contact": None,
                "insurance": None,
            },
        },
        cloud._signing_key,
        cloud._channel_key,
        clock.now(),
    )
    assert transport.call(cloud.backend_name, {"envelope": control.to_wire()})["ok"]
    baseline = cloud.vault.ops_completed

    attacker = new_signing_key()
    probes = []
    junk = [
        {},
        {"op": "resolve", "args": {"patient_id": "EG.ALX-02.MAN-004.0000AA"}},
        {"envelope": "hello"},
        {"envelope": {"sender": cloud.gateway_name, "nonce": "00", "timestamp": 1.0}},
    ]
    for i in range(40):
        probes.append(junk[i % len(junk)])
    for _ in range(30):
        env = seal_envelope(
            cloud.gateway_name, {"op": "status", "args": {}}, attacker, cloud._channel_key, clock.now()
        )
        probes.append({"envelope": env.to_wire()})
    for _ in range(30):
        env = seal_envelope(
            cloud.gateway_name, {"op": "status", "args": {}}, cloud._signing_key, cloud._channel_key, clock.now()
        ).to_wire()
        body = env["payload_ct"]
        env["payload_ct"] = ("0" if body[0] != "0" else "1") + body[1:]
        probes.append({"envelope": env})

    rejected = sum(
        1
        for probe in probes
        if transport.call(cloud.backend_name, probe) == {"ok": False, "error": "envelope-rejected"}
    )

    replays_rejected = 0
    for _ in range(20):
        env = seal_envelope(
            cloud.gateway_name, {"op": "status", "args": {}}, cloud._signing_key, cloud._channel_key, clock.now()
        ).to_wire()
        assert transport.call(cloud.backend_name, {"envelope": env})["ok"]
        if transport.call(cloud.backend_name, {"envelope": env}) == {
            "ok": False,
            "error": "envelope-rejected",
        }:
            replays_rejected += 1

    executed = cloud.vault.ops_completed - baseline
    passed = rejected == len(probes) == 100 and executed == 0 and replays_rejected == 20
    note(
        4,
        passed,
        f"{rejected}/100 forged submissions rejected, {executed} reached the record store, "
        f"{replays_rejected}/20 replays rejected",
    )


def test_05_audit_chain_is_tamper_evident_at_scale():
    started = perf_counter()
    clock = ManualClock(1000.0)
    log = AuditLog(clock=clock)
    total = 10_000
    for i in range(total):
        clock.advance(0.5)
        log.record(
            actor=f"ACTOR-{i % 23}",
            action=APPEND if i % 4 else READ,
            target=f"section-{i % 97}",
            detail={"marker": i},
        )
    clean = log.verify()
    seqs_ok = [e.seq for e in log.events()] == list(range(1, total + 1))
    markers_ok = {e.detail["marker"] for e in log.events()} == set(range(total))

    lines = log.lines()
    rng = random.Random(20260823)
    detected = 0
    located = 0
    trials = 100
    for _ in range(trials):
        idx = rng.randrange(total)
        line = lines[idx]
        pos = rng.randrange(len(line))
        flipped = chr(ord(line[pos]) ^ (1 << rng.randrange(7)))
        tampered = list(lines)
        tampered[idx] = line[:pos] + flipped + line[pos + 1 :]
        report = verify_lines(tampered)
        if not report.ok:
            detected += 1
            if report.first_bad_seq == idx + 1:
                located += 1
    elapsed = perf_counter() - started
    passed = clean.ok and seqs_ok and markers_ok and detected == trials and located == trials
    note(
        5,
        passed,
        f"{total}-event chain verifies, 0 gaps, {detected}/{trials} bit flips detected, "
        f"{located}/{trials} at the right sequence, {elapsed:.1f}s",
    )


def test_06_cross_border_access_follows_the_patient_flag():
    world = build_world()
    egypt, sweden = world["egypt"], world["sweden"]
    transport = world["transport"]
    hospital_session = world["eg"]["hos_session"]
    eg_dr = login(egypt, world["eg"]["physician"], DR_PW, world["eg"]["hospital_ctx"])["session"]

    patients = list(world["eg"]["patients"].values())
    for i in range(18):
        created = ok(
            api(
                egypt,
                "register_patient",
                session=hospital_session,
                display_name=f"Border Case {i:02d}",
                province="ALX",
                province_number=2,
                city="MAN",
                city_number=4,
                password=PAT_PW,
                contact={"phone": f"+20-66-{i:02d}", "address": "transit"},
                insurance={"payer": "NationalCare"},
            )
        )
        patients.append(created["patient_id"])
    for pid in patients:
        medical = ok(api(egypt, "search", session=eg_dr, patient_id=pid))["hits"][0]["sections"]["medical"]
        ok(
            api(
                egypt,
                "append_entry",
                session=eg_dr,
                virtual_id=medical,
                entry_kind="case",
                body={"summary": "baseline"},
                hospital_tag=world["eg"]["hospital"],
                physician_tag=world["eg"]["physician"],
            )
        )

    se_dr = login(sweden, world["se"]["physician"], DR_PW, world["se"]["hospital_ctx"])["session"]
    denied = 0
    for pid in patients:
        reply = api(sweden, "search", session=se_dr, country="EG", patient_id=pid)
        if reply.get("ok") is False and reply.get("error") == "access-denied-by-patient":
            denied += 1

    for pid in patients:
        session = login(egypt, pid, PAT_PW)["session"]
        ok(api(egypt, "set_global_access", session=session, enabled=True))

    served = 0
    for pid in patients:
        reply = api(sweden, "search", session=se_dr, country="EG", patient_id=pid)
        if (
            reply.get("ok")
            and reply["result"]["scope"]["level"] == "medical_only"
            and reply["result"]["sections"]["medical"]["entries"]
        ):
            served += 1

    outgoing = [
        e.detail["nonce"]
        for e in sweden.audit.select(lambda e: e.action == FOREIGN_FORWARD)
        if e.detail.get("direction") == "out"
    ]
    incoming = [
        e.detail["nonce"]
        for e in egypt.audit.select(lambda e: e.action == FOREIGN_FORWARD)
        if e.detail.get("direction") == "in"
    ]
    matched = len(set(outgoing) & set(incoming))

    transport.set_down(DIRECTORY)
    outage = api(sweden, "search", session=se_dr, country="NO", patient_id=patients[0])
    transport.set_down(DIRECTORY, down=False)
    transport.set_down(egypt.gateway_name)
    cloud_down = api(sweden, "search", session=se_dr, country="EG", patient_id=patients[0])
    transport.set_down(egypt.gateway_name, down=False)

    passed = (
        denied == len(patients)
        and served == len(patients)
        and matched == len(outgoing) == len(incoming)
        and outage.get("error") == "directory-unreachable"
        and outage.get("retriable") is True
        and cloud_down.get("error") == "foreign-cloud-unreachable"
        and cloud_down.get("retriable") is True
    )
    note(
        6,
        passed,
        f"{denied}/{len(patients)} unflagged lookups denied, {served}/{len(patients)} flagged served, "
        f"{matched} forward audits nonce-matched on both shores, outages retriable",
    )


def test_07_hundred_user_shift_runs_clean():
    topology = Topology()
    started = perf_counter()
    result = run_scenario(topology, users=100, ramp_s=20.0)
    verify = verify_effects(result.world, result.cohorts, result.expected)
    elapsed = perf_counter() - started

    smoke = run_scenario(topology, users=800, ramp_s=160.0)
    smoke_verify = verify_effects(smoke.world, smoke.cohorts, smoke.expected)

    passed = (
        len(result.samples) == 9000
        and result.error_count == 0
        and verify.ok
        and elapsed < 300.0
        and len(smoke.samples) == 72_000
        and smoke.error_count == 0
        and smoke_verify.ok
    )
    note(
        7,
        passed,
        f"9000 requests, {result.error_count} errors, readback "
        f"{'ok' if verify.ok else 'failed'} in {elapsed:.1f}s; "
        f"800-user smoke: {smoke.error_count} errors in {len(smoke.samples)} requests",
    )


def test_08_latency_rises_with_load_and_settles_after_warmup():
    report = sweep(Topology(), user_counts=(10, 50, 100))
    averages = [p["avg_ms"] for p in report.points]
    settled = all(p["warmup"]["settled"] for p in report.points)
    clean = all(p["errors"] == 0 and p["verified"] for p in report.points)
    passed = report.averages_non_decreasing() and settled and clean
    note(
        8,
        passed,
        "average latency "
        + " -> ".join(f"{a:.1f}ms" for a in averages)
        + f" over users {[p['users'] for p in report.points]}, warm-up settled at every point",
    )


def test_09_identifier_grammars_hold_under_fuzz():
    parsers = {
        "patient": PatientId.parse,
        "physician": PhysicianId.parse,
        "hospital": HospitalId.parse,
        "ministry": MinistryId.parse,
        "root": RootId.parse,
    }
    rng = random.Random(424242)
    per_kind = 10_000
    round_trips = 0
    rejected_right = 0
    total_mutations = 0
    for kind in ID_GRAMMARS:
        for _ in range(per_kind):
            text = random_valid_id(rng, kind)
            parsed = parsers[kind](text)
            generic = parse_id(text)
            if str(parsed) == text and str(generic) == text and kind_of(generic) == kind:
                round_trips += 1
        for _ in range(per_kind):
            text = mutate_id(rng, kind, random_valid_id(rng, kind))
            expected = oracle_scan_position(kind, text)
            total_mutations += 1
            try:
                parsers[kind](text)
            except MalformedId as err:
                if err.position == expected:
                    rejected_right += 1
    wanted = per_kind * len(ID_GRAMMARS)
    passed = round_trips == wanted and rejected_right == total_mutations == wanted
    note(
        9,
        passed,
        f"{round_trips}/{wanted} random ids round-trip, "
        f"{rejected_right}/{total_mutations} mutations rejected at the oracle's position",
    )
