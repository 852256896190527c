"""Audit chain behaviour: linkage, tamper evidence, file round-trips."""
import json
import random
from hashlib import sha256

from ghr.audit import (
    AuditLog,
    GENESIS_HASH,
    NotificationStore,
    RECORD_ACCESSED,
    RELAY_MESSAGE,
    verify_file,
    verify_lines,
)
from ghr.clock import ManualClock


def build_log(n, *, path=None):
    clock = ManualClock(1000.0)
    log = AuditLog(clock=clock, path=path)
    for i in range(n):
        clock.advance(1.0)
        log.record(
            actor=f"EG.ALX-002.003.003.{i % 16:05X}",
            action="read" if i % 3 else "append",
            target=f"section:{i:032x}",
            location="clinic:9",
            detail={"n": i},
        )
    return log


def test_hash_recomputes_from_scratch():
    log = build_log(3)
    first = log.events()[0]
    payload = {
        "seq": 1,
        "actor": first.actor,
        "action": first.action,
        "target": first.target,
        "location": first.location,
        "timestamp": first.timestamp,
        "detail": {"n": 0},
        "prev_hash": GENESIS_HASH,
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    expected = sha256((canon + GENESIS_HASH).encode()).hexdigest()
    assert first.this_hash == expected
    assert log.events()[1].prev_hash == expected


def test_empty_chain_verifies():
    report = verify_lines([])
    assert report.ok and report.events == 0


def test_chain_verifies_clean():
    log = build_log(200)
    report = log.verify()
    assert report.ok
    assert report.first_bad_seq is None
    assert report.events == 200


def test_single_bit_flips_are_detected_with_position():
    log = build_log(60)
    lines = log.lines()
    rng = random.Random(11)
    for _ in range(40):
        idx = rng.randrange(len(lines))
        line = lines[idx]
        byte_pos = rng.randrange(len(line))
        flipped = chr(ord(line[byte_pos]) ^ (1 << rng.randrange(7)))
        tampered = list(lines)
        tampered[idx] = line[:byte_pos] + flipped + line[byte_pos + 1 :]
        report = verify_lines(tampered)
        assert not report.ok
        assert report.first_bad_seq == idx + 1, (idx, byte_pos)


def test_dropped_and_reordered_lines_are_detected():
    lines = build_log(10).lines()
    dropped = lines[:4] + lines[5:]
    report = verify_lines(dropped)
    assert not report.ok and report.first_bad_seq == 5
    swapped = list(lines)
    swapped[2], swapped[3] = swapped[3], swapped[2]
    report = verify_lines(swapped)
    assert not report.ok and report.first_bad_seq == 3
    truncated = lines[:6]
    assert verify_lines(truncated).ok  # prefix of a valid chain is a valid chain


def test_append_after_reload_keeps_chain(tmp_path):
    path = tmp_path / "audit.ndjson"
    build_log(25, path=str(path))
    reloaded = AuditLog(clock=ManualClock(5000.0), path=str(path))
    assert len(reloaded) == 25
    reloaded.record(actor="WHO", action="register", target="MOH.EG")
    report = verify_file(str(path))
    assert report.ok and report.events == 26


def test_file_round_trip_is_bit_exact(tmp_path):
    path = tmp_path / "audit.ndjson"
    log = build_log(30, path=str(path))
    raw = path.read_text()
    assert raw == "".join(line + "\n" for line in log.lines())
    assert verify_file(str(path)).ok


def test_notifications_unread_first_and_isolation():
    clock = ManualClock(10.0)
    store = NotificationStore(clock=clock)
    store.post("EG.ALX-02.MAN-004.000001", RECORD_ACCESSED, {"by": "a"})
    clock.advance(1)
    store.post("EG.ALX-02.MAN-004.000002", RELAY_MESSAGE, {"by": "b"})
    clock.advance(1)
    store.post("EG.ALX-02.MAN-004.000001", RELAY_MESSAGE, {"by": "c"})

    got = store.fetch("EG.ALX-02.MAN-004.000001")
    assert [n.body["by"] for n in got] == ["a", "c"]
    assert store.pending("EG.ALX-02.MAN-004.000001") == 0
    assert store.pending("EG.ALX-02.MAN-004.000002") == 1
    # already marked read; polling again returns nothing new
    assert store.fetch("EG.ALX-02.MAN-004.000001") == []
    full = store.fetch("EG.ALX-02.MAN-004.000001", include_read=True)
    assert len(full) == 2
