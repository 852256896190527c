"""Hash-chained audit log and patient notification queue.

Every state-changing or record-revealing operation appends one event.
Events form a hash chain: each event's hash covers its own canonical
serialization plus the previous hash, so editing, dropping, or
reordering any line invalidates every later link.  The log writes
newline-delimited canonical JSON; a verifier can re-derive every hash
from the file alone.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from hashlib import sha256
from typing import Callable, Iterable, Iterator

from .clock import Clock, SystemClock

GENESIS_HASH = "0" * 64

# Event verbs used across the fabric.  The set is open; these constants
# exist so call sites and tests agree on spelling.
LOGIN = "login"
LOGOUT = "logout"
REGISTER = "register"
VERIFY = "verify"
OTP_ISSUE = "otp_issue"
OTP_REDEEM = "otp_redeem"
READ = "read"
APPEND = "append"
SEARCH = "search"
GRANT = "grant"
REVOKE = "revoke"
FLAG_SET = "flag_set"
FOREIGN_FORWARD = "foreign_forward"
ESCROW_UNLOCK = "escrow_unlock"
RELAY_SEND = "relay_send"
LOCATION_CHALLENGE = "location_challenge"
LOCATION_CONFIRM = "location_confirm"
LOCATION_REJECTED = "location_rejected"
PUBLISH = "publish"


def _canon(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    actor: str
    action: str
    target: str
    location: str
    timestamp: float
    detail: dict
    prev_hash: str
    this_hash: str

    def body(self) -> dict:
        """The hashed portion: every field except this_hash."""
        return {
            "seq": self.seq,
            "actor": self.actor,
            "action": self.action,
            "target": self.target,
            "location": self.location,
            "timestamp": self.timestamp,
            "detail": self.detail,
            "prev_hash": self.prev_hash,
        }

    def line(self) -> str:
        row = self.body()
        row["this_hash"] = self.this_hash
        return _canon(row)


def chain_hash(body: dict, prev_hash: str) -> str:
    return sha256((_canon(body) + prev_hash).encode("ascii")).hexdigest()


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    first_bad_seq: int | None
    events: int


class AuditLog:
    """Append-only event chain for one cloud.

    A failed append must abort the enclosing operation, so ``record``
    raises on I/O errors instead of swallowing them.
    """

    def __init__(self, *, clock: Clock | None = None, path: str | None = None):
        self._clock = clock or SystemClock()
        self._path = path
        self._events: list[AuditEvent] = []
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            with open(path, "r", encoding="ascii") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if line:
                        self._events.append(_event_from_line(line))

    def __len__(self) -> int:
        return len(self._events)

    def record(
        self,
        *,
        actor: str,
        action: str,
        target: str = "",
        location: str = "",
        detail: dict | None = None,
        timestamp: float | None = None,
    ) -> AuditEvent:
        with self._lock:
            prev = self._events[-1].this_hash if self._events else GENESIS_HASH
            body = {
                "seq": len(self._events) + 1,
                "actor": actor,
                "action": action,
                "target": target,
                "location": location,
                "timestamp": self._clock.now() if timestamp is None else timestamp,
                "detail": detail or {},
                "prev_hash": prev,
            }
            event = AuditEvent(this_hash=chain_hash(body, prev), **body)
            if self._path:
                with open(self._path, "a", encoding="ascii") as fh:
                    fh.write(event.line() + "\n")
            self._events.append(event)
            return event

    def events(self) -> tuple[AuditEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def tail(self, count: int) -> tuple[AuditEvent, ...]:
        """Most recent events, cheapest way to build an activity feed."""
        with self._lock:
            if count <= 0:
                return ()
            return tuple(self._events[-count:])

    def select(self, predicate: Callable[[AuditEvent], bool]) -> list[AuditEvent]:
        return [ev for ev in self.events() if predicate(ev)]

    def verify(self) -> ChainReport:
        return verify_lines(ev.line() for ev in self.events())

    def lines(self) -> list[str]:
        return [ev.line() for ev in self.events()]


def _event_from_line(line: str) -> AuditEvent:
    row = json.loads(line)
    return AuditEvent(**row)


def verify_lines(lines: Iterable[str]) -> ChainReport:
    """Check an exported chain line by line.

    Returns the seq of the first event whose serialization, hash,
    linkage, or ordering does not hold.  An unparseable or non-canonical
    line counts as bad at its own position.
    """
    prev = GENESIS_HASH
    count = 0
    for index, line in enumerate(_strip_lines(lines), start=1):
        count = index
        try:
            row = json.loads(line)
            event = AuditEvent(**row)
        except (ValueError, TypeError):
            return ChainReport(False, index, count)
        if event.line() != line:
            return ChainReport(False, index, count)
        if event.seq != index or event.prev_hash != prev:
            return ChainReport(False, index, count)
        if chain_hash(event.body(), prev) != event.this_hash:
            return ChainReport(False, index, count)
        prev = event.this_hash
    return ChainReport(True, None, count)


def verify_file(path: str) -> ChainReport:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return verify_lines(fh)


def _strip_lines(lines: Iterable[str]) -> Iterator[str]:
    for line in lines:
        line = line.rstrip("\n")
        if line:
            yield line


# ---------------------------------------------------------------------------
# Notifications


RECORD_ACCESSED = "record_accessed"
FOREIGN_ATTEMPT = "foreign_attempt"
RELAY_MESSAGE = "relay_message"
LOCATION_PENDING = "location_pending"

_KINDS = (RECORD_ACCESSED, FOREIGN_ATTEMPT, RELAY_MESSAGE, LOCATION_PENDING)


@dataclass
class Notification:
    id: int
    recipient: str
    kind: str
    body: dict
    created_at: float
    read: bool = field(default=False)

    def to_wire(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "body": self.body,
            "created_at": self.created_at,
            "read": self.read,
        }


class NotificationStore:
    """Poll-based per-recipient notification queues."""

    def __init__(self, *, clock: Clock | None = None):
        self._clock = clock or SystemClock()
        self._by_recipient: dict[str, list[Notification]] = {}
        self._next_id = 1
        self._lock = threading.Lock()

    def post(self, recipient: str, kind: str, body: dict) -> Notification:
        if kind not in _KINDS:
            raise ValueError(f"unknown notification kind: {kind}")
        with self._lock:
            note = Notification(self._next_id, recipient, kind, dict(body), self._clock.now())
            self._next_id += 1
            self._by_recipient.setdefault(recipient, []).append(note)
            return note

    def fetch(self, recipient: str, *, include_read: bool = False, mark_read: bool = True) -> list[Notification]:
        """Unread notifications oldest-first; optionally the read tail too."""
        with self._lock:
            queue = self._by_recipient.get(recipient, [])
            unread = [n for n in queue if not n.read]
            picked = unread + [n for n in queue if n.read] if include_read else list(unread)
            if mark_read:
                for note in unread:
                    note.read = True
            return picked

    def pending(self, recipient: str) -> int:
        with self._lock:
            return sum(1 for n in self._by_recipient.get(recipient, []) if not n.read)
