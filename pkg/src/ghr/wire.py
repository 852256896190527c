"""Signed envelopes for node-to-node traffic.

Every message between nodes travels as an envelope: the payload is sealed
with an AESGCM channel key, and the whole envelope body is signed by the
sender. Receivers verify the signature against a pinned public key, refuse
nonces they have already seen, and only then decrypt. A node that receives
anything else answers with a rejection and performs no work.
"""
from __future__ import annotations

import json
import secrets
import struct
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import TransportError
from .sealing import check_signature, seal, sign, unseal


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Envelope:
    sender: str
    nonce: str
    timestamp: float
    payload_ct: str
    signature: str

    def signing_base(self) -> bytes:
        body = {
            "nonce": self.nonce,
            "payload_ct": self.payload_ct,
            "sender": self.sender,
            "timestamp": self.timestamp,
        }
        return _canon(body).encode()

    def to_wire(self) -> dict:
        return {
            "sender": self.sender,
            "nonce": self.nonce,
            "timestamp": self.timestamp,
            "payload_ct": self.payload_ct,
            "signature": self.signature,
        }

    @classmethod
    def from_wire(cls, blob: dict) -> "Envelope":
        try:
            return cls(
                sender=str(blob["sender"]),
                nonce=str(blob["nonce"]),
                timestamp=float(blob["timestamp"]),
                payload_ct=str(blob["payload_ct"]),
                signature=str(blob["signature"]),
            )
        except (KeyError, TypeError, ValueError):
            raise TransportError("envelope-rejected", "malformed envelope")


def seal_envelope(sender: str, payload: dict, signing_key, channel_key: bytes, now: float) -> Envelope:
    nonce = secrets.token_hex(16)
    payload_ct = seal(channel_key, payload, aad=f"env:{sender}:{nonce}")
    draft = Envelope(sender=sender, nonce=nonce, timestamp=now, payload_ct=payload_ct, signature="")
    signature = sign(signing_key, draft.signing_base())
    return Envelope(sender=sender, nonce=nonce, timestamp=now, payload_ct=payload_ct, signature=signature)


class ReplayGuard:
    """Remembers every nonce a receiver has accepted."""

    def __init__(self):
        self._seen: set[str] = set()

    def admit(self, nonce: str) -> bool:
        if nonce in self._seen:
            return False
        self._seen.add(nonce)
        return True


def open_envelope(
    envelope: Envelope,
    key_of: Callable[[str], Optional[str]],
    channel_key: bytes,
    guard: ReplayGuard,
    now: float,
    max_age_s: Optional[float] = None,
) -> dict:
    """Verify and decrypt one envelope, or raise ``envelope-rejected``.

    ``key_of`` maps a sender name to its pinned hex public key; returning
    None marks the sender as unknown. The guard is only consulted after the
    signature checks out, so an attacker cannot burn nonces for free.
    """
    public_hex = key_of(envelope.sender)
    if public_hex is None:
        raise TransportError("envelope-rejected", f"unknown sender {envelope.sender!r}")
    if not check_signature(public_hex, envelope.signing_base(), envelope.signature):
        raise TransportError("envelope-rejected", "bad signature")
    if max_age_s is not None and now - envelope.timestamp > max_age_s:
        raise TransportError("envelope-rejected", "stale envelope")
    if not guard.admit(envelope.nonce):
        raise TransportError("envelope-rejected", "replayed nonce")
    try:
        return unseal(channel_key, envelope.payload_ct, aad=f"env:{envelope.sender}:{envelope.nonce}")
    except Exception:
        raise TransportError("envelope-rejected", "payload does not decrypt")


# Stream framing: 4-byte big-endian length, then that many bytes of JSON.

_MAX_FRAME = 8 * 1024 * 1024


def encode_frame(message: dict) -> bytes:
    body = json.dumps(message).encode()
    if len(body) > _MAX_FRAME:
        raise TransportError("frame-too-large", f"{len(body)} bytes")
    return struct.pack(">I", len(body)) + body


def read_frame(stream) -> Optional[dict]:
    """Read one frame from a file-like stream, or None at EOF."""
    header = stream.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise TransportError("truncated-frame", "short length header")
    (length,) = struct.unpack(">I", header)
    if length > _MAX_FRAME:
        raise TransportError("frame-too-large", f"{length} bytes")
    body = b""
    while len(body) < length:
        chunk = stream.read(length - len(body))
        if not chunk:
            raise TransportError("truncated-frame", "stream closed mid-frame")
        body += chunk
    return json.loads(body)
