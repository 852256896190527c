"""Error types shared across the fabric.

Every error carries a short stable ``code`` so callers (and the wire
protocol) can react without string-matching human prose.  ``retriable``
marks faults the caller may simply retry, such as an unreachable
directory node.
"""
from __future__ import annotations


class FabricError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, code: str, message: str = "", *, retriable: bool = False):
        super().__init__(message or code)
        self.code = code
        self.retriable = retriable

    def to_wire(self) -> dict:
        return {"ok": False, "error": self.code, "message": str(self), "retriable": self.retriable}


class MalformedId(FabricError):
    """An identifier failed its grammar.

    ``position`` is the index of the first offending character in the
    normalized input and ``field`` names the grammar field it falls in.
    """

    def __init__(self, message: str, *, position: int, field: str):
        super().__init__("malformed-id", message)
        self.position = position
        self.field = field


class AuthError(FabricError):
    """Login, session or presence-proof problems."""


class AccessDenied(FabricError):
    """The caller is authenticated but not allowed to do this."""


class NotFound(FabricError):
    """A referenced actor, record or section does not exist."""


class Conflict(FabricError):
    """The operation collides with existing state (duplicates, replays)."""


class TokenError(FabricError):
    """One-time token lifecycle violations."""


class TransportError(FabricError):
    """A peer was unreachable or an envelope failed verification."""


class ConfigError(FabricError):
    """A configuration file could not be used."""


class VerificationError(FabricError):
    """A post-run integrity check found a discrepancy."""
