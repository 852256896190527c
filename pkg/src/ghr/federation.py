"""Country directory and cross-border lookup forwarding.

One directory node, run by the root health authority, maps country codes
to gateway addresses and signing keys. A cloud only appears there after
the root authority signs its descriptor and the cloud itself confirms a
national ministry is registered. Cross-border lookups are signed by the
origin gateway and verified by the target against the directory entry,
so neither side needs pre-shared state beyond the directory.
"""
from __future__ import annotations

import json
import secrets
from dataclasses import dataclass

from . import audit as verbs
from .audit import AuditLog
from .clock import Clock
from .errors import AuthError, Conflict, FabricError, NotFound, TransportError
from .sealing import check_signature, sign


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class CloudDescriptor:
    country: str
    gateway: str
    public_key_hex: str
    published_at: float

    def to_wire(self) -> dict:
        return {
            "country": self.country,
            "gateway": self.gateway,
            "public_key_hex": self.public_key_hex,
            "published_at": self.published_at,
        }

    @classmethod
    def from_wire(cls, blob: dict) -> "CloudDescriptor":
        return cls(
            country=str(blob["country"]).upper(),
            gateway=str(blob["gateway"]),
            public_key_hex=str(blob["public_key_hex"]),
            published_at=float(blob.get("published_at", 0.0)),
        )


class DirectoryNode:
    """The root authority's country-to-cloud catalogue."""

    def __init__(self, *, clock: Clock, who_public_hex: str, transport, audit: AuditLog | None = None):
        self._clock = clock
        self._who_public_hex = who_public_hex
        self._transport = transport
        self._audit = audit
        self._descriptors: dict[str, CloudDescriptor] = {}

    def handle(self, message: dict) -> dict:
        op = str(message.get("op", ""))
        try:
            if op == "publish":
                return {"ok": True, "result": self._publish(message)}
            if op == "resolve":
                country = str(message.get("country", "")).upper()
                descriptor = self._descriptors.get(country)
                if descriptor is None:
                    raise NotFound("unknown-country", f"no cloud published for {country}")
                return {"ok": True, "result": descriptor.to_wire()}
            if op == "list":
                return {
                    "ok": True,
                    "result": {"descriptors": [d.to_wire() for d in self._descriptors.values()]},
                }
            raise NotFound("unknown-op", f"directory has no operation {op!r}")
        except FabricError as err:
            return err.to_wire()

    def _publish(self, message: dict) -> dict:
        blob = message.get("descriptor") or {}
        signature = str(message.get("signature", ""))
        if not check_signature(self._who_public_hex, _canon(blob).encode(), signature):
            raise AuthError("publish-not-authorized", "descriptor is not signed by the root authority")
        descriptor = CloudDescriptor.from_wire(blob)
        status = self._transport.call(descriptor.gateway, {"op": "federation_status"})
        result = status.get("result") or {}
        if not status.get("ok") or result.get("country") != descriptor.country:
            raise Conflict("cloud-mismatch", "gateway does not answer for that country")
        if not result.get("moh_registered"):
            raise Conflict("moh-missing", "country has no registered ministry yet")
        if result.get("public_key_hex") != descriptor.public_key_hex:
            raise Conflict("cloud-mismatch", "published key does not match the gateway")
        self._descriptors[descriptor.country] = descriptor
        if self._audit is not None:
            self._audit.record(
                actor="WHO",
                action=verbs.PUBLISH,
                target=descriptor.country,
                location="directory",
                detail={"gateway": descriptor.gateway},
            )
        return descriptor.to_wire()


def publish_descriptor(transport, directory_name: str, descriptor: CloudDescriptor, who_signing_key) -> dict:
    """Sign a descriptor with the root authority key and submit it."""
    blob = descriptor.to_wire()
    message = {
        "op": "publish",
        "descriptor": blob,
        "signature": sign(who_signing_key, _canon(blob).encode()),
    }
    reply = transport.call(directory_name, message)
    if not reply.get("ok"):
        raise FabricError(reply.get("error", "publish-failed"), reply.get("message", ""))
    return reply["result"]


class FederationClient:
    """A gateway's view of the rest of the world."""

    def __init__(
        self,
        country: str,
        gateway_name: str,
        *,
        signing_key,
        transport,
        directory_name: str,
        clock: Clock,
        audit: AuditLog,
    ):
        self.country = country.upper()
        self.gateway_name = gateway_name
        self._signing_key = signing_key
        self._transport = transport
        self._directory_name = directory_name
        self._clock = clock
        self._audit = audit

    def resolve_country(self, country: str) -> CloudDescriptor:
        try:
            reply = self._transport.call(self._directory_name, {"op": "resolve", "country": country.upper()})
        except TransportError:
            raise TransportError("directory-unreachable", "country directory is down", retriable=True)
        if not reply.get("ok"):
            raise FabricError(reply.get("error", "unknown-country"), reply.get("message", ""))
        return CloudDescriptor.from_wire(reply["result"])

    def lookup(self, country: str, *, requester: str, patient_id: str, presence: dict | None = None) -> dict:
        descriptor = self.resolve_country(country)
        request = {
            "origin_country": self.country,
            "requester": requester,
            "patient_id": patient_id,
            "nonce": secrets.token_hex(16),
            "timestamp": self._clock.now(),
        }
        if presence:
            request["presence"] = presence
        signature = sign(self._signing_key, _canon(request).encode())
        self._audit.record(
            actor=requester,
            action=verbs.FOREIGN_FORWARD,
            target=patient_id,
            location=f"foreign:{descriptor.country}",
            detail={"nonce": request["nonce"], "direction": "out"},
        )
        try:
            reply = self._transport.call(
                descriptor.gateway,
                {"op": "foreign_lookup", "request": request, "signature": signature},
            )
        except TransportError:
            raise TransportError("foreign-cloud-unreachable", f"{descriptor.country} gateway is down", retriable=True)
        if not reply.get("ok"):
            raise FabricError(
                reply.get("error", "foreign-lookup-failed"),
                reply.get("message", ""),
                retriable=bool(reply.get("retriable")),
            )
        return reply["result"]

    def verify_incoming(self, request: dict, signature: str) -> CloudDescriptor:
        origin = str(request.get("origin_country", "")).upper()
        if not origin or origin == self.country:
            raise AuthError("federation-signature-invalid", "bad origin country")
        descriptor = self.resolve_country(origin)
        if not check_signature(descriptor.public_key_hex, _canon(request).encode(), signature):
            raise AuthError("federation-signature-invalid", "request is not signed by the origin gateway")
        return descriptor
