"""Back-end storage node: the only process that touches a record vault.

The node accepts exactly one message shape, a signed envelope from its own
cloud's gateway. Anything else, including a well-formed envelope signed by
the wrong key or carrying a reused nonce, is answered with a rejection
before any vault code runs.
"""
from __future__ import annotations

from typing import Optional

from .errors import FabricError, TransportError
from .policy import AccessScope
from .vault import (
    BiometricPresence,
    GrantAccess,
    PatientCredential,
    PatientKey,
    RecordVault,
    TokenPresence,
)
from .wire import Envelope, ReplayGuard, open_envelope


def authorization_from_wire(blob: dict):
    kind = blob.get("kind")
    if kind == "credential":
        return PatientCredential(password=str(blob["password"]))
    if kind == "patient_key":
        return PatientKey(key=bytes.fromhex(blob["key_hex"]))
    if kind == "token":
        return TokenPresence(token_id=str(blob["token_id"]), token_value=str(blob["token_value"]))
    if kind == "biometric":
        return BiometricPresence(digest=str(blob["digest"]))
    if kind == "grant":
        return GrantAccess(grant_id=str(blob["grant_id"]), key_hex=str(blob["key_hex"]))
    raise FabricError("bad-authorization", f"unknown authorization kind {kind!r}")


class BackendNode:
    def __init__(
        self,
        name: str,
        vault: RecordVault,
        *,
        gateway_name: str,
        gateway_public_hex: str,
        channel_key: bytes,
        clock,
        envelope_max_age_s: Optional[float] = None,
    ):
        self.name = name
        self.vault = vault
        self._gateway_name = gateway_name
        self._gateway_public_hex = gateway_public_hex
        self._channel_key = channel_key
        self._clock = clock
        self._guard = ReplayGuard()
        self._max_age = envelope_max_age_s
        self.rejected = 0

    def _key_of(self, sender: str) -> Optional[str]:
        if sender == self._gateway_name:
            return self._gateway_public_hex
        return None

    def handle(self, message: dict) -> dict:
        blob = message.get("envelope")
        if not isinstance(blob, dict):
            self.rejected += 1
            return {"ok": False, "error": "envelope-rejected"}
        try:
            envelope = Envelope.from_wire(blob)
            payload = open_envelope(
                envelope,
                self._key_of,
                self._channel_key,
                self._guard,
                self._clock.now(),
                max_age_s=self._max_age,
            )
        except TransportError:
            self.rejected += 1
            return {"ok": False, "error": "envelope-rejected"}
        try:
            result = self._dispatch(payload)
            return {"ok": True, "result": result}
        except FabricError as err:
            return err.to_wire()

    def _dispatch(self, payload: dict):
        op = payload.get("op")
        args = payload.get("args") or {}
        vault = self.vault
        if op == "patient_init":
            return vault.init_record(
                args["patient_id"],
                password=args["password"],
                biometric_digest=args.get("biometric_digest"),
                contact=args.get("contact"),
                insurance=args.get("insurance"),
            )
        if op == "patient_unlock":
            sections = vault.resolve_sections(
                args["patient_id"],
                PatientCredential(args["password"]),
                actor=args["patient_id"],
            )
            key = vault.patient_key(args["patient_id"], args["password"])
            return {"sections": sections, "key_hex": key.hex()}
        if op == "resolve":
            sections = vault.resolve_sections(
                args["patient_id"],
                authorization_from_wire(args["authorization"]),
                kinds=args.get("kinds"),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
            return {"sections": sections}
        if op == "id_resolve":
            sections = vault.id_resolve(
                args["patient_id"],
                args.get("kinds") or ["medical"],
                cause=args.get("cause", "id_search"),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
            return {"sections": sections}
        if op == "owner_of":
            owner, kind = vault.owner_of(
                args["virtual_id"],
                cause=args.get("cause", "relay"),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
            return {"patient_id": owner, "kind": kind}
        if op == "otp_unlock_create":
            vault.create_otp_unlock(
                args["token_id"], args["token_value"], args["patient_id"], args["sections"]
            )
            return {}
        if op == "otp_unlock_drop":
            vault.drop_otp_unlock(args["token_id"])
            return {}
        if op == "grant_unlock_create":
            vault.create_grant_unlock(
                args["grant_id"],
                args["key_hex"],
                args["grantee_id"],
                args["kinds"],
                args["patient_id"],
                args["sections"],
            )
            return {}
        if op == "grant_unlock_drop":
            vault.drop_grant_unlock(args["grant_id"])
            return {}
        if op == "read_section":
            return vault.read_section(
                args["virtual_id"],
                AccessScope.from_wire(args["scope"]),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
        if op == "append_entry":
            return vault.append_entry(
                args["virtual_id"],
                AccessScope.from_wire(args["scope"]),
                args["entry"],
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
        if op == "update_section":
            vault.update_section_payload(
                args["virtual_id"],
                args["payload"],
                AccessScope.from_wire(args["scope"]),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
            return {}
        if op == "merge_contact":
            vid = vault.merge_contact_fields(
                args["patient_id"],
                args["fields"],
                cause=args.get("cause", "verification"),
                actor=args.get("actor", ""),
                location=args.get("location", ""),
            )
            return {"virtual_id": vid}
        if op == "search_disease":
            return {
                "hits": vault.search_disease(
                    args["code"], actor=args.get("actor", ""), location=args.get("location", "")
                )
            }
        if op == "entry_count":
            return {"count": vault.entry_count(args["virtual_id"])}
        if op == "status":
            return vault.status()
        raise FabricError("unknown-op", f"backend has no operation {op!r}")
