"""Patient record vault: the back-end store of one country cloud.

Every patient record is split into four sections (medical, insurance,
contact, other), each addressed by a random 128-bit virtual id.  The
only place the patient's public identifier meets those virtual ids is
inside sealed blobs:

* the linkage blob, sealed under a key derived from the patient's own
  credential;
* the escrow blob, sealed under a backend-held escrow key, used for
  biometric openings and authorized id lookups — every use is audited;
* per-delegation blobs sealed under a one-time-token-derived key or a
  per-grant random key.

Plaintext rows therefore never pair a patient id with a virtual id, and
patient-bearing rows carry no timestamps that could be joined against
section rows.  Section payloads and entries are encrypted at rest under
a storage key; medical entries are append-only.
"""
from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
from dataclasses import dataclass
from enum import Enum

from . import ids
from .audit import APPEND, AuditLog, ESCROW_UNLOCK, READ, SEARCH
from .clock import Clock, SystemClock
from .errors import AccessDenied, AuthError, Conflict, NotFound, TokenError
from .policy import AccessScope, reachable_section_kinds
from .sealing import UnsealError, derive_key, seal, unseal

_OTP_KDF_ITERATIONS = 2_000


class SectionKind(str, Enum):
    MEDICAL = "medical"
    INSURANCE = "insurance"
    CONTACT = "contact"
    OTHER = "other"


class EntryKind(str, Enum):
    CASE = "case"
    VISIT = "visit"
    NOTE = "note"


@dataclass(frozen=True)
class VaultKeys:
    storage_key: bytes
    escrow_key: bytes


# Authorization evidence accepted by resolve_sections.


@dataclass(frozen=True)
class PatientCredential:
    password: str


@dataclass(frozen=True)
class PatientKey:
    """A linkage key a gateway derived once at patient login."""

    key: bytes


@dataclass(frozen=True)
class TokenPresence:
    token_id: str
    token_value: str


@dataclass(frozen=True)
class BiometricPresence:
    digest: str


@dataclass(frozen=True)
class GrantAccess:
    grant_id: str
    key_hex: str


def new_virtual_id() -> str:
    return secrets.token_hex(16)


def entry_digest(entry: dict) -> str:
    return hashlib.sha256(
        json.dumps(entry, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


class RecordVault:
    """Storage engine behind one country's backend node."""

    def __init__(
        self,
        country: str,
        keys: VaultKeys,
        *,
        clock: Clock | None = None,
        audit: AuditLog | None = None,
        kdf_iterations: int = 1_000,
        path: str | None = None,
    ):
        self.country = country.upper()
        self._keys = keys
        self._clock = clock or SystemClock()
        self._audit = audit if audit is not None else AuditLog(clock=self._clock)
        self._kdf_iterations = kdf_iterations
        self._path = path
        self._lock = threading.RLock()
        self.ops_completed = 0

        self._sections: dict[str, dict] = {}
        self._entries: dict[str, list[dict]] = {}
        self._linkage: dict[str, dict] = {}
        self._escrow: dict[str, dict] = {}
        self._reverse: dict[str, dict] = {}
        self._biometric: dict[str, dict] = {}
        self._otp_unlocks: dict[str, dict] = {}
        self._grant_unlocks: dict[str, dict] = {}
        if path and os.path.exists(path):
            self._replay(path)

    # -- persistence ------------------------------------------------------

    _TABLES = ("sections", "entries", "linkage", "escrow", "reverse", "biometric", "otp_unlocks", "grant_unlocks")

    def _table(self, name: str):
        return getattr(self, f"_{name}")

    def _persist(self, table: str, key: str, row: dict | None) -> None:
        if not self._path:
            return
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"table": table, "key": key, "row": row}, sort_keys=True) + "\n")

    def _put(self, table: str, key: str, row: dict) -> None:
        if table == "entries":
            self._entries.setdefault(key, []).append(row)
        else:
            self._table(table)[key] = row
        self._persist(table, key, row)

    def _delete(self, table: str, key: str) -> None:
        self._table(table).pop(key, None)
        self._persist(table, key, None)

    def _replay(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                table, key, row = event["table"], event["key"], event["row"]
                if row is None:
                    self._table(table).pop(key, None)
                elif table == "entries":
                    self._entries.setdefault(key, []).append(row)
                else:
                    self._table(table)[key] = row

    def dump(self) -> dict:
        """The raw backend datastore, exactly as persisted."""
        with self._lock:
            out: dict[str, list[dict]] = {}
            for table in self._TABLES:
                if table == "entries":
                    out[table] = [dict(row, virtual_id=vid) for vid, rows in self._entries.items() for row in rows]
                else:
                    out[table] = [dict(row) for row in self._table(table).values()]
            return out

    # -- record lifecycle -------------------------------------------------

    def init_record(
        self,
        patient_id: str,
        *,
        password: str,
        biometric_digest: str | None = None,
        contact: dict | None = None,
        insurance: dict | None = None,
    ) -> dict:
        """Create the four sections and all linkage material for a patient."""
        with self._lock:
            patient_id = str(patient_id)
            if patient_id in self._linkage:
                raise Conflict("already-initialized", f"record for {patient_id} already exists")
            now = self._clock.now()
            section_map: dict[str, str] = {}
            payloads = {
                SectionKind.MEDICAL.value: {},
                SectionKind.INSURANCE.value: insurance or {},
                SectionKind.CONTACT.value: contact or {},
                SectionKind.OTHER.value: {},
            }
            for kind, payload in payloads.items():
                vid = new_virtual_id()
                section_map[kind] = vid
                self._put(
                    "sections",
                    vid,
                    {
                        "virtual_id": vid,
                        "kind": kind,
                        "payload": seal(self._keys.storage_key, payload, aad=f"section:{vid}"),
                        "created_at": now,
                        "updated_at": now,
                    },
                )
            linkage_payload = {"patient": patient_id, "sections": section_map}
            salt = secrets.token_bytes(16)
            patient_key = derive_key(password, salt, self._kdf_iterations)
            self._put(
                "linkage",
                patient_id,
                {
                    "patient_id": patient_id,
                    "salt": salt.hex(),
                    "blob": seal(patient_key, linkage_payload, aad=f"linkage:{patient_id}"),
                },
            )
            self._put(
                "escrow",
                patient_id,
                {
                    "patient_id": patient_id,
                    "blob": seal(self._keys.escrow_key, linkage_payload, aad=f"escrow:{patient_id}"),
                },
            )
            for kind, vid in section_map.items():
                self._put(
                    "reverse",
                    vid,
                    {
                        "virtual_id": vid,
                        "blob": seal(
                            self._keys.escrow_key,
                            {"patient": patient_id, "kind": kind},
                            aad=f"reverse:{vid}",
                        ),
                    },
                )
            if biometric_digest:
                self._put("biometric", patient_id, {"patient_id": patient_id, "digest": biometric_digest})
            self.ops_completed += 1
            return dict(section_map)

    def patient_key(self, patient_id: str, password: str) -> bytes:
        row = self._linkage.get(str(patient_id))
        if row is None:
            raise NotFound("unknown-actor", f"no record for {patient_id}")
        return derive_key(password, bytes.fromhex(row["salt"]), self._kdf_iterations)

    # -- resolution -------------------------------------------------------

    def resolve_sections(
        self,
        patient_id: str,
        authorization,
        kinds: list[str] | None = None,
        *,
        actor: str = "",
        location: str = "",
    ) -> dict:
        """Map section kinds to virtual ids for an authorized caller."""
        with self._lock:
            patient_id = str(patient_id)
            payload = self._unseal_for(patient_id, authorization, actor=actor, location=location)
            if payload.get("patient") != patient_id:
                if isinstance(authorization, TokenPresence):
                    raise TokenError("token-patient-mismatch", "token was issued for another patient")
                raise AuthError("authorization-invalid", "authorization is for another patient")
            sections = payload["sections"]
            wanted = list(sections) if kinds is None else [str(k) for k in kinds]
            missing = [k for k in wanted if k not in sections]
            if missing:
                if isinstance(authorization, GrantAccess):
                    raise AccessDenied("kind-not-granted", f"grant does not cover {missing}")
                raise NotFound("unknown-virtual-id", f"no section of kind {missing}")
            self.ops_completed += 1
            return {k: sections[k] for k in wanted}

    def _unseal_for(self, patient_id: str, authorization, *, actor: str, location: str) -> dict:
        if isinstance(authorization, PatientCredential):
            row = self._require_linkage(patient_id)
            key = derive_key(authorization.password, bytes.fromhex(row["salt"]), self._kdf_iterations)
            return self._unseal_linkage(row, key, patient_id)
        if isinstance(authorization, PatientKey):
            row = self._require_linkage(patient_id)
            return self._unseal_linkage(row, authorization.key, patient_id)
        if isinstance(authorization, TokenPresence):
            row = self._otp_unlocks.get(authorization.token_id)
            if row is None:
                raise AuthError("invalid-presence-proof", "no delegation for this token")
            key = derive_key(
                authorization.token_value, authorization.token_id.encode("ascii"), _OTP_KDF_ITERATIONS
            )
            try:
                return unseal(key, row["blob"], aad=f"otp:{authorization.token_id}")
            except UnsealError:
                raise AuthError("invalid-presence-proof", "token value does not open the delegation")
        if isinstance(authorization, BiometricPresence):
            enrolled = self._biometric.get(patient_id)
            if enrolled is None or enrolled["digest"] != authorization.digest:
                raise AuthError("invalid-presence-proof", "biometric digest does not match")
            return self._escrow_open(patient_id, cause="biometric", actor=actor, location=location)
        if isinstance(authorization, GrantAccess):
            row = self._grant_unlocks.get(authorization.grant_id)
            if row is None:
                raise AuthError("authorization-invalid", "grant has no backing delegation")
            try:
                return unseal(
                    bytes.fromhex(authorization.key_hex), row["blob"], aad=f"grant:{authorization.grant_id}"
                )
            except (UnsealError, ValueError):
                raise AuthError("authorization-invalid", "grant key does not open the delegation")
        raise AuthError("authorization-invalid", f"unsupported authorization {type(authorization).__name__}")

    def _require_linkage(self, patient_id: str) -> dict:
        row = self._linkage.get(patient_id)
        if row is None:
            raise NotFound("unknown-actor", f"no record for {patient_id}")
        return row

    def _unseal_linkage(self, row: dict, key: bytes, patient_id: str) -> dict:
        try:
            return unseal(key, row["blob"], aad=f"linkage:{patient_id}")
        except UnsealError:
            raise AuthError("authorization-invalid", "credential does not open the record linkage")

    def _escrow_open(self, patient_id: str, *, cause: str, actor: str, location: str) -> dict:
        row = self._escrow.get(patient_id)
        if row is None:
            raise NotFound("unknown-actor", f"no record for {patient_id}")
        payload = unseal(self._keys.escrow_key, row["blob"], aad=f"escrow:{patient_id}")
        self._audit.record(
            actor=actor or "backend",
            action=ESCROW_UNLOCK,
            target=patient_id,
            location=location,
            detail={"cause": cause},
        )
        return payload

    def id_resolve(
        self, patient_id: str, kinds: list[str], *, cause: str, actor: str, location: str = ""
    ) -> dict:
        """Authorized lookup by public patient id via the escrow path.

        The gateway only calls this after the policy scope granted the
        patient_id search axis (or for ministry verification and foreign
        fetches); the mandatory escrow audit event carries the cause.
        """
        with self._lock:
            payload = self._escrow_open(str(patient_id), cause=cause, actor=actor, location=location)
            sections = payload["sections"]
            self.ops_completed += 1
            return {k: sections[k] for k in kinds if k in sections}

    def owner_of(self, virtual_id: str, *, cause: str, actor: str, location: str = "") -> tuple[str, str]:
        """Resolve a virtual id back to (patient, kind); escrow-audited."""
        with self._lock:
            row = self._reverse.get(str(virtual_id))
            if row is None:
                raise NotFound("unknown-virtual-id", "no such section")
            payload = unseal(self._keys.escrow_key, row["blob"], aad=f"reverse:{virtual_id}")
            self._audit.record(
                actor=actor or "backend",
                action=ESCROW_UNLOCK,
                target=str(virtual_id),
                location=location,
                detail={"cause": cause},
            )
            self.ops_completed += 1
            return payload["patient"], payload["kind"]

    # -- delegations ------------------------------------------------------

    def create_otp_unlock(self, token_id: str, token_value: str, patient_id: str, section_map: dict) -> None:
        with self._lock:
            key = derive_key(token_value, token_id.encode("ascii"), _OTP_KDF_ITERATIONS)
            payload = {"patient": str(patient_id), "sections": dict(section_map)}
            self._put(
                "otp_unlocks",
                token_id,
                {"token_id": token_id, "blob": seal(key, payload, aad=f"otp:{token_id}")},
            )
            self.ops_completed += 1

    def drop_otp_unlock(self, token_id: str) -> None:
        with self._lock:
            if token_id in self._otp_unlocks:
                self._delete("otp_unlocks", token_id)

    def create_grant_unlock(
        self, grant_id: str, key_hex: str, grantee_id: str, kinds: list[str], patient_id: str, section_map: dict
    ) -> None:
        with self._lock:
            subset = {k: v for k, v in section_map.items() if k in set(kinds)}
            payload = {"patient": str(patient_id), "sections": subset}
            self._put(
                "grant_unlocks",
                grant_id,
                {
                    "grant_id": grant_id,
                    "grantee_id": str(grantee_id),
                    "kinds": sorted(subset),
                    "blob": seal(bytes.fromhex(key_hex), payload, aad=f"grant:{grant_id}"),
                },
            )
            self.ops_completed += 1

    def drop_grant_unlock(self, grant_id: str) -> None:
        with self._lock:
            if grant_id in self._grant_unlocks:
                self._delete("grant_unlocks", grant_id)

    # -- section access ---------------------------------------------------

    def _require_section(self, virtual_id: str) -> dict:
        row = self._sections.get(str(virtual_id))
        if row is None:
            raise NotFound("unknown-virtual-id", "no such section")
        return row

    def read_section(self, virtual_id: str, scope: AccessScope, *, actor: str, location: str = "") -> dict:
        with self._lock:
            row = self._require_section(virtual_id)
            if row["kind"] not in reachable_section_kinds(scope):
                raise AccessDenied("scope-insufficient", f"scope does not reach {row['kind']} sections")
            view = {
                "virtual_id": row["virtual_id"],
                "kind": row["kind"],
                "created_at": row["created_at"],
                "updated_at": row["updated_at"],
            }
            if row["kind"] == SectionKind.MEDICAL.value:
                view["entries"] = [self._open_entry(row["virtual_id"], stored) for stored in self._entries.get(row["virtual_id"], [])]
            else:
                view["payload"] = unseal(
                    self._keys.storage_key, row["payload"], aad=f"section:{row['virtual_id']}"
                )
            self._audit.record(
                actor=actor, action=READ, target=row["virtual_id"], location=location, detail={"kind": row["kind"]}
            )
            self.ops_completed += 1
            return view

    def _open_entry(self, virtual_id: str, stored: dict) -> dict:
        entry = unseal(self._keys.storage_key, stored["blob"], aad=f"entry:{virtual_id}:{stored['seq']}")
        entry["seq"] = stored["seq"]
        return entry

    def append_entry(
        self,
        virtual_id: str,
        scope: AccessScope,
        entry: dict,
        *,
        actor: str,
        location: str = "",
    ) -> dict:
        """Append one medical entry; history is never rewritten."""
        with self._lock:
            row = self._require_section(virtual_id)
            if row["kind"] != SectionKind.MEDICAL.value:
                raise AccessDenied("scope-insufficient", "entries only exist in medical sections")
            if SectionKind.MEDICAL.value not in reachable_section_kinds(scope) or not scope.can_write_medical:
                raise AccessDenied("scope-insufficient", "scope does not permit medical writes")
            kind = EntryKind(entry.get("entry_kind", ""))
            if entry.get("author") != actor:
                raise Conflict("tag-mismatch", "entry author must be the writing actor")
            try:
                author_kind = ids.kind_of(ids.parse_id(entry["author"]))
            except Exception:
                author_kind = "unknown"
            if kind in (EntryKind.CASE, EntryKind.VISIT) and author_kind in ("physician", "hospital"):
                if not entry.get("hospital_tag") and not entry.get("clinic_tag"):
                    raise Conflict("tag-mismatch", "care entries need a hospital or clinic tag")
            stored_entry = {
                "entry_id": secrets.token_hex(8),
                "entry_kind": kind.value,
                "body": entry.get("body") or {},
                "author": entry["author"],
                "hospital_tag": entry.get("hospital_tag"),
                "physician_tag": entry.get("physician_tag"),
                "clinic_tag": entry.get("clinic_tag"),
                "disease_codes": sorted(entry.get("disease_codes") or []),
                "corrects": entry.get("corrects"),
                "created_at": self._clock.now(),
            }
            seq = len(self._entries.get(virtual_id, [])) + 1
            digest = entry_digest(stored_entry)
            self._put(
                "entries",
                virtual_id,
                {
                    "seq": seq,
                    "blob": seal(self._keys.storage_key, stored_entry, aad=f"entry:{virtual_id}:{seq}"),
                    "created_at": stored_entry["created_at"],
                },
            )
            self._audit.record(
                actor=actor,
                action=APPEND,
                target=virtual_id,
                location=location,
                detail={"entry_id": stored_entry["entry_id"], "entry_kind": kind.value, "digest": digest},
            )
            self.ops_completed += 1
            return {"entry_id": stored_entry["entry_id"], "seq": seq, "digest": digest}

    def update_section_payload(
        self, virtual_id: str, payload: dict, scope: AccessScope, *, actor: str, location: str = ""
    ) -> None:
        """Replace a non-medical section's payload (full-record scopes only)."""
        with self._lock:
            row = self._require_section(virtual_id)
            if row["kind"] == SectionKind.MEDICAL.value:
                raise AccessDenied("scope-insufficient", "medical sections are append-only")
            if row["kind"] not in reachable_section_kinds(scope):
                raise AccessDenied("scope-insufficient", f"scope does not reach {row['kind']} sections")
            updated = dict(row)
            updated["payload"] = seal(self._keys.storage_key, payload, aad=f"section:{virtual_id}")
            updated["updated_at"] = self._clock.now()
            self._put("sections", virtual_id, updated)
            self._audit.record(
                actor=actor, action=APPEND, target=virtual_id, location=location, detail={"kind": row["kind"]}
            )
            self.ops_completed += 1

    def merge_contact_fields(self, patient_id: str, fields: dict, *, cause: str, actor: str, location: str = "") -> str:
        """Escrow-open the contact section and merge fields into it."""
        with self._lock:
            payload = self._escrow_open(str(patient_id), cause=cause, actor=actor, location=location)
            vid = payload["sections"][SectionKind.CONTACT.value]
            row = self._require_section(vid)
            current = unseal(self._keys.storage_key, row["payload"], aad=f"section:{vid}")
            current.update(fields)
            updated = dict(row)
            updated["payload"] = seal(self._keys.storage_key, current, aad=f"section:{vid}")
            updated["updated_at"] = self._clock.now()
            self._put("sections", vid, updated)
            self._audit.record(
                actor=actor, action=APPEND, target=vid, location=location, detail={"fields": sorted(fields)}
            )
            self.ops_completed += 1
            return vid

    # -- population queries ----------------------------------------------

    def search_disease(self, code: str, *, actor: str, location: str = "") -> list[dict]:
        """De-identified case summaries for one disease code.

        Results carry the medical virtual id as the only handle; names,
        public patient ids, and payer details never appear.
        """
        with self._lock:
            results = []
            for vid, stored_rows in self._entries.items():
                for stored in stored_rows:
                    entry = self._open_entry(vid, stored)
                    if code in entry.get("disease_codes", []):
                        results.append(
                            {
                                "virtual_id": vid,
                                "entry_kind": entry["entry_kind"],
                                "summary": entry["body"].get("summary"),
                                "medication": entry["body"].get("medication"),
                                "physician": entry.get("physician_tag") or entry.get("author"),
                                "disease_codes": entry.get("disease_codes", []),
                            }
                        )
            self._audit.record(
                actor=actor, action=SEARCH, target=f"disease:{code}", location=location,
                detail={"results": len(results)},
            )
            self.ops_completed += 1
            return results

    def entry_count(self, virtual_id: str) -> int:
        return len(self._entries.get(str(virtual_id), []))

    def status(self) -> dict:
        return {
            "country": self.country,
            "patients": len(self._linkage),
            "sections": len(self._sections),
            "ops_completed": self.ops_completed,
        }
