"""Front-end gateway: the only door into a country's record fabric.

Clients speak a dict-in, dict-out request language to the gateway. The
gateway owns login sessions, one-time access codes, location trust, and
the policy decision for every request, then drives the storage node over
signed envelopes. Patients' section maps and derived keys live only in
session memory here; the storage node never learns them in the clear.
"""
from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from hmac import compare_digest
from threading import Lock
from typing import Optional

from . import audit as verbs
from . import ids
from .audit import AuditLog, NotificationStore
from .clock import Clock
from .config import CloudConfig
from .errors import AccessDenied, AuthError, Conflict, FabricError, NotFound, TokenError
from .identity import OrganizationBinding, Registry
from .policy import (
    AccessScope,
    LocationClass,
    Location,
    PresenceKind,
    Relationship,
    RequesterKind,
    TrustLedger,
    SearchAxis,
    classify_location,
    decide_access,
    reachable_section_kinds,
)
from .sealing import public_bytes
from .wire import seal_envelope


@dataclass
class LoginSession:
    token: str
    actor_id: str
    kind: str
    created_at: float
    last_seen: float
    claimed_location: Location
    location_confirmed: bool
    patient_key_hex: Optional[str] = None
    sections: Optional[dict] = None
    presence: dict = field(default_factory=dict)
    seen: dict = field(default_factory=dict)

    def effective_location(self) -> Location:
        if self.location_confirmed:
            return self.claimed_location
        return Location(LocationClass.ANYWHERE, address=self.claimed_location.address)


@dataclass
class OtpState:
    token_id: str
    value: str
    patient_id: str
    issued_at: float
    expires_at: float
    redeemed: bool = False
    redeemed_by: Optional[str] = None


_ENTRY_FIELDS = ("entry_kind", "body", "hospital_tag", "physician_tag", "clinic_tag", "disease_codes", "corrects")


class GatewayNode:
    def __init__(
        self,
        name: str,
        country: str,
        *,
        registry: Registry,
        clock: Clock,
        config: CloudConfig,
        audit: AuditLog,
        notifications: NotificationStore,
        transport,
        backend_name: str,
        signing_key,
        channel_key: bytes,
        federation=None,
    ):
        self.name = name
        self.country = country.upper()
        self.registry = registry
        self.config = config
        self.trust = TrustLedger(clock=clock)
        self.notifications = notifications
        self._clock = clock
        self._audit = audit
        self._transport = transport
        self._backend_name = backend_name
        self._signing_key = signing_key
        self.public_key_hex = public_bytes(signing_key)
        self._channel_key = channel_key
        self.federation = federation
        self._sessions: dict[str, LoginSession] = {}
        self._session_lock = Lock()
        self._otp: dict[str, OtpState] = {}
        self._otp_lock = Lock()
        self._known_locations: dict[str, set] = {}
        self._pending: dict[tuple, dict] = {}
        self.outbox: list[dict] = []
        self._treated: dict[str, set] = {}
        self._flags: dict[str, bool] = {}
        self._foreign_nonces: set[str] = set()

    # -- storage-node channel ---------------------------------------------

    def _backend(self, op: str, **args):
        envelope = seal_envelope(
            self.name, {"op": op, "args": args}, self._signing_key, self._channel_key, self._clock.now()
        )
        reply = self._transport.call(self._backend_name, {"envelope": envelope.to_wire()})
        if reply.get("ok"):
            return reply.get("result")
        raise FabricError(
            reply.get("error", "backend-error"),
            reply.get("message", ""),
            retriable=bool(reply.get("retriable")),
        )

    # -- request entry point ----------------------------------------------

    def handle(self, message: dict) -> dict:
        op = str(message.get("op", ""))
        args = message.get("args") or {}
        try:
            if op == "foreign_lookup":
                return {"ok": True, "result": self._foreign_lookup(message)}
            if op == "federation_status":
                return {"ok": True, "result": self.federation_status()}
            if op == "login":
                return {"ok": True, "result": self.login(args)}
            handler = getattr(self, "op_" + op, None)
            if handler is None:
                raise NotFound("unknown-op", f"gateway has no operation {op!r}")
            session = self._require_session(message)
            return {"ok": True, "result": handler(session, args)}
        except FabricError as err:
            return err.to_wire()

    def _require_session(self, message: dict) -> LoginSession:
        token = message.get("session")
        with self._session_lock:
            session = self._sessions.get(token) if token else None
            if session is None:
                raise AuthError("session-unknown", "log in first")
            now = self._clock.now()
            if now - session.last_seen > self.config.session_ttl_s:
                del self._sessions[session.token]
                raise AuthError("session-expired", "idle too long")
            session.last_seen = now
            return session

    @staticmethod
    def _require_kind(session: LoginSession, *kinds: str) -> None:
        if session.kind not in kinds:
            raise AccessDenied("wrong-role", f"operation is not available to {session.kind} accounts")

    # -- login and location trust -----------------------------------------

    def login(self, args: dict) -> dict:
        actor_id = str(args.get("actor_id", "")).upper()
        password = str(args.get("password", ""))
        context = args.get("context") or {}
        try:
            profile = self.registry.lookup(actor_id)
        except NotFound:
            raise AuthError("login-failed", "unknown account or wrong password")
        if not self.registry.authenticate(actor_id, password):
            raise AuthError("login-failed", "unknown account or wrong password")
        if profile.status.value != "active":
            raise AuthError("account-disabled", f"account is {profile.status.value}")
        location = classify_location(self.registry, actor_id, context)
        fingerprint = location.fingerprint()
        confirmed = self._admit_location(actor_id, fingerprint)
        session = LoginSession(
            token=secrets.token_hex(16),
            actor_id=actor_id,
            kind=profile.kind,
            created_at=self._clock.now(),
            last_seen=self._clock.now(),
            claimed_location=location,
            location_confirmed=confirmed,
        )
        if profile.kind == "patient":
            unlock = self._backend("patient_unlock", patient_id=actor_id, password=password)
            session.patient_key_hex = unlock["key_hex"]
            session.sections = unlock["sections"]
            for kind, vid in unlock["sections"].items():
                session.seen[vid] = {"patient": actor_id, "kind": kind}
        with self._session_lock:
            self._sessions[session.token] = session
        self._audit.record(
            actor=actor_id,
            action=verbs.LOGIN,
            target="",
            location=fingerprint,
            detail={"confirmed": confirmed},
        )
        return {
            "session": session.token,
            "actor_id": actor_id,
            "kind": profile.kind,
            "display_name": profile.display_name,
            "location": fingerprint,
            "location_confirmed": confirmed,
            "session_ttl_s": self.config.session_ttl_s,
        }

    def _admit_location(self, actor_id: str, fingerprint: str) -> bool:
        known = self._known_locations.setdefault(actor_id, set())
        if fingerprint in known:
            return True
        if not known and self.config.trust_first_location:
            known.add(fingerprint)
            self._audit.record(
                actor=actor_id,
                action=verbs.LOCATION_CONFIRM,
                target=fingerprint,
                location=fingerprint,
                detail={"mode": "first-use"},
            )
            return True
        challenge = self._pending.get((actor_id, fingerprint))
        if challenge is None:
            challenge = {"code": f"{secrets.randbelow(10**6):06d}", "attempts": 0}
            self._pending[(actor_id, fingerprint)] = challenge
            self.outbox.append({"actor_id": actor_id, "fingerprint": fingerprint, "code": challenge["code"]})
            self.notifications.post(
                actor_id, verbs.LOCATION_PENDING, {"fingerprint": fingerprint}
            )
            self._audit.record(
                actor=actor_id,
                action=verbs.LOCATION_CHALLENGE,
                target=fingerprint,
                location=fingerprint,
                detail={},
            )
        return False

    def preconfirm_location(self, actor_id: str, fingerprint: str) -> None:
        """Mark a location trusted without a challenge (enrollment-time setup)."""
        self._known_locations.setdefault(str(actor_id).upper(), set()).add(fingerprint)

    def op_confirm_location(self, session: LoginSession, args: dict) -> dict:
        fingerprint = session.claimed_location.fingerprint()
        if session.location_confirmed:
            return {"confirmed": True}
        key = (session.actor_id, fingerprint)
        challenge = self._pending.get(key)
        if challenge is None:
            raise NotFound("no-pending-challenge", "nothing to confirm here")
        if compare_digest(str(args.get("code", "")), challenge["code"]):
            del self._pending[key]
            self._known_locations.setdefault(session.actor_id, set()).add(fingerprint)
            session.location_confirmed = True
            self._audit.record(
                actor=session.actor_id,
                action=verbs.LOCATION_CONFIRM,
                target=fingerprint,
                location=fingerprint,
                detail={"mode": "challenge"},
            )
            return {"confirmed": True}
        challenge["attempts"] += 1
        self._audit.record(
            actor=session.actor_id,
            action=verbs.LOCATION_REJECTED,
            target=fingerprint,
            location=fingerprint,
            detail={"attempts": challenge["attempts"], "flagged": challenge["attempts"] >= self.config.max_challenge_attempts},
        )
        raise AuthError("challenge-failed", "wrong confirmation code")

    def op_location_status(self, session: LoginSession, args: dict) -> dict:
        fingerprint = session.claimed_location.fingerprint()
        return {
            "fingerprint": fingerprint,
            "class": session.effective_location().kind.value,
            "confirmed": session.location_confirmed,
            "pending_challenge": (session.actor_id, fingerprint) in self._pending,
        }

    def op_affordances(self, session: LoginSession, args: dict) -> dict:
        """Scope this session would get toward a patient it has no tie to.

        Clients render their search controls from this reply instead of
        re-deriving policy; per-patient scopes still arrive on every hit.
        """
        baseline = {
            "patient": RequesterKind.PATIENT_OTHER,
            "physician": RequesterKind.PHYSICIAN,
            "hospital": RequesterKind.HOSPITAL_STAFF,
            "ministry": RequesterKind.MINISTRY,
            "root": RequesterKind.ROOT,
        }[session.kind]
        location = session.effective_location()
        scope = decide_access(
            baseline, location.kind, PresenceKind.ABSENT, Relationship(False, False, False)
        )
        return {"scope": scope.to_wire(), "location": location.kind.value}

    def op_logout(self, session: LoginSession, args: dict) -> dict:
        with self._session_lock:
            self._sessions.pop(session.token, None)
        self._audit.record(
            actor=session.actor_id, action=verbs.LOGOUT, target="", location="", detail={}
        )
        return {"ended": True}

    def op_whoami(self, session: LoginSession, args: dict) -> dict:
        profile = self.registry.lookup(session.actor_id)
        return {
            "actor_id": session.actor_id,
            "kind": session.kind,
            "display_name": profile.display_name,
            "verified": profile.verified,
            "location": session.claimed_location.fingerprint(),
            "location_confirmed": session.location_confirmed,
            "expires_in_s": self.config.session_ttl_s - (self._clock.now() - session.last_seen),
        }

    def op_dashboard(self, session: LoginSession, args: dict) -> dict:
        if session.kind == "patient":
            return {
                "sections": sorted(session.sections or {}),
                "section_ids": dict(session.sections or {}),
                "grants": len(self.trust.grants_of(session.actor_id)),
                "global_access": bool(self._flags.get(session.actor_id, False)),
                "notifications_pending": self.notifications.pending(session.actor_id),
            }
        return {
            "treated_patients": len(self._treated.get(session.actor_id, ())),
            "trusted_by": len(self.trust.patients_trusting(session.actor_id)),
            "notifications_pending": self.notifications.pending(session.actor_id),
        }

    # -- one-time access codes --------------------------------------------

    def op_otp_generate(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        now = self._clock.now()
        with self._otp_lock:
            old = self._otp.get(session.actor_id)
            if old is not None and not old.redeemed:
                self._backend("otp_unlock_drop", token_id=old.token_id)
            state = OtpState(
                token_id=secrets.token_hex(8),
                value="".join(secrets.choice(self.config.otp_alphabet) for _ in range(self.config.otp_length)),
                patient_id=session.actor_id,
                issued_at=now,
                expires_at=now + self.config.otp_ttl_s,
            )
            self._backend(
                "otp_unlock_create",
                token_id=state.token_id,
                token_value=state.value,
                patient_id=session.actor_id,
                sections=session.sections,
            )
            self._otp[session.actor_id] = state
        self._audit.record(
            actor=session.actor_id,
            action=verbs.OTP_ISSUE,
            target=state.token_id,
            location=session.claimed_location.fingerprint(),
            detail={"expires_at": state.expires_at},
        )
        return {"code": state.value, "expires_at": state.expires_at, "ttl_s": self.config.otp_ttl_s}

    def op_otp_status(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        with self._otp_lock:
            state = self._otp.get(session.actor_id)
            now = self._clock.now()
            if state is None or state.redeemed or now > state.expires_at:
                return {"active": False}
            return {"active": True, "expires_in_s": state.expires_at - now}

    def op_otp_redeem(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "physician")
        patient_id = str(args.get("patient_id", "")).upper()
        code = str(args.get("code", ""))
        now = self._clock.now()
        with self._otp_lock:
            state = self._otp.get(patient_id)
            if state is None:
                raise TokenError("token-unknown", "no live code for that record")
            if state.redeemed:
                raise TokenError("token-consumed", "code was already used")
            if now > state.expires_at:
                raise TokenError("token-expired", "code has lapsed")
            if not compare_digest(code, state.value):
                raise AuthError("invalid-presence-proof", "wrong code")
            state.redeemed = True
            state.redeemed_by = session.actor_id
        resolved = self._backend(
            "resolve",
            patient_id=patient_id,
            authorization={"kind": "token", "token_id": state.token_id, "token_value": state.value},
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )["sections"]
        session.presence[patient_id] = {"kind": "token", "at": now}
        for kind, vid in resolved.items():
            session.seen[vid] = {"patient": patient_id, "kind": kind}
        self._audit.record(
            actor=session.actor_id,
            action=verbs.OTP_REDEEM,
            target=state.token_id,
            location=session.claimed_location.fingerprint(),
            detail={},
        )
        self.notifications.post(
            patient_id,
            verbs.RECORD_ACCESSED,
            {
                "physician": session.actor_id,
                "time": now,
                "location": session.claimed_location.fingerprint(),
                "via": "one-time code",
            },
        )
        return {"patient_id": patient_id, "sections": resolved}

    # -- policy plumbing ---------------------------------------------------

    def _requester_kind(self, session: LoginSession, patient_id: str) -> RequesterKind:
        if session.kind == "physician":
            return RequesterKind.PHYSICIAN
        if session.kind == "hospital":
            return RequesterKind.HOSPITAL_STAFF
        if session.kind == "patient":
            if session.actor_id == patient_id:
                return RequesterKind.PATIENT_SELF
            return RequesterKind.PATIENT_OTHER
        if session.kind == "ministry":
            return RequesterKind.MINISTRY
        return RequesterKind.ROOT

    def _relationship(self, session: LoginSession, patient_id: str, location: Location) -> Relationship:
        registered = False
        if location.kind is LocationClass.HOSPITAL_NETWORK:
            try:
                patient = self.registry.lookup(patient_id)
                registered = patient.created_by == location.hospital_id
            except NotFound:
                registered = False
            if session.kind == "hospital" and location.hospital_id != session.actor_id:
                registered = False
        treated = patient_id in self._treated.get(session.actor_id, set())
        trusted = self.trust.active_grant(patient_id, session.actor_id) is not None
        return Relationship(
            registered_at_hospital=registered,
            previously_treated_by_requester=treated,
            on_trusted_list=trusted,
        )

    def _presence_kind(self, session: LoginSession, patient_id: str) -> PresenceKind:
        mark = session.presence.get(patient_id)
        if mark is None:
            return PresenceKind.ABSENT
        if mark["kind"] == "biometric":
            return PresenceKind.BIOMETRIC
        return PresenceKind.SESSION_TOKEN

    def scope_for(self, session: LoginSession, patient_id: str) -> AccessScope:
        location = session.effective_location()
        return decide_access(
            self._requester_kind(session, patient_id),
            location.kind,
            self._presence_kind(session, patient_id),
            self._relationship(session, patient_id, location),
        )

    def _resolve_for(self, session: LoginSession, patient_id: str, scope: AccessScope) -> dict:
        """Fetch reachable section ids via whichever capability entitles us."""
        kinds = sorted(reachable_section_kinds(scope))
        if not kinds:
            raise AccessDenied("access-denied", "no reachable sections")
        if session.kind == "patient" and session.actor_id == patient_id:
            return {k: v for k, v in (session.sections or {}).items() if k in kinds}
        grant = self.trust.active_grant(patient_id, session.actor_id)
        if grant is not None and set(kinds) <= set(grant.kinds):
            return self._backend(
                "resolve",
                patient_id=patient_id,
                authorization={"kind": "grant", "grant_id": grant.grant_id, "key_hex": grant.key_hex},
                kinds=kinds,
                actor=session.actor_id,
                location=session.claimed_location.fingerprint(),
            )["sections"]
        sections = self._backend(
            "id_resolve",
            patient_id=patient_id,
            kinds=kinds,
            cause="id_search",
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )["sections"]
        return sections

    @staticmethod
    def _render_hit(profile, scope: AccessScope, sections: dict) -> dict:
        hit: dict = {"sections": sections}
        if scope.identifiers_visible.value in ("names_and_ids", "ids_only"):
            hit["patient_id"] = profile.actor_id
        if scope.identifiers_visible.value == "names_and_ids":
            hit["display_name"] = profile.display_name
        hit["scope"] = scope.to_wire()
        return hit

    def _note_seen(self, session: LoginSession, patient_id: str, sections: dict) -> None:
        for kind, vid in sections.items():
            session.seen[vid] = {"patient": patient_id, "kind": kind}

    # -- search -------------------------------------------------------------

    def _name_candidates(self, session: LoginSession):
        if session.kind == "hospital":
            if session.effective_location().hospital_id != session.actor_id:
                return []
            return self.registry.patients_registered_at(session.actor_id)
        profile = self.registry.lookup(session.actor_id)
        candidates: dict[str, object] = {}
        if profile.hospital_id and session.effective_location().hospital_id == profile.hospital_id:
            for patient in self.registry.patients_registered_at(profile.hospital_id):
                candidates[patient.actor_id] = patient
        for patient_id in self._treated.get(session.actor_id, set()):
            try:
                candidates[patient_id] = self.registry.lookup(patient_id)
            except NotFound:
                pass
        for patient_id in self.trust.patients_trusting(session.actor_id):
            try:
                candidates[patient_id] = self.registry.lookup(patient_id)
            except NotFound:
                pass
        return list(candidates.values())

    def op_search(self, session: LoginSession, args: dict) -> dict:
        country = str(args.get("country", self.country)).upper()
        if country != self.country:
            return self._foreign_search(session, country, args)
        self._require_kind(session, "physician", "hospital")
        location = session.claimed_location.fingerprint()
        if args.get("patient_id"):
            patient_id = str(args["patient_id"]).upper()
            ids.PatientId.parse(patient_id)
            profile = self.registry.lookup(patient_id)
            scope = self.scope_for(session, patient_id)
            if SearchAxis.PATIENT_ID not in scope.searchable_by:
                raise AccessDenied("access-denied", "not searchable by record id in this context")
            sections = self._resolve_for(session, patient_id, scope)
            self._note_seen(session, patient_id, sections)
            self._audit.record(
                actor=session.actor_id,
                action=verbs.SEARCH,
                target=patient_id,
                location=location,
                detail={"axis": "patient_id"},
            )
            return {"hits": [self._render_hit(profile, scope, sections)]}
        query = str(args.get("query", ""))
        if not query:
            raise Conflict("empty-query", "give a name or a record id")
        hits = []
        for profile in self.registry.search_names(query, self._name_candidates(session)):
            scope = self.scope_for(session, profile.actor_id)
            if SearchAxis.NAME not in scope.searchable_by:
                continue
            sections = self._resolve_for(session, profile.actor_id, scope)
            self._note_seen(session, profile.actor_id, sections)
            hits.append(self._render_hit(profile, scope, sections))
        self._audit.record(
            actor=session.actor_id,
            action=verbs.SEARCH,
            target="",
            location=location,
            detail={"axis": "name", "hits": len(hits)},
        )
        return {"hits": hits}

    def op_research(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "physician", "hospital", "ministry", "root")
        code = str(args.get("code", ""))
        hits = self._backend(
            "search_disease",
            code=code,
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )["hits"]
        for hit in hits:
            session.seen.setdefault(hit["virtual_id"], {"patient": None, "kind": "medical"})
        return {"hits": hits}

    # -- record access ------------------------------------------------------

    def _seen_or_deny(self, session: LoginSession, virtual_id: str) -> dict:
        meta = session.seen.get(virtual_id)
        if meta is None:
            raise AccessDenied("section-not-resolved", "resolve the record through search or a code first")
        return meta

    def op_read_section(self, session: LoginSession, args: dict) -> dict:
        virtual_id = str(args.get("virtual_id", ""))
        meta = self._seen_or_deny(session, virtual_id)
        if meta["patient"] is None:
            raise AccessDenied("section-not-resolved", "de-identified results cannot be opened")
        scope = self.scope_for(session, meta["patient"])
        view = self._backend(
            "read_section",
            virtual_id=virtual_id,
            scope=scope.to_wire(),
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )
        if meta["patient"] != session.actor_id:
            self.notifications.post(
                meta["patient"],
                verbs.RECORD_ACCESSED,
                {
                    "physician": session.actor_id,
                    "time": self._clock.now(),
                    "location": session.claimed_location.fingerprint(),
                    "via": "read",
                },
            )
        return view

    def op_append_entry(self, session: LoginSession, args: dict) -> dict:
        virtual_id = str(args.get("virtual_id", ""))
        meta = self._seen_or_deny(session, virtual_id)
        if meta["patient"] is None:
            raise AccessDenied("section-not-resolved", "de-identified results cannot be written")
        scope = self.scope_for(session, meta["patient"])
        entry = {k: args.get(k) for k in _ENTRY_FIELDS if args.get(k) is not None}
        entry["author"] = session.actor_id
        receipt = self._backend(
            "append_entry",
            virtual_id=virtual_id,
            scope=scope.to_wire(),
            entry=entry,
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )
        if entry.get("entry_kind") in ("case", "visit"):
            for physician in {entry.get("physician_tag"), session.actor_id if session.kind == "physician" else None}:
                if physician:
                    self._treated.setdefault(physician, set()).add(meta["patient"])
        if meta["patient"] != session.actor_id:
            self.notifications.post(
                meta["patient"],
                verbs.RECORD_ACCESSED,
                {
                    "physician": session.actor_id,
                    "time": self._clock.now(),
                    "location": session.claimed_location.fingerprint(),
                    "via": "append",
                },
            )
        return receipt

    def op_update_section(self, session: LoginSession, args: dict) -> dict:
        virtual_id = str(args.get("virtual_id", ""))
        meta = self._seen_or_deny(session, virtual_id)
        if meta["patient"] is None:
            raise AccessDenied("section-not-resolved", "de-identified results cannot be written")
        scope = self.scope_for(session, meta["patient"])
        self._backend(
            "update_section",
            virtual_id=virtual_id,
            payload=args.get("payload") or {},
            scope=scope.to_wire(),
            actor=session.actor_id,
            location=session.claimed_location.fingerprint(),
        )
        return {"updated": True}

    # -- standing trust ------------------------------------------------------

    def op_grant_trust(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        grantee = str(args.get("grantee", "")).upper()
        profile = self.registry.lookup(grantee)
        if profile.kind != "physician":
            raise Conflict("grantee-not-physician", "standing trust is granted to physicians")
        kinds = args.get("kinds") or ["medical"]
        grant = self.trust.grant(session.actor_id, grantee, kinds)
        self._backend(
            "grant_unlock_create",
            grant_id=grant.grant_id,
            key_hex=grant.key_hex,
            grantee_id=grantee,
            kinds=sorted(grant.kinds),
            patient_id=session.actor_id,
            sections=session.sections,
        )
        self._audit.record(
            actor=session.actor_id,
            action=verbs.GRANT,
            target=grantee,
            location=session.claimed_location.fingerprint(),
            detail={"kinds": sorted(grant.kinds)},
        )
        return grant.to_wire()

    def op_revoke_trust(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        grantee = str(args.get("grantee", "")).upper()
        revoked = self.trust.revoke(session.actor_id, grantee)
        for grant in revoked:
            self._backend("grant_unlock_drop", grant_id=grant.grant_id)
        self._audit.record(
            actor=session.actor_id,
            action=verbs.REVOKE,
            target=grantee,
            location=session.claimed_location.fingerprint(),
            detail={"count": len(revoked)},
        )
        return {"revoked": len(revoked)}

    def op_list_grants(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        return {"grants": [g.to_wire() for g in self.trust.grants_of(session.actor_id)]}

    # -- cross-border consent flag ------------------------------------------

    def op_set_global_access(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        enabled = bool(args.get("enabled"))
        self._flags[session.actor_id] = enabled
        self._audit.record(
            actor=session.actor_id,
            action=verbs.FLAG_SET,
            target="",
            location=session.claimed_location.fingerprint(),
            detail={"enabled": enabled},
        )
        return {"enabled": enabled}

    def op_get_global_access(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "patient")
        return {"enabled": bool(self._flags.get(session.actor_id, False))}

    def global_access_enabled(self, patient_id: str) -> bool:
        return bool(self._flags.get(str(patient_id).upper(), False))

    # -- notifications and transparency --------------------------------------

    def op_notifications(self, session: LoginSession, args: dict) -> dict:
        notes = self.notifications.fetch(
            session.actor_id,
            include_read=bool(args.get("include_read")),
            mark_read=not bool(args.get("peek")),
        )
        return {"notifications": [n.to_wire() for n in notes]}

    def op_audit_query(self, session: LoginSession, args: dict) -> dict:
        limit = int(args.get("limit", 50))
        # Feeds are about recent activity; scanning the full chain on every
        # call would make this op degrade as the log grows.
        window = int(args.get("window", 5000))
        own_vids = set()
        if session.kind == "patient":
            own_vids = set((session.sections or {}).values())

        def mine(event) -> bool:
            if session.kind in ("ministry", "root"):
                return True
            if event.actor == session.actor_id:
                return True
            return event.target in own_vids

        events = [e for e in self._audit.tail(window) if mine(e)]
        return {
            "events": [
                {
                    "seq": e.seq,
                    "action": e.action,
                    "actor": e.actor,
                    "target": e.target,
                    "location": e.location,
                    "timestamp": e.timestamp,
                    "detail": e.detail,
                }
                for e in events[-limit:]
            ]
        }

    # -- anonymous relay ------------------------------------------------------

    def op_relay_message(self, session: LoginSession, args: dict) -> dict:
        virtual_id = str(args.get("virtual_id", ""))
        meta = self._seen_or_deny(session, virtual_id)
        owner = meta["patient"]
        if owner is None:
            owner = self._backend(
                "owner_of",
                virtual_id=virtual_id,
                cause="relay",
                actor=session.actor_id,
                location=session.claimed_location.fingerprint(),
            )["patient_id"]
        self.notifications.post(
            owner,
            verbs.RELAY_MESSAGE,
            {"from": session.actor_id, "about": virtual_id, "body": str(args.get("body", ""))},
        )
        self._audit.record(
            actor=session.actor_id,
            action=verbs.RELAY_SEND,
            target=virtual_id,
            location=session.claimed_location.fingerprint(),
            detail={},
        )
        return {"delivered": True}

    # -- enrollment -----------------------------------------------------------

    def op_register_ministry(self, session: LoginSession, args: dict) -> dict:
        ministry = self.registry.register_ministry(
            session.actor_id,
            display_name=str(args.get("display_name", "")),
            password=str(args.get("password", "")),
            binding=_binding_from_args(args),
            country=args.get("country"),
        )
        self._audit.record(
            actor=session.actor_id, action=verbs.REGISTER, target=str(ministry), location="", detail={"kind": "ministry"}
        )
        return {"actor_id": str(ministry)}

    def op_register_hospital(self, session: LoginSession, args: dict) -> dict:
        hospital = self.registry.register_hospital(
            session.actor_id,
            display_name=str(args.get("display_name", "")),
            password=str(args.get("password", "")),
            province=str(args.get("province", "")),
            province_number=int(args.get("province_number", 0)),
            city_number=int(args.get("city_number", 0)),
            binding=_binding_from_args(args),
            org_code=str(args.get("org_code", "HOS")),
        )
        self._audit.record(
            actor=session.actor_id, action=verbs.REGISTER, target=str(hospital), location="", detail={"kind": "hospital"}
        )
        return {"actor_id": str(hospital)}

    def op_register_physician(self, session: LoginSession, args: dict) -> dict:
        physician = self.registry.register_physician(
            session.actor_id,
            display_name=str(args.get("display_name", "")),
            password=str(args.get("password", "")),
            province=str(args.get("province", "")),
            province_number=int(args.get("province_number", 0)),
            city_number=int(args.get("city_number", 0)),
            area_number=int(args.get("area_number", 0)),
            clinic_endpoints=tuple(args.get("clinic_endpoints") or ()),
        )
        self._audit.record(
            actor=session.actor_id, action=verbs.REGISTER, target=str(physician), location="", detail={"kind": "physician"}
        )
        return {"actor_id": str(physician)}

    def op_register_patient(self, session: LoginSession, args: dict) -> dict:
        registration = self.registry.create_patient(
            session.actor_id,
            display_name=str(args.get("display_name", "")),
            province=str(args.get("province", "")),
            province_number=int(args.get("province_number", 0)),
            city=str(args.get("city", "")),
            city_number=int(args.get("city_number", 0)),
            password=args.get("password"),
            biometric=args.get("biometric"),
            demographics=args.get("demographics"),
        )
        patient_id = str(registration.patient_id)
        self._backend(
            "patient_init",
            patient_id=patient_id,
            password=registration.initial_password,
            biometric_digest=registration.biometric_digest,
            contact=args.get("contact"),
            insurance=args.get("insurance"),
        )
        self._audit.record(
            actor=session.actor_id, action=verbs.REGISTER, target=patient_id, location="", detail={"kind": "patient"}
        )
        return {"patient_id": patient_id, "initial_password": registration.initial_password}

    def op_register_clinic(self, session: LoginSession, args: dict) -> dict:
        self._require_kind(session, "physician")
        profile = self.registry.register_clinic_endpoint(session.actor_id, str(args.get("endpoint", "")))
        return {"clinic_endpoints": list(profile.clinic_endpoints)}

    def op_verify_patient(self, session: LoginSession, args: dict) -> dict:
        patient_id = str(args.get("patient_id", "")).upper()
        self.registry.verify_patient(session.actor_id, patient_id)
        if args.get("ssn"):
            self._backend(
                "merge_contact",
                patient_id=patient_id,
                fields={"ssn": str(args["ssn"])},
                cause="verification",
                actor=session.actor_id,
            )
        self._audit.record(
            actor=session.actor_id, action=verbs.VERIFY, target=patient_id, location="", detail={}
        )
        return {"verified": True}

    # -- cross-border traffic --------------------------------------------------

    def federation_status(self) -> dict:
        return {
            "country": self.country,
            "moh_registered": self.registry.ministry_id() is not None,
            "public_key_hex": self.public_key_hex,
            "gateway": self.name,
        }

    def _foreign_search(self, session: LoginSession, country: str, args: dict) -> dict:
        self._require_kind(session, "physician")
        if self.federation is None:
            raise FabricError("federation-disabled", "this cloud is not joined to the directory")
        patient_id = str(args.get("patient_id", "")).upper()
        if not patient_id:
            raise Conflict("foreign-id-required", "cross-border lookups need the record id")
        presence = None
        if args.get("presence_code"):
            presence = {"patient_id": patient_id, "code": str(args["presence_code"])}
        result = self.federation.lookup(
            country,
            requester=session.actor_id,
            patient_id=patient_id,
            presence=presence,
        )
        return result

    def _foreign_lookup(self, message: dict) -> dict:
        if self.federation is None:
            raise FabricError("federation-disabled", "this cloud is not joined to the directory")
        request = message.get("request") or {}
        signature = str(message.get("signature", ""))
        self.federation.verify_incoming(request, signature)
        nonce = str(request.get("nonce", ""))
        if nonce in self._foreign_nonces:
            raise FabricError("envelope-rejected", "replayed federation nonce")
        self._foreign_nonces.add(nonce)
        origin = str(request.get("origin_country", ""))
        requester = str(request.get("requester", ""))
        patient_id = str(request.get("patient_id", "")).upper()
        self._audit.record(
            actor=requester,
            action=verbs.FOREIGN_FORWARD,
            target=patient_id,
            location=f"foreign:{origin}",
            detail={"nonce": nonce, "direction": "in"},
        )
        try:
            profile = self.registry.lookup(patient_id)
        except NotFound:
            raise NotFound("unknown-actor", "no such record here")
        if profile.kind != "patient":
            raise NotFound("unknown-actor", "no such record here")

        presence = request.get("presence")
        presence_kind = PresenceKind.ABSENT
        if presence:
            self._redeem_foreign_presence(patient_id, str(presence.get("code", "")), requester, origin)
            presence_kind = PresenceKind.SESSION_TOKEN
        elif not self.global_access_enabled(patient_id):
            self.notifications.post(
                patient_id,
                verbs.FOREIGN_ATTEMPT,
                {"requester": requester, "country": origin, "time": self._clock.now()},
            )
            raise AccessDenied("access-denied-by-patient", "record is not opted in to cross-border access")

        rel = Relationship(on_trusted_list=presence_kind is PresenceKind.ABSENT)
        scope = decide_access(RequesterKind.PHYSICIAN, LocationClass.ANYWHERE, presence_kind, rel)
        sections = self._backend(
            "id_resolve",
            patient_id=patient_id,
            kinds=sorted(reachable_section_kinds(scope)),
            cause="id_search",
            actor=requester,
            location=f"foreign:{origin}",
        )["sections"]
        view: dict = {"scope": scope.to_wire(), "sections": {}}
        if scope.identifiers_visible.value in ("names_and_ids", "ids_only"):
            view["patient_id"] = patient_id
        if scope.identifiers_visible.value == "names_and_ids":
            view["display_name"] = profile.display_name
        for kind, vid in sections.items():
            view["sections"][kind] = self._backend(
                "read_section",
                virtual_id=vid,
                scope=scope.to_wire(),
                actor=requester,
                location=f"foreign:{origin}",
            )
        self.notifications.post(
            patient_id,
            verbs.RECORD_ACCESSED,
            {"physician": requester, "time": self._clock.now(), "location": f"foreign:{origin}", "via": "federation"},
        )
        return view

    def _redeem_foreign_presence(self, patient_id: str, code: str, requester: str, origin: str) -> None:
        now = self._clock.now()
        with self._otp_lock:
            state = self._otp.get(patient_id)
            if state is None or state.redeemed or now > state.expires_at:
                raise AuthError("invalid-presence-proof", "no live code for that record")
            if not compare_digest(code, state.value):
                raise AuthError("invalid-presence-proof", "wrong code")
            state.redeemed = True
            state.redeemed_by = requester
        self._audit.record(
            actor=requester,
            action=verbs.OTP_REDEEM,
            target=state.token_id,
            location=f"foreign:{origin}",
            detail={},
        )

def _binding_from_args(args: dict) -> OrganizationBinding:
    row = args.get("binding") or {}
    if "kind" not in row:
        raise Conflict("missing-binding", "organizations need a channel binding")
    return OrganizationBinding.from_row(row)
