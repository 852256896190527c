"""Access decisions from location, presence, and relationship.

The decision function is total: every combination of requester kind,
location class, presence proof, and relationship flags maps to exactly
one :class:`AccessScope`.  A machine-readable copy of the full matrix is
checked in at ``data/access_matrix.csv`` and the test suite diffs the
function against it row by row.

Outline of the physician rows (other actor kinds are constant):

* inside a hospital network, patients registered at that hospital get
  the full record with name search; everyone else is reachable by id or
  de-identified disease search, medical data only
* a valid presence proof (one-time token or biometric) yields the full
  record wherever the physician is
* at a registered clinic without the patient, prior treatment or a
  standing trust grant unlocks name search over medical data; strangers
  are reachable only through de-identified disease search
* anywhere else without the patient, treated or trusting patients are
  name-searchable with medical data only and nobody else is identifiable
"""
from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .clock import Clock, SystemClock
from .errors import AccessDenied, NotFound


class RequesterKind(str, Enum):
    PATIENT_SELF = "patient_self"
    PATIENT_OTHER = "patient_other"
    PHYSICIAN = "physician"
    HOSPITAL_STAFF = "hospital_staff"
    MINISTRY = "ministry"
    ROOT = "root"


class LocationClass(str, Enum):
    HOSPITAL_NETWORK = "hospital_network"
    CLINIC = "clinic"
    ANYWHERE = "anywhere"


class PresenceKind(str, Enum):
    ABSENT = "absent"
    SESSION_TOKEN = "session_token"
    BIOMETRIC = "biometric"


class AccessLevel(str, Enum):
    FULL_RECORD = "full_record"
    MEDICAL_ONLY = "medical_only"
    DENIED = "denied"


class SearchAxis(str, Enum):
    NAME = "name"
    PATIENT_ID = "patient_id"
    DISEASE = "disease"


class IdentifierVisibility(str, Enum):
    NAMES_AND_IDS = "names_and_ids"
    IDS_ONLY = "ids_only"
    NONE = "none"


@dataclass(frozen=True)
class Relationship:
    registered_at_hospital: bool = False
    previously_treated_by_requester: bool = False
    on_trusted_list: bool = False


@dataclass(frozen=True)
class AccessScope:
    level: AccessLevel
    searchable_by: frozenset
    identifiers_visible: IdentifierVisibility
    can_write_medical: bool

    def allows_axis(self, axis: SearchAxis) -> bool:
        return axis in self.searchable_by

    def to_wire(self) -> dict:
        return {
            "level": self.level.value,
            "searchable_by": sorted(axis.value for axis in self.searchable_by),
            "identifiers_visible": self.identifiers_visible.value,
            "can_write_medical": self.can_write_medical,
        }

    @classmethod
    def from_wire(cls, blob: dict) -> "AccessScope":
        return cls(
            level=AccessLevel(blob["level"]),
            searchable_by=frozenset(SearchAxis(a) for a in blob.get("searchable_by", [])),
            identifiers_visible=IdentifierVisibility(blob["identifiers_visible"]),
            can_write_medical=bool(blob.get("can_write_medical", False)),
        )


DENIED_SCOPE = AccessScope(AccessLevel.DENIED, frozenset(), IdentifierVisibility.NONE, False)
_FULL = AccessScope(
    AccessLevel.FULL_RECORD,
    frozenset({SearchAxis.NAME, SearchAxis.PATIENT_ID}),
    IdentifierVisibility.NAMES_AND_IDS,
    True,
)


def decide_access(
    kind: RequesterKind,
    location: LocationClass,
    presence: PresenceKind,
    rel: Relationship,
) -> AccessScope:
    """One patient's scope as seen by one requester, given the context.

    ``presence`` must already be validated by the caller; an expired or
    forged proof never reaches this function.
    """
    if kind is RequesterKind.PATIENT_SELF:
        return _FULL
    if kind in (RequesterKind.PATIENT_OTHER, RequesterKind.MINISTRY, RequesterKind.ROOT):
        return DENIED_SCOPE
    if kind is RequesterKind.HOSPITAL_STAFF:
        if location is LocationClass.HOSPITAL_NETWORK and rel.registered_at_hospital:
            return AccessScope(
                AccessLevel.MEDICAL_ONLY,
                frozenset({SearchAxis.NAME, SearchAxis.PATIENT_ID}),
                IdentifierVisibility.NAMES_AND_IDS,
                True,
            )
        return DENIED_SCOPE

    # Physicians from here on.
    if presence is not PresenceKind.ABSENT:
        return _FULL
    if location is LocationClass.HOSPITAL_NETWORK:
        if rel.registered_at_hospital:
            return _FULL
        return AccessScope(
            AccessLevel.MEDICAL_ONLY,
            frozenset({SearchAxis.PATIENT_ID, SearchAxis.DISEASE}),
            IdentifierVisibility.IDS_ONLY,
            False,
        )
    consented = rel.previously_treated_by_requester or rel.on_trusted_list
    if location is LocationClass.CLINIC:
        if consented:
            return AccessScope(
                AccessLevel.MEDICAL_ONLY,
                frozenset({SearchAxis.NAME, SearchAxis.PATIENT_ID, SearchAxis.DISEASE}),
                IdentifierVisibility.NAMES_AND_IDS,
                False,
            )
        return AccessScope(
            AccessLevel.MEDICAL_ONLY, frozenset({SearchAxis.DISEASE}), IdentifierVisibility.IDS_ONLY, False
        )
    if consented:
        return AccessScope(
            AccessLevel.MEDICAL_ONLY,
            frozenset({SearchAxis.NAME, SearchAxis.PATIENT_ID}),
            IdentifierVisibility.NAMES_AND_IDS,
            False,
        )
    return AccessScope(
        AccessLevel.MEDICAL_ONLY, frozenset({SearchAxis.DISEASE}), IdentifierVisibility.IDS_ONLY, False
    )


def reachable_section_kinds(scope: AccessScope) -> frozenset:
    """Section kinds a scope may read; the confidentiality floor."""
    if scope.level is AccessLevel.FULL_RECORD:
        return frozenset({"medical", "insurance", "contact", "other"})
    if scope.level is AccessLevel.MEDICAL_ONLY:
        return frozenset({"medical"})
    return frozenset()


@dataclass(frozen=True)
class Location:
    """A classified connection context."""

    kind: LocationClass
    hospital_id: str | None = None
    clinic_endpoint: str | None = None
    address: str = ""

    def fingerprint(self) -> str:
        if self.kind is LocationClass.HOSPITAL_NETWORK:
            return f"hospital:{self.hospital_id}"
        if self.kind is LocationClass.CLINIC:
            return f"clinic:{self.clinic_endpoint}"
        return f"addr:{self.address}"


def classify_location(registry, actor_id: str, context: dict) -> Location:
    """Map a connection context onto a location class.

    A hospital-network claim only sticks when the connection satisfies
    that hospital's organization binding; a clinic claim only when the
    endpoint is registered to the connecting physician.  Anything else
    is just an address somewhere.
    """
    address = str(context.get("address", ""))
    tunnel = context.get("hospital_tunnel")
    if tunnel:
        try:
            profile = registry.lookup(str(tunnel))
        except NotFound:
            profile = None
        if (
            profile is not None
            and profile.kind == "hospital"
            and profile.binding is not None
            and profile.binding.accepts(address, context.get("tunnel_secret"))
        ):
            return Location(LocationClass.HOSPITAL_NETWORK, hospital_id=str(tunnel), address=address)
    endpoint = context.get("clinic_endpoint")
    if endpoint:
        try:
            profile = registry.lookup(str(actor_id))
        except NotFound:
            profile = None
        if profile is not None and endpoint in profile.clinic_endpoints:
            return Location(LocationClass.CLINIC, clinic_endpoint=endpoint, address=address)
    return Location(LocationClass.ANYWHERE, address=address)


# ---------------------------------------------------------------------------
# Trust grants


@dataclass
class TrustGrant:
    grant_id: str
    patient_id: str
    grantee_id: str
    kinds: frozenset
    granted_at: float
    revoked_at: float | None = None
    key_hex: str = ""

    @property
    def active(self) -> bool:
        return self.revoked_at is None

    def to_wire(self) -> dict:
        return {
            "grant_id": self.grant_id,
            "grantee_id": self.grantee_id,
            "kinds": sorted(self.kinds),
            "granted_at": self.granted_at,
            "revoked_at": self.revoked_at,
        }


class TrustLedger:
    """Patient-managed standing grants, revocable with immediate effect."""

    def __init__(self, *, clock: Clock | None = None):
        self._clock = clock or SystemClock()
        self._grants: dict[str, TrustGrant] = {}
        self._lock = threading.Lock()

    def grant(self, patient_id: str, grantee_id: str, kinds: Iterable[str]) -> TrustGrant:
        with self._lock:
            grant = TrustGrant(
                grant_id=secrets.token_hex(8),
                patient_id=str(patient_id),
                grantee_id=str(grantee_id),
                kinds=frozenset(kinds),
                granted_at=self._clock.now(),
                key_hex=secrets.token_hex(32),
            )
            self._grants[grant.grant_id] = grant
            return grant

    def revoke(self, patient_id: str, grantee_id: str) -> list[TrustGrant]:
        """Revoke every active grant this patient gave that grantee."""
        with self._lock:
            revoked = []
            for grant in self._grants.values():
                if grant.patient_id == str(patient_id) and grant.grantee_id == str(grantee_id) and grant.active:
                    grant.revoked_at = self._clock.now()
                    revoked.append(grant)
            if not revoked:
                raise NotFound("unknown-grantee", f"no active grant for {grantee_id}")
            return revoked

    def active_grant(self, patient_id: str, grantee_id: str) -> TrustGrant | None:
        with self._lock:
            for grant in self._grants.values():
                if grant.patient_id == str(patient_id) and grant.grantee_id == str(grantee_id) and grant.active:
                    return grant
            return None

    def grants_of(self, patient_id: str) -> list[TrustGrant]:
        with self._lock:
            return [g for g in self._grants.values() if g.patient_id == str(patient_id)]

    def patients_trusting(self, grantee_id: str) -> set[str]:
        with self._lock:
            return {g.patient_id for g in self._grants.values() if g.grantee_id == str(grantee_id) and g.active}

    def require_active(self, patient_id: str, grantee_id: str) -> TrustGrant:
        grant = self.active_grant(patient_id, grantee_id)
        if grant is None:
            raise AccessDenied("authorization-invalid", "no active trust grant")
        return grant
