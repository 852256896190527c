"""Hierarchical actor registry for one country cloud.

The root health authority creates one ministry per country; the
ministry creates hospitals; hospitals create their physicians and open
patient records.  Every profile remembers who created it, which gives
audit queries their visibility tree and keeps guardianship checks
simple.

The registry itself never talks to the record vault: whoever composes a
cloud wires record initialization to :meth:`Registry.create_patient`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import secrets
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from . import ids
from .clock import Clock, SystemClock
from .config import CloudConfig
from .errors import AccessDenied, Conflict, NotFound
from .sealing import check_credential, credential_hash, new_salt

log = logging.getLogger(__name__)


class AccountStatus(str, Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    RETIRED = "retired"


class BindingKind(str, Enum):
    ADDRESS_ALLOWLIST = "address_allowlist"
    SHARED_SECRET = "shared_secret"


@dataclass(frozen=True)
class OrganizationBinding:
    """How an organization's private channel is recognized at login."""

    kind: BindingKind
    addresses: tuple[str, ...] = ()
    secret: str | None = None

    def accepts(self, address: str, secret: str | None) -> bool:
        if self.kind is BindingKind.ADDRESS_ALLOWLIST:
            return address in self.addresses
        return self.secret is not None and secret == self.secret

    def to_row(self) -> dict:
        return {"kind": self.kind.value, "addresses": list(self.addresses), "secret": self.secret}

    @classmethod
    def from_row(cls, row: dict) -> "OrganizationBinding":
        return cls(BindingKind(row["kind"]), tuple(row.get("addresses") or ()), row.get("secret"))


@dataclass
class ActorProfile:
    actor_id: str
    kind: str
    display_name: str
    credential_hash: str
    credential_salt: str
    status: AccountStatus
    created_by: str
    created_at: float
    binding: OrganizationBinding | None = None
    hospital_id: str | None = None
    clinic_endpoints: tuple[str, ...] = ()
    verified: bool = False
    demographics: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "actor_id": self.actor_id,
            "kind": self.kind,
            "display_name": self.display_name,
            "credential_hash": self.credential_hash,
            "credential_salt": self.credential_salt,
            "status": self.status.value,
            "created_by": self.created_by,
            "created_at": self.created_at,
            "binding": self.binding.to_row() if self.binding else None,
            "hospital_id": self.hospital_id,
            "clinic_endpoints": list(self.clinic_endpoints),
            "verified": self.verified,
            "demographics": self.demographics,
        }

    @classmethod
    def from_row(cls, row: dict) -> "ActorProfile":
        return cls(
            actor_id=row["actor_id"],
            kind=row["kind"],
            display_name=row["display_name"],
            credential_hash=row["credential_hash"],
            credential_salt=row["credential_salt"],
            status=AccountStatus(row["status"]),
            created_by=row["created_by"],
            created_at=row["created_at"],
            binding=OrganizationBinding.from_row(row["binding"]) if row.get("binding") else None,
            hospital_id=row.get("hospital_id"),
            clinic_endpoints=tuple(row.get("clinic_endpoints") or ()),
            verified=bool(row.get("verified")),
            demographics=row.get("demographics") or {},
        )


@dataclass(frozen=True)
class PatientRegistration:
    patient_id: ids.PatientId
    initial_password: str
    biometric_digest: str | None


@dataclass(frozen=True)
class CodeTables:
    """Known province/city/area codes, seeded from the topology file.

    Unknown codes are tolerated with a warning so partially seeded
    deployments keep working; the grammar still applies regardless.
    """

    provinces: dict = field(default_factory=dict)  # letters -> {number, cities: {letters: number}, areas}
    org_kinds: tuple[str, ...] = ids.DEFAULT_ORG_KINDS

    def warn_unknown(self, *, province: str | None = None, city: str | None = None) -> None:
        if province and province not in self.provinces:
            log.warning("unrecognized province code %s", province)
            return
        if province and city is not None:
            known = self.provinces.get(province, {}).get("cities", {})
            if city not in known:
                log.warning("unrecognized city code %s in province %s", city, province)


class Registry:
    """Actor profiles and identifier allocation for one country."""

    def __init__(
        self,
        country: str,
        *,
        clock: Clock | None = None,
        config: CloudConfig | None = None,
        code_tables: CodeTables | None = None,
        root_password: str | None = None,
        path: str | None = None,
    ):
        self.country = country.upper()
        self._clock = clock or SystemClock()
        self._config = config or CloudConfig()
        self.codes = code_tables or CodeTables()
        self._profiles: dict[str, ActorProfile] = {}
        self._counters: dict[tuple, int] = {}
        self._lock = threading.RLock()
        self._path = path
        if path and os.path.exists(path):
            self._replay(path)
        if str(ids.RootId()) not in self._profiles:
            root = ActorProfile(
                actor_id=str(ids.RootId()),
                kind="root",
                display_name="Global Health Authority",
                status=AccountStatus.ACTIVE,
                created_by="",
                created_at=self._clock.now(),
                **self._credential_fields(root_password or secrets.token_urlsafe(16)),
            )
            self._store(root)

    # -- helpers ----------------------------------------------------------

    def _credential_fields(self, password: str) -> dict:
        salt = new_salt()
        return {
            "credential_hash": credential_hash(password, salt, self._config.kdf_iterations),
            "credential_salt": salt.hex(),
        }

    def _store(self, profile: ActorProfile) -> None:
        self._profiles[profile.actor_id] = profile
        if self._path:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"op": "profile", "row": profile.to_row()}, sort_keys=True) + "\n")

    def _replay(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["op"] == "profile":
                    row = ActorProfile.from_row(event["row"])
                    self._profiles[row.actor_id] = row
        for profile in self._profiles.values():
            self._absorb_counter(profile.actor_id)

    def _absorb_counter(self, actor_id: str) -> None:
        """Recover allocation counters from already-issued identifiers."""
        try:
            parsed = ids.parse_id(actor_id)
        except Exception:
            return
        if isinstance(parsed, ids.PatientId):
            key = ("patient", parsed.country, parsed.province, parsed.city)
            value = int(parsed.sequence, 16)
        elif isinstance(parsed, ids.PhysicianId):
            key = ("physician", parsed.country, parsed.province, parsed.city, parsed.area)
            value = int(parsed.sequence, 16)
        elif isinstance(parsed, ids.HospitalId):
            key = ("hospital", parsed.org_code, parsed.country, parsed.province, parsed.city)
            value = int(parsed.sequence.split("-")[0], 10)
        else:
            return
        self._counters[key] = max(self._counters.get(key, 0), value)

    def _next(self, key: tuple) -> int:
        value = self._counters.get(key, 0) + 1
        self._counters[key] = value
        return value

    def _active_profile(self, actor_id: str) -> ActorProfile:
        profile = self._profiles.get(actor_id)
        if profile is None:
            raise NotFound("unknown-actor", f"no profile for {actor_id}")
        return profile

    # -- lookups ----------------------------------------------------------

    def lookup(self, actor_id: str) -> ActorProfile:
        return self._active_profile(str(actor_id))

    def exists(self, actor_id: str) -> bool:
        return str(actor_id) in self._profiles

    def ministry_id(self) -> ids.MinistryId | None:
        key = str(ids.MinistryId(self.country))
        return ids.MinistryId(self.country) if key in self._profiles else None

    def authenticate(self, actor_id: str, password: str) -> bool:
        try:
            profile = self._active_profile(str(actor_id))
        except NotFound:
            return False
        return check_credential(
            password, bytes.fromhex(profile.credential_salt), self._config.kdf_iterations, profile.credential_hash
        )

    def profiles(self, kind: str | None = None) -> list[ActorProfile]:
        rows = list(self._profiles.values())
        return [p for p in rows if kind is None or p.kind == kind]

    def patients_registered_at(self, hospital_id: str) -> list[ActorProfile]:
        return [p for p in self._profiles.values() if p.kind == "patient" and p.created_by == hospital_id]

    def search_names(self, query: str, candidates: Iterable[ActorProfile]) -> list[ActorProfile]:
        needle = query.strip().lower()
        return [p for p in candidates if needle and needle in p.display_name.lower()]

    def subtree(self, actor_id: str) -> set[str]:
        """The actor plus everything it (transitively) created."""
        wanted = {str(actor_id)}
        changed = True
        while changed:
            changed = False
            for profile in self._profiles.values():
                if profile.created_by in wanted and profile.actor_id not in wanted:
                    wanted.add(profile.actor_id)
                    changed = True
        return wanted

    # -- registration hierarchy -------------------------------------------

    def register_ministry(
        self, caller: str, *, display_name: str, password: str, binding: OrganizationBinding, country: str | None = None
    ) -> ids.MinistryId:
        with self._lock:
            profile = self._active_profile(str(caller))
            if profile.kind != "root" or profile.status is not AccountStatus.ACTIVE:
                raise AccessDenied("caller-not-who", "only the root authority registers ministries")
            target_country = (country or self.country).upper()
            if target_country != self.country:
                raise AccessDenied(
                    "wrong-country-moh", f"this cloud serves {self.country}, not {target_country}"
                )
            ministry = ids.MinistryId(self.country)
            if str(ministry) in self._profiles:
                raise Conflict("duplicate-country", f"{ministry} already registered")
            if not binding or (not binding.addresses and not binding.secret):
                raise Conflict("missing-binding", "ministries need an organization binding")
            row = ActorProfile(
                actor_id=str(ministry),
                kind="ministry",
                display_name=display_name,
                status=AccountStatus.ACTIVE,
                created_by=str(caller),
                created_at=self._clock.now(),
                binding=binding,
                **self._credential_fields(password),
            )
            self._store(row)
            return ministry

    def register_hospital(
        self,
        caller: str,
        *,
        display_name: str,
        password: str,
        province: str,
        province_number: int,
        city_number: int,
        binding: OrganizationBinding,
        org_code: str = "HOS",
    ) -> ids.HospitalId:
        with self._lock:
            profile = self._active_profile(str(caller))
            if profile.kind != "ministry" or profile.status is not AccountStatus.ACTIVE:
                raise AccessDenied("caller-not-moh", "only the ministry registers hospitals")
            if org_code.upper() not in self.codes.org_kinds:
                raise Conflict("unknown-org-kind", f"organization kind {org_code!r} is not registered")
            if not binding or (not binding.addresses and not binding.secret):
                raise Conflict("missing-binding", "hospitals need an organization binding")
            province_code = ids.org_province_code(province, province_number)
            city_code = ids.org_city_code(city_number)
            self.codes.warn_unknown(province=province.upper())
            key = ("hospital", org_code.upper(), self.country, province_code, city_code)
            hospital = ids.HospitalId(
                org_code=org_code,
                country=self.country,
                province=province_code,
                city=city_code,
                sequence=ids.format_hospital_sequence(self._next(key)),
            )
            row = ActorProfile(
                actor_id=str(hospital),
                kind="hospital",
                display_name=display_name,
                status=AccountStatus.ACTIVE,
                created_by=str(caller),
                created_at=self._clock.now(),
                binding=binding,
                **self._credential_fields(password),
            )
            self._store(row)
            return hospital

    def register_physician(
        self,
        caller: str,
        *,
        display_name: str,
        password: str,
        province: str,
        province_number: int,
        city_number: int,
        area_number: int,
        hospital_id: str | None = None,
        clinic_endpoints: tuple[str, ...] = (),
    ) -> ids.PhysicianId:
        with self._lock:
            profile = self._active_profile(str(caller))
            if profile.kind != "hospital" or profile.status is not AccountStatus.ACTIVE:
                raise AccessDenied("caller-not-hospital", "only a hospital registers its physicians")
            if hospital_id is not None and hospital_id != str(caller):
                raise Conflict("binding-mismatch", "physician bound to a different hospital than the caller")
            province_code = ids.org_province_code(province, province_number)
            self.codes.warn_unknown(province=province.upper())
            key = ("physician", self.country, province_code, ids.org_city_code(city_number), f"{area_number:03d}")
            physician = ids.PhysicianId(
                country=self.country,
                province=province_code,
                city=ids.org_city_code(city_number),
                area=f"{area_number:03d}",
                sequence=ids.format_physician_sequence(self._next(key)),
            )
            row = ActorProfile(
                actor_id=str(physician),
                kind="physician",
                display_name=display_name,
                status=AccountStatus.ACTIVE,
                created_by=str(caller),
                created_at=self._clock.now(),
                hospital_id=str(caller),
                clinic_endpoints=tuple(clinic_endpoints),
                **self._credential_fields(password),
            )
            self._store(row)
            return physician

    def create_patient(
        self,
        caller: str,
        *,
        display_name: str,
        province: str,
        province_number: int,
        city: str,
        city_number: int,
        password: str | None = None,
        biometric: str | None = None,
        demographics: dict | None = None,
    ) -> PatientRegistration:
        """Open a patient account; the caller wires up the record vault."""
        with self._lock:
            profile = self._active_profile(str(caller))
            if profile.kind != "hospital" or profile.status is not AccountStatus.ACTIVE:
                raise AccessDenied("caller-not-hospital", "patient records are opened by hospitals")
            province_code = ids.patient_province_code(province, province_number)
            city_code = ids.patient_city_code(city, city_number)
            self.codes.warn_unknown(province=province.upper(), city=city.upper())
            key = ("patient", self.country, province_code, city_code)
            patient = ids.PatientId(
                country=self.country,
                province=province_code,
                city=city_code,
                sequence=ids.format_patient_sequence(self._next(key)),
            )
            initial_password = password or secrets.token_urlsafe(12)
            row = ActorProfile(
                actor_id=str(patient),
                kind="patient",
                display_name=display_name,
                status=AccountStatus.ACTIVE,
                created_by=str(caller),
                created_at=self._clock.now(),
                demographics=demographics or {},
                **self._credential_fields(initial_password),
            )
            self._store(row)
            digest = hashlib.sha256(biometric.encode("utf-8")).hexdigest() if biometric else None
            return PatientRegistration(patient, initial_password, digest)

    def verify_patient(self, caller: str, patient_id: str) -> ActorProfile:
        """Mark a patient nationally verified.  SSN storage is the vault's job."""
        with self._lock:
            profile = self._active_profile(str(caller))
            if profile.kind != "ministry" or profile.status is not AccountStatus.ACTIVE:
                raise AccessDenied("caller-not-moh", "verification is a ministry operation")
            patient = self._active_profile(str(patient_id))
            if patient.kind != "patient":
                raise NotFound("unknown-actor", f"{patient_id} is not a patient")
            if ids.PatientId.parse(patient.actor_id).country != self.country:
                raise AccessDenied("wrong-country-moh", "patient belongs to another country")
            if patient.verified:
                raise Conflict("already-verified", f"{patient_id} was already verified")
            updated = replace(patient, verified=True)
            self._store(updated)
            return updated

    def register_clinic_endpoint(self, physician_id: str, endpoint: str) -> ActorProfile:
        with self._lock:
            profile = self._active_profile(str(physician_id))
            if profile.kind != "physician":
                raise AccessDenied("caller-not-physician", "clinics belong to physicians")
            if endpoint not in profile.clinic_endpoints:
                profile = replace(profile, clinic_endpoints=profile.clinic_endpoints + (endpoint,))
                self._store(profile)
            return profile

    def set_status(self, caller: str, actor_id: str, status: AccountStatus) -> ActorProfile:
        """Suspend/reinstate an account the caller (transitively) created."""
        with self._lock:
            self._active_profile(str(caller))
            target = self._active_profile(str(actor_id))
            if str(actor_id) not in self.subtree(str(caller)) or str(actor_id) == str(caller):
                raise AccessDenied("caller-not-guardian", "can only manage accounts you created")
            updated = replace(target, status=status)
            self._store(updated)
            return updated
