"""Record vault: sealing paths, scopes, append-only history, unlinkability."""
import json

import pytest

from ghr.audit import APPEND, AuditLog, ESCROW_UNLOCK
from ghr.clock import ManualClock
from ghr.errors import AccessDenied, AuthError, Conflict, NotFound, TokenError
from ghr.policy import (
    LocationClass,
    PresenceKind,
    Relationship,
    RequesterKind,
    decide_access,
)
from ghr.sealing import new_key
from ghr.vault import (
    BiometricPresence,
    GrantAccess,
    PatientCredential,
    PatientKey,
    RecordVault,
    TokenPresence,
    VaultKeys,
)

from oracle import correct_links, linkage_join_candidates

PATIENT = "EG.ALX-02.MAN-004.000001"
PHYSICIAN = "EG.ALX-002.003.003.00001"
HOSPITAL = "HOS.EG.ALX-002.002.00001-01"

FULL = decide_access(
    RequesterKind.PHYSICIAN, LocationClass.HOSPITAL_NETWORK, PresenceKind.ABSENT,
    Relationship(registered_at_hospital=True),
)
MEDICAL = decide_access(
    RequesterKind.PHYSICIAN, LocationClass.HOSPITAL_NETWORK, PresenceKind.ABSENT, Relationship()
)
SELF = decide_access(RequesterKind.PATIENT_SELF, LocationClass.ANYWHERE, PresenceKind.ABSENT, Relationship())
DENIED = decide_access(RequesterKind.PATIENT_OTHER, LocationClass.ANYWHERE, PresenceKind.ABSENT, Relationship())


def make_vault(path=None, clock=None):
    clock = clock or ManualClock(500.0)
    vault = RecordVault(
        "EG",
        VaultKeys(storage_key=new_key(), escrow_key=new_key()),
        clock=clock,
        audit=AuditLog(clock=clock),
        kdf_iterations=64,
        path=path,
    )
    return vault, clock


def init_patient(vault, patient=PATIENT, password="pw-1", biometric="digest-abc"):
    return vault.init_record(
        patient,
        password=password,
        biometric_digest=biometric,
        contact={"phone": "+20-100", "address": "12 Corniche"},
        insurance={"payer": "NationalCare", "policy": "NC-778"},
    )


def test_init_creates_four_distinct_sections():
    vault, _ = make_vault()
    sections = init_patient(vault)
    assert sorted(sections) == ["contact", "insurance", "medical", "other"]
    assert len(set(sections.values())) == 4
    for vid in sections.values():
        assert len(vid) == 32
    with pytest.raises(Conflict) as err:
        init_patient(vault)
    assert err.value.code == "already-initialized"


def test_resolve_with_credential_and_key():
    vault, _ = make_vault()
    sections = init_patient(vault)
    got = vault.resolve_sections(PATIENT, PatientCredential("pw-1"), actor=PATIENT)
    assert got == sections
    key = vault.patient_key(PATIENT, "pw-1")
    got = vault.resolve_sections(PATIENT, PatientKey(key), kinds=["medical"], actor=PATIENT)
    assert got == {"medical": sections["medical"]}
    with pytest.raises(AuthError) as err:
        vault.resolve_sections(PATIENT, PatientCredential("wrong"), actor=PATIENT)
    assert err.value.code == "authorization-invalid"


def test_token_delegation_lifecycle():
    vault, _ = make_vault()
    sections = init_patient(vault)
    vault.create_otp_unlock("tok-1", "A2B3C4D5", PATIENT, sections)
    got = vault.resolve_sections(PATIENT, TokenPresence("tok-1", "A2B3C4D5"), actor=PHYSICIAN)
    assert got == sections
    with pytest.raises(AuthError) as err:
        vault.resolve_sections(PATIENT, TokenPresence("tok-1", "WRONGVAL"), actor=PHYSICIAN)
    assert err.value.code == "invalid-presence-proof"
    with pytest.raises(TokenError) as err:
        vault.resolve_sections("EG.ALX-02.MAN-004.000099", TokenPresence("tok-1", "A2B3C4D5"), actor=PHYSICIAN)
    assert err.value.code == "token-patient-mismatch"
    vault.drop_otp_unlock("tok-1")
    with pytest.raises(AuthError):
        vault.resolve_sections(PATIENT, TokenPresence("tok-1", "A2B3C4D5"), actor=PHYSICIAN)


def test_biometric_path_is_escrow_audited():
    vault, _ = make_vault()
    init_patient(vault)
    vault.resolve_sections(PATIENT, BiometricPresence("digest-abc"), actor=PHYSICIAN, location="hospital:X")
    events = vault._audit.select(lambda e: e.action == ESCROW_UNLOCK)
    assert len(events) == 1
    assert events[0].detail["cause"] == "biometric"
    assert events[0].actor == PHYSICIAN
    with pytest.raises(AuthError) as err:
        vault.resolve_sections(PATIENT, BiometricPresence("nope"), actor=PHYSICIAN)
    assert err.value.code == "invalid-presence-proof"


def test_grant_delegation_covers_only_granted_kinds():
    vault, _ = make_vault()
    sections = init_patient(vault)
    key_hex = "ab" * 32
    vault.create_grant_unlock("g-1", key_hex, PHYSICIAN, ["medical"], PATIENT, sections)
    got = vault.resolve_sections(PATIENT, GrantAccess("g-1", key_hex), kinds=["medical"], actor=PHYSICIAN)
    assert got == {"medical": sections["medical"]}
    with pytest.raises(AccessDenied) as err:
        vault.resolve_sections(PATIENT, GrantAccess("g-1", key_hex), kinds=["contact"], actor=PHYSICIAN)
    assert err.value.code == "kind-not-granted"
    with pytest.raises(AuthError):
        vault.resolve_sections(PATIENT, GrantAccess("g-1", "cd" * 32), kinds=["medical"], actor=PHYSICIAN)
    vault.drop_grant_unlock("g-1")
    with pytest.raises(AuthError):
        vault.resolve_sections(PATIENT, GrantAccess("g-1", key_hex), kinds=["medical"], actor=PHYSICIAN)


def test_read_section_respects_scope_floor():
    vault, _ = make_vault()
    sections = init_patient(vault)
    view = vault.read_section(sections["contact"], SELF, actor=PATIENT)
    assert view["payload"]["phone"] == "+20-100"
    with pytest.raises(AccessDenied) as err:
        vault.read_section(sections["contact"], MEDICAL, actor=PHYSICIAN)
    assert err.value.code == "scope-insufficient"
    with pytest.raises(AccessDenied):
        vault.read_section(sections["medical"], DENIED, actor=PHYSICIAN)
    with pytest.raises(NotFound) as err:
        vault.read_section("f" * 32, FULL, actor=PHYSICIAN)
    assert err.value.code == "unknown-virtual-id"


def case_entry(body=None, author=PHYSICIAN, **overrides):
    entry = {
        "entry_kind": "case",
        "body": body or {"summary": "hypertension follow-up", "medication": "amlodipine"},
        "author": author,
        "physician_tag": PHYSICIAN,
        "hospital_tag": HOSPITAL,
        "disease_codes": ["I10"],
    }
    entry.update(overrides)
    return entry


def test_append_entry_tags_and_scope():
    vault, _ = make_vault()
    sections = init_patient(vault)
    medical = sections["medical"]
    receipt = vault.append_entry(medical, FULL, case_entry(), actor=PHYSICIAN, location=f"hospital:{HOSPITAL}")
    assert receipt["seq"] == 1 and len(receipt["digest"]) == 64
    with pytest.raises(Conflict) as err:
        vault.append_entry(medical, FULL, case_entry(author="EG.ALX-002.003.003.00002"), actor=PHYSICIAN)
    assert err.value.code == "tag-mismatch"
    with pytest.raises(Conflict) as err:
        vault.append_entry(
            medical, FULL, case_entry(hospital_tag=None, clinic_tag=None), actor=PHYSICIAN
        )
    assert err.value.code == "tag-mismatch"
    with pytest.raises(AccessDenied) as err:
        vault.append_entry(medical, MEDICAL, case_entry(), actor=PHYSICIAN)
    assert err.value.code == "scope-insufficient"
    note = {"entry_kind": "note", "body": {"summary": "feeling better"}, "author": PATIENT}
    receipt = vault.append_entry(medical, SELF, note, actor=PATIENT)
    assert receipt["seq"] == 2


def test_history_is_append_only_and_stable():
    vault, clock = make_vault()
    sections = init_patient(vault)
    medical = sections["medical"]
    vault.append_entry(medical, FULL, case_entry(), actor=PHYSICIAN)
    first_view = vault.read_section(medical, FULL, actor=PHYSICIAN)["entries"]
    clock.advance(60)
    vault.append_entry(
        medical, FULL, case_entry(body={"summary": "revised plan"}, corrects=first_view[0]["entry_id"]),
        actor=PHYSICIAN,
    )
    second_view = vault.read_section(medical, FULL, actor=PHYSICIAN)["entries"]
    assert len(second_view) == 2
    assert second_view[0] == first_view[0]
    assert second_view[1]["corrects"] == first_view[0]["entry_id"]


def test_disease_search_is_deidentified():
    vault, _ = make_vault()
    sections = init_patient(vault)
    vault.append_entry(sections["medical"], FULL, case_entry(), actor=PHYSICIAN)
    results = vault.search_disease("I10", actor=PHYSICIAN)
    assert len(results) == 1
    hit = results[0]
    assert hit["virtual_id"] == sections["medical"]
    assert hit["physician"] == PHYSICIAN
    serialized = json.dumps(results)
    assert PATIENT not in serialized
    assert HOSPITAL not in serialized
    assert vault.search_disease("E11", actor=PHYSICIAN) == []


def test_id_resolve_and_owner_round_trip():
    vault, _ = make_vault()
    sections = init_patient(vault)
    got = vault.id_resolve(PATIENT, ["medical"], cause="id_search", actor=PHYSICIAN)
    assert got == {"medical": sections["medical"]}
    owner, kind = vault.owner_of(sections["medical"], cause="relay", actor=PHYSICIAN)
    assert owner == PATIENT and kind == "medical"
    causes = [e.detail["cause"] for e in vault._audit.select(lambda e: e.action == ESCROW_UNLOCK)]
    assert causes == ["id_search", "relay"]
    with pytest.raises(NotFound):
        vault.owner_of("0" * 32, cause="relay", actor=PHYSICIAN)


def test_contact_merge_stores_national_reference():
    vault, _ = make_vault()
    sections = init_patient(vault)
    vault.merge_contact_fields(PATIENT, {"ssn": "289-55-0441"}, cause="verification", actor="MOH.EG")
    view = vault.read_section(sections["contact"], SELF, actor=PATIENT)
    assert view["payload"]["ssn"] == "289-55-0441"
    assert view["payload"]["phone"] == "+20-100"
    raw = json.dumps(vault.dump())
    assert "289-55-0441" not in raw


def test_store_is_encrypted_at_rest(tmp_path):
    path = tmp_path / "vault.ndjson"
    vault, _ = make_vault(path=str(path))
    sections = init_patient(vault)
    vault.append_entry(sections["medical"], FULL, case_entry(), actor=PHYSICIAN)
    for raw in (json.dumps(vault.dump()), path.read_text()):
        assert "hypertension" not in raw
        assert "amlodipine" not in raw
        assert "NationalCare" not in raw
        assert "Corniche" not in raw


def test_replay_restores_records(tmp_path):
    path = tmp_path / "vault.ndjson"
    vault, _ = make_vault(path=str(path))
    sections = init_patient(vault)
    vault.append_entry(sections["medical"], FULL, case_entry(), actor=PHYSICIAN)

    clock = ManualClock(9000.0)
    reopened = RecordVault(
        "EG", vault._keys, clock=clock, audit=AuditLog(clock=clock), kdf_iterations=64, path=str(path)
    )
    got = reopened.resolve_sections(PATIENT, PatientCredential("pw-1"), actor=PATIENT)
    assert got == sections
    view = reopened.read_section(sections["medical"], FULL, actor=PHYSICIAN)
    assert view["entries"][0]["body"]["summary"] == "hypertension follow-up"


def test_join_oracle_finds_nothing_without_keys():
    vault, _ = make_vault()
    truth = {}
    for i in range(1, 11):
        pid = f"EG.ALX-02.MAN-004.{i:06X}"
        truth[pid] = vault.init_record(
            pid, password=f"pw-{i}", biometric_digest=f"bio-{i}",
            contact={"phone": f"+20-{i}"},
        )
        vault.append_entry(
            truth[pid]["medical"], SELF,
            {"entry_kind": "note", "body": {"summary": f"day {i}"}, "author": pid},
            actor=pid,
        )
    candidates = linkage_join_candidates(vault.dump())
    assert correct_links(candidates, truth) == set()


def test_join_oracle_recovers_exactly_one_leaked_grant():
    vault, _ = make_vault()
    truth = {}
    for i in range(1, 6):
        pid = f"EG.ALX-02.MAN-004.{i:06X}"
        truth[pid] = vault.init_record(pid, password=f"pw-{i}")
    leaked_pid = "EG.ALX-02.MAN-004.000003"
    key_hex = "77" * 32
    vault.create_grant_unlock("g-leak", key_hex, PHYSICIAN, ["medical"], leaked_pid, truth[leaked_pid])
    from ghr.sealing import unseal

    blob = vault.dump()["grant_unlocks"][0]["blob"]
    payload = unseal(bytes.fromhex(key_hex), blob, aad="grant:g-leak")
    candidates = linkage_join_candidates(vault.dump(), unsealed_payloads=[payload])
    links = correct_links(candidates, truth)
    assert links == {(leaked_pid, truth[leaked_pid]["medical"])}
