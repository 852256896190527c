"""Registry hierarchy, allocation, and persistence tests."""
import pytest

from ghr.clock import ManualClock
from ghr.config import CloudConfig
from ghr.errors import AccessDenied, Conflict
from ghr.identity import (
    AccountStatus,
    BindingKind,
    CodeTables,
    OrganizationBinding,
    Registry,
)
from ghr.ids import format_patient_sequence

CFG = CloudConfig(kdf_iterations=64)
BINDING = OrganizationBinding(BindingKind.ADDRESS_ALLOWLIST, addresses=("10.0.0.1",))


def make_registry(path=None):
    tables = CodeTables(
        provinces={"ALX": {"number": 2, "cities": {"MAN": 4}, "areas": [3]}},
        org_kinds=("HOS",),
    )
    return Registry(
        "EG",
        clock=ManualClock(100.0),
        config=CFG,
        code_tables=tables,
        root_password="root-pw",
        path=path,
    )


def seed_hierarchy(reg):
    moh = reg.register_ministry("WHO", display_name="Ministry of Health", password="moh-pw", binding=BINDING)
    hospital = reg.register_hospital(
        str(moh),
        display_name="Alexandria General",
        password="hos-pw",
        province="ALX",
        province_number=2,
        city_number=2,
        binding=BINDING,
    )
    return moh, hospital


def test_root_profile_seeded_and_authenticates():
    reg = make_registry()
    root = reg.lookup("WHO")
    assert root.kind == "root"
    assert reg.authenticate("WHO", "root-pw")
    assert not reg.authenticate("WHO", "wrong")


def test_ministry_registration_and_duplicates():
    reg = make_registry()
    moh, _ = seed_hierarchy(reg)
    assert str(moh) == "MOH.EG"
    with pytest.raises(Conflict) as err:
        reg.register_ministry("WHO", display_name="Again", password="x", binding=BINDING)
    assert err.value.code == "duplicate-country"


def test_only_root_registers_ministries():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    with pytest.raises(AccessDenied) as err:
        reg.register_ministry(str(hospital), display_name="Rogue", password="x", binding=BINDING)
    assert err.value.code == "caller-not-who"


def test_ministry_country_must_match_cloud():
    reg = make_registry()
    with pytest.raises(AccessDenied) as err:
        reg.register_ministry("WHO", display_name="M", password="x", binding=BINDING, country="PS")
    assert err.value.code == "wrong-country-moh"


def test_hospital_id_example_and_increment():
    reg = make_registry()
    moh, hospital = seed_hierarchy(reg)
    assert str(hospital) == "HOS.EG.ALX-002.002.00001-01"
    second = reg.register_hospital(
        str(moh), display_name="Second", password="p", province="ALX",
        province_number=2, city_number=2, binding=BINDING,
    )
    assert str(second) == "HOS.EG.ALX-002.002.00002-01"


def test_hospital_requires_ministry_and_binding():
    reg = make_registry()
    moh, hospital = seed_hierarchy(reg)
    with pytest.raises(AccessDenied) as err:
        reg.register_hospital(
            str(hospital), display_name="H", password="p", province="ALX",
            province_number=2, city_number=2, binding=BINDING,
        )
    assert err.value.code == "caller-not-moh"
    with pytest.raises(Conflict) as err:
        reg.register_hospital(
            str(moh), display_name="H", password="p", province="ALX",
            province_number=2, city_number=2, binding=OrganizationBinding(BindingKind.ADDRESS_ALLOWLIST),
        )
    assert err.value.code == "missing-binding"


def test_physician_id_example_and_caller_checks():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    physician = reg.register_physician(
        str(hospital), display_name="Dr A", password="d", province="ALX",
        province_number=2, city_number=3, area_number=3,
    )
    assert str(physician) == "EG.ALX-002.003.003.00001"
    with pytest.raises(AccessDenied) as err:
        reg.register_physician(
            "MOH.EG", display_name="Dr B", password="d", province="ALX",
            province_number=2, city_number=3, area_number=3,
        )
    assert err.value.code == "caller-not-hospital"
    with pytest.raises(Conflict) as err:
        reg.register_physician(
            str(hospital), display_name="Dr C", password="d", province="ALX",
            province_number=2, city_number=3, area_number=3,
            hospital_id="HOS.EG.ALX-002.002.09999-01",
        )
    assert err.value.code == "binding-mismatch"


def test_patient_id_example_and_sequence_oracle():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    expected = 0
    for _ in range(100):
        expected += 1
        registration = reg.create_patient(
            str(hospital), display_name=f"P{expected}", province="ALX",
            province_number=2, city="MAN", city_number=4,
        )
        assert registration.patient_id.sequence == format_patient_sequence(expected)
    assert str(registration.patient_id) == "EG.ALX-02.MAN-004.000064"
    assert reg.authenticate(str(registration.patient_id), registration.initial_password)


def test_patient_ids_unique_across_scopes():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    seen = set()
    for city_number in (4, 5):
        for _ in range(30):
            rid = reg.create_patient(
                str(hospital), display_name="P", province="ALX",
                province_number=2, city="MAN", city_number=city_number,
            ).patient_id
            assert str(rid) not in seen
            seen.add(str(rid))
    assert len(seen) == 60


def test_verify_patient_transitions_once():
    reg = make_registry()
    moh, hospital = seed_hierarchy(reg)
    pid = reg.create_patient(
        str(hospital), display_name="P", province="ALX", province_number=2, city="MAN", city_number=4
    ).patient_id
    assert not reg.lookup(str(pid)).verified
    reg.verify_patient(str(moh), str(pid))
    assert reg.lookup(str(pid)).verified
    with pytest.raises(Conflict) as err:
        reg.verify_patient(str(moh), str(pid))
    assert err.value.code == "already-verified"
    with pytest.raises(AccessDenied) as err:
        reg.verify_patient(str(hospital), str(pid))
    assert err.value.code == "caller-not-moh"


def test_suspended_accounts_lose_their_powers():
    reg = make_registry()
    moh, hospital = seed_hierarchy(reg)
    reg.set_status(str(moh), str(hospital), AccountStatus.SUSPENDED)
    with pytest.raises(AccessDenied) as err:
        reg.register_physician(
            str(hospital), display_name="Dr", password="d", province="ALX",
            province_number=2, city_number=3, area_number=3,
        )
    assert err.value.code == "caller-not-hospital"
    with pytest.raises(AccessDenied) as err:
        reg.set_status(str(hospital), str(moh), AccountStatus.SUSPENDED)
    assert err.value.code == "caller-not-guardian"


def test_biometric_digest_returned_not_stored():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    registration = reg.create_patient(
        str(hospital), display_name="P", province="ALX", province_number=2,
        city="MAN", city_number=4, biometric="thumbprint-sample",
    )
    assert registration.biometric_digest is not None
    profile = reg.lookup(str(registration.patient_id))
    assert "thumbprint-sample" not in str(profile.to_row())


def test_subtree_visibility():
    reg = make_registry()
    moh, hospital = seed_hierarchy(reg)
    physician = reg.register_physician(
        str(hospital), display_name="Dr", password="d", province="ALX",
        province_number=2, city_number=3, area_number=3,
    )
    tree = reg.subtree(str(moh))
    assert str(hospital) in tree and str(physician) in tree
    assert "WHO" not in tree


def test_persistence_replay_continues_counters(tmp_path):
    path = tmp_path / "registry.ndjson"
    reg = make_registry(path=str(path))
    _, hospital = seed_hierarchy(reg)
    first = reg.create_patient(
        str(hospital), display_name="P", province="ALX", province_number=2, city="MAN", city_number=4
    ).patient_id
    assert first.sequence == "000001"

    reloaded = Registry("EG", clock=ManualClock(999.0), config=CFG, root_password="root-pw", path=str(path))
    assert reloaded.lookup(str(hospital)).display_name == "Alexandria General"
    nxt = reloaded.create_patient(
        str(hospital), display_name="Q", province="ALX", province_number=2, city="MAN", city_number=4
    ).patient_id
    assert nxt.sequence == "000002"
    another_hospital = reloaded.register_hospital(
        "MOH.EG", display_name="Third", password="p", province="ALX",
        province_number=2, city_number=2, binding=BINDING,
    )
    assert str(another_hospital).endswith("00002-01")


def test_name_search_scans_candidates_only():
    reg = make_registry()
    _, hospital = seed_hierarchy(reg)
    alice = reg.create_patient(
        str(hospital), display_name="Alice Example", province="ALX",
        province_number=2, city="MAN", city_number=4,
    ).patient_id
    reg.create_patient(
        str(hospital), display_name="Bob Sample", province="ALX",
        province_number=2, city="MAN", city_number=4,
    )
    hits = reg.search_names("alice", reg.patients_registered_at(str(hospital)))
    assert [p.actor_id for p in hits] == [str(alice)]
    assert reg.search_names("alice", []) == []
