"""Identifier grammar tests.

``oracle.py`` in this directory re-declares the five grammars as plain
character-class tables, so round-trip and mutation expectations are
computed without touching the implementation under test.
"""
import random

import pytest

from ghr.errors import MalformedId
from ghr.ids import (
    HospitalId,
    MinistryId,
    PatientId,
    PhysicianId,
    RootId,
    format_hospital_sequence,
    format_patient_sequence,
    format_physician_sequence,
    kind_of,
    parse_id,
)

from oracle import ID_GRAMMARS, mutate_id, oracle_scan_position, random_valid_id

PARSERS = {
    "patient": PatientId.parse,
    "physician": PhysicianId.parse,
    "hospital": HospitalId.parse,
    "ministry": MinistryId.parse,
    "root": RootId.parse,
}


def test_patient_example_fields():
    pid = PatientId.parse("EG.ALX-02.MAN-004.FFFFFF")
    assert pid.country == "EG"
    assert pid.province == "ALX-02"
    assert pid.city == "MAN-004"
    assert pid.sequence == "FFFFFF"
    assert str(pid) == "EG.ALX-02.MAN-004.FFFFFF"


def test_physician_example_fields():
    did = PhysicianId.parse("EG.ALX-002.003.003.00001")
    assert did.province == "ALX-002"
    assert did.city == "003"
    assert did.area == "003"
    assert did.sequence == "00001"
    assert str(did) == "EG.ALX-002.003.003.00001"


def test_hospital_example_accepts_mixed_case():
    hid = HospitalId.parse("HOS.EG.Alx-002.002.00001-01")
    assert hid.org_code == "HOS"
    assert hid.province == "ALX-002"
    assert str(hid) == "HOS.EG.ALX-002.002.00001-01"


def test_ministry_and_root_ids():
    assert str(MinistryId.parse("moh.eg")) == "MOH.EG"
    assert str(RootId.parse("WHO")) == "WHO"
    with pytest.raises(MalformedId):
        MinistryId.parse("MOH.E")


def test_constructor_normalizes_and_validates():
    pid = PatientId(country="eg", province="alx-02", city="man-004", sequence="00000a")
    assert str(pid) == "EG.ALX-02.MAN-004.00000A"
    with pytest.raises(MalformedId):
        PatientId(country="EGY", province="ALX-02", city="MAN-004", sequence="000001")


def test_bad_country_reports_position_one():
    with pytest.raises(MalformedId) as err:
        PatientId.parse("E1.ALX-02.MAN-004.FFFFFF")
    assert err.value.position == 1
    assert err.value.field == "country"
    assert err.value.code == "malformed-id"


def test_generic_parse_reports_deepest_grammar():
    with pytest.raises(MalformedId) as err:
        parse_id("E1.ALX-02.MAN-004.FFFFFF")
    assert err.value.position == 1
    assert err.value.field == "country"


def test_truncation_and_trailing_positions():
    with pytest.raises(MalformedId) as err:
        PatientId.parse("EG.ALX-02.MAN-004.FFF")
    assert err.value.position == 21
    with pytest.raises(MalformedId) as err:
        PatientId.parse("EG.ALX-02.MAN-004.FFFFFF7")
    assert err.value.position == 24
    assert err.value.field == "end"


def test_parse_id_dispatches_every_kind():
    cases = {
        "EG.ALX-02.MAN-004.000001": ("patient", PatientId),
        "EG.ALX-002.003.003.00001": ("physician", PhysicianId),
        "HOS.EG.ALX-002.002.00001-01": ("hospital", HospitalId),
        "MOH.EG": ("ministry", MinistryId),
        "WHO": ("root", RootId),
    }
    for text, (kind, cls) in cases.items():
        parsed = parse_id(text)
        assert isinstance(parsed, cls)
        assert kind_of(parsed) == kind
        assert str(parsed) == text


def test_sequence_formatting():
    assert format_patient_sequence(1) == "000001"
    assert format_patient_sequence(100) == "000064"
    assert format_physician_sequence(1) == "00001"
    assert format_physician_sequence(255) == "000FF"
    assert format_hospital_sequence(1) == "00001-01"
    assert format_hospital_sequence(2) == "00002-01"
    with pytest.raises(ValueError):
        format_patient_sequence(0)
    with pytest.raises(ValueError):
        format_patient_sequence(0x1000000)


def test_random_round_trip_all_kinds():
    rng = random.Random(0xD1CE)
    for kind in ID_GRAMMARS:
        for _ in range(500):
            text = random_valid_id(rng, kind)
            parsed = PARSERS[kind](text)
            assert str(parsed) == text
            generic = parse_id(text)
            assert str(generic) == text
            assert kind_of(generic) == kind


def test_mutations_rejected_at_oracle_position():
    rng = random.Random(0xBAD)
    for kind in ID_GRAMMARS:
        for _ in range(400):
            text = random_valid_id(rng, kind)
            mutated = mutate_id(rng, kind, text)
            expected = oracle_scan_position(kind, mutated)
            assert expected is not None
            with pytest.raises(MalformedId) as err:
                PARSERS[kind](mutated)
            assert err.value.position == expected, (kind, text, mutated)


def test_lower_case_round_trip_is_case_insensitive():
    rng = random.Random(7)
    for _ in range(200):
        text = random_valid_id(rng, "patient")
        assert str(PatientId.parse(text.lower())) == text
