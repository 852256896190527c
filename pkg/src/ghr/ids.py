"""Structured actor identifiers.

Five identifier shapes exist, all joined with ``.`` between fields and
``-`` inside a field, always upper case:

* patient      ``EG.ALX-02.MAN-004.FFFFFF``   (province letters + 2 digits,
  city letters + 3 digits, 6 hex digits of sequence)
* physician    ``EG.ALX-002.003.003.FFFFF``   (province letters + 3 digits,
  numeric city and area codes, 5 hex digits of sequence)
* hospital     ``HOS.EG.ALX-002.002.00001-01`` (3-letter organization kind,
  numeric city code, decimal sequence plus a 2-digit branch)
* ministry     ``MOH.EG``
* root         ``WHO``

Each grammar is a fixed-length string of character classes, so parsing
can always report the exact index of the first offending character.
Lower-case input is accepted and normalized to upper case.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Final, Union

from .errors import MalformedId

__all__ = [
    "PatientId",
    "PhysicianId",
    "HospitalId",
    "MinistryId",
    "RootId",
    "ActorId",
    "parse_id",
    "kind_of",
    "format_patient_sequence",
    "format_physician_sequence",
    "format_hospital_sequence",
    "patient_province_code",
    "patient_city_code",
    "org_province_code",
    "org_city_code",
    "DEFAULT_ORG_KINDS",
]

DEFAULT_ORG_KINDS: Final = ("HOS",)

_ALPHA: Final = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
_DIGIT: Final = frozenset("0123456789")
_HEX: Final = frozenset("0123456789ABCDEF")

# Pattern characters: '@' upper-case letter, '#' decimal digit,
# '$' upper-case hex digit; anything else matches itself literally.
_CLASSES: Final = {
    "@": (_ALPHA, "letter"),
    "#": (_DIGIT, "digit"),
    "$": (_HEX, "hex digit"),
}


def _compile(fields: tuple[tuple[str, str], ...]) -> tuple[tuple[str, frozenset, str], ...]:
    """Flatten (field, pattern) pairs into one slot per character."""
    slots: list[tuple[str, frozenset, str]] = []
    for index, (name, pattern) in enumerate(fields):
        if index:
            slots.append((name, frozenset("."), "'.'"))
        for ch in pattern:
            if ch in _CLASSES:
                allowed, desc = _CLASSES[ch]
            else:
                allowed, desc = frozenset(ch), f"{ch!r}"
            slots.append((name, allowed, desc))
    return tuple(slots)


_PATIENT_FIELDS: Final = (
    ("country", "@@"),
    ("province", "@@@-##"),
    ("city", "@@@-###"),
    ("sequence", "$$$$$$"),
)
_PHYSICIAN_FIELDS: Final = (
    ("country", "@@"),
    ("province", "@@@-###"),
    ("city", "###"),
    ("area", "###"),
    ("sequence", "$$$$$"),
)
_HOSPITAL_FIELDS: Final = (
    ("org_code", "@@@"),
    ("country", "@@"),
    ("province", "@@@-###"),
    ("city", "###"),
    ("sequence", "#####-##"),
)
_MINISTRY_FIELDS: Final = (("org_code", "MOH"), ("country", "@@"))
_ROOT_FIELDS: Final = (("org_code", "WHO"),)

_SLOTS: Final = {
    "patient": _compile(_PATIENT_FIELDS),
    "physician": _compile(_PHYSICIAN_FIELDS),
    "hospital": _compile(_HOSPITAL_FIELDS),
    "ministry": _compile(_MINISTRY_FIELDS),
    "root": _compile(_ROOT_FIELDS),
}
_FIELDS: Final = {
    "patient": _PATIENT_FIELDS,
    "physician": _PHYSICIAN_FIELDS,
    "hospital": _HOSPITAL_FIELDS,
    "ministry": _MINISTRY_FIELDS,
    "root": _ROOT_FIELDS,
}


def _scan(kind: str, text: str) -> dict[str, str]:
    """Validate ``text`` against one grammar, returning its fields.

    Raises :class:`MalformedId` carrying the index of the first
    character that breaks the grammar.
    """
    slots = _SLOTS[kind]
    for index in range(min(len(text), len(slots))):
        field, allowed, desc = slots[index]
        ch = text[index]
        if ch not in allowed:
            raise MalformedId(
                f"invalid {kind} id: character {ch!r} at index {index} "
                f"({field} field expects {desc})",
                position=index,
                field=field,
            )
    if len(text) < len(slots):
        field, _, desc = slots[len(text)]
        raise MalformedId(
            f"invalid {kind} id: truncated at index {len(text)} "
            f"({field} field expects {desc})",
            position=len(text),
            field=field,
        )
    if len(text) > len(slots):
        raise MalformedId(
            f"invalid {kind} id: unexpected character at index {len(slots)}",
            position=len(slots),
            field="end",
        )
    values: dict[str, list[str]] = {name: [] for name, _ in _FIELDS[kind]}
    cursor = 0
    for name, pattern in _FIELDS[kind]:
        if cursor and text[cursor] == ".":
            cursor += 1
        values[name].append(text[cursor : cursor + len(pattern)])
        cursor += len(pattern)
    return {name: parts[0] for name, parts in values.items()}


def _normalize(text: str) -> str:
    return text.upper()


@dataclass(frozen=True)
class PatientId:
    country: str
    province: str
    city: str
    sequence: str

    def __post_init__(self):
        for name in ("country", "province", "city", "sequence"):
            object.__setattr__(self, name, _normalize(getattr(self, name)))
        _scan("patient", str(self))

    def __str__(self) -> str:
        return f"{self.country}.{self.province}.{self.city}.{self.sequence}"

    @classmethod
    def parse(cls, text: str) -> "PatientId":
        fields = _scan("patient", _normalize(text))
        return cls(**fields)


@dataclass(frozen=True)
class PhysicianId:
    country: str
    province: str
    city: str
    area: str
    sequence: str

    def __post_init__(self):
        for name in ("country", "province", "city", "area", "sequence"):
            object.__setattr__(self, name, _normalize(getattr(self, name)))
        _scan("physician", str(self))

    def __str__(self) -> str:
        return f"{self.country}.{self.province}.{self.city}.{self.area}.{self.sequence}"

    @classmethod
    def parse(cls, text: str) -> "PhysicianId":
        fields = _scan("physician", _normalize(text))
        return cls(**fields)


@dataclass(frozen=True)
class HospitalId:
    org_code: str
    country: str
    province: str
    city: str
    sequence: str

    def __post_init__(self):
        for name in ("org_code", "country", "province", "city", "sequence"):
            object.__setattr__(self, name, _normalize(getattr(self, name)))
        _scan("hospital", str(self))

    def __str__(self) -> str:
        return f"{self.org_code}.{self.country}.{self.province}.{self.city}.{self.sequence}"

    @classmethod
    def parse(cls, text: str) -> "HospitalId":
        fields = _scan("hospital", _normalize(text))
        return cls(**fields)


@dataclass(frozen=True)
class MinistryId:
    country: str

    def __post_init__(self):
        object.__setattr__(self, "country", _normalize(self.country))
        _scan("ministry", str(self))

    def __str__(self) -> str:
        return f"MOH.{self.country}"

    @classmethod
    def parse(cls, text: str) -> "MinistryId":
        fields = _scan("ministry", _normalize(text))
        return cls(country=fields["country"])


@dataclass(frozen=True)
class RootId:
    def __str__(self) -> str:
        return "WHO"

    @classmethod
    def parse(cls, text: str) -> "RootId":
        _scan("root", _normalize(text))
        return cls()


ActorId = Union[PatientId, PhysicianId, HospitalId, MinistryId, RootId]

_KIND_ORDER: Final = ("patient", "physician", "hospital", "ministry", "root")
_KIND_TYPES: Final = {
    "patient": PatientId,
    "physician": PhysicianId,
    "hospital": HospitalId,
    "ministry": MinistryId,
    "root": RootId,
}


def parse_id(text: str) -> ActorId:
    """Parse an identifier of any kind.

    On failure the reported error is the one from the grammar whose
    match progressed furthest, so the index points at the first
    character no identifier shape can accept.
    """
    normalized = _normalize(text)
    best: MalformedId | None = None
    for kind in _KIND_ORDER:
        try:
            return _KIND_TYPES[kind].parse(normalized)
        except MalformedId as exc:
            if best is None or exc.position > best.position:
                best = exc
    assert best is not None
    raise best


def kind_of(actor: ActorId) -> str:
    for kind, cls in _KIND_TYPES.items():
        if isinstance(actor, cls):
            return kind
    raise TypeError(f"not an actor id: {actor!r}")


def format_patient_sequence(n: int) -> str:
    if not 0 < n <= 0xFFFFFF:
        raise ValueError(f"patient sequence out of range: {n}")
    return f"{n:06X}"


def format_physician_sequence(n: int) -> str:
    if not 0 < n <= 0xFFFFF:
        raise ValueError(f"physician sequence out of range: {n}")
    return f"{n:05X}"


def format_hospital_sequence(n: int, branch: int = 1) -> str:
    if not 0 < n <= 99999:
        raise ValueError(f"hospital sequence out of range: {n}")
    if not 0 < branch <= 99:
        raise ValueError(f"hospital branch out of range: {branch}")
    return f"{n:05d}-{branch:02d}"


def patient_province_code(letters: str, number: int) -> str:
    return f"{_normalize(letters)}-{number:02d}"


def patient_city_code(letters: str, number: int) -> str:
    return f"{_normalize(letters)}-{number:03d}"


def org_province_code(letters: str, number: int) -> str:
    return f"{_normalize(letters)}-{number:03d}"


def org_city_code(number: int) -> str:
    return f"{number:03d}"
