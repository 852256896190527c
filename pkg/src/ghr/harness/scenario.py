"""Traffic corpus for load runs.

Each simulated user drives a small care team through one shift: a
hospital desk admits two patients, a staff physician corrects their
case notes, the patients hand out one-time codes that a community
physician redeems at a clinic, and finally the patients review their
own records.  The shift is exactly ninety requests long so throughput
numbers are comparable across runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .topology import ROOT_PASSWORD, World

MOH_PASSWORD = "moh-ops"
HOSPITAL_PASSWORD = "ward-ops"
PHYSICIAN_PASSWORD = "dr-ops"
PATIENT_PASSWORD = "pt-ops"

ENTRIES_PER_PATIENT = 4


class StepFailure(Exception):
    """A scripted request came back not-ok."""

    def __init__(self, action: str, reply: dict):
        self.action = action
        self.code = str(reply.get("error", "call-failed"))
        super().__init__(f"{action}: {self.code}")


@dataclass
class Cohort:
    """The five accounts one simulated user acts through."""

    index: int
    hospital_id: str
    tunnel_secret: str
    ward_address: str
    physician_a: str
    physician_b: str
    clinic_endpoint: str
    clinic_address: str
    patients: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "hospital_id": self.hospital_id,
            "tunnel_secret": self.tunnel_secret,
            "ward_address": self.ward_address,
            "physician_a": self.physician_a,
            "physician_b": self.physician_b,
            "clinic_endpoint": self.clinic_endpoint,
            "clinic_address": self.clinic_address,
            "patients": [dict(p) for p in self.patients],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "Cohort":
        return cls(**row)


@dataclass(frozen=True)
class Step:
    """One scripted request: who sends it, what it is, what it does."""

    role: str
    action: str
    backend: bool
    run: Callable[[], None]


def _call(world: World, op: str, session: str | None = None, **args) -> dict:
    message: dict = {"op": op, "args": args}
    if session is not None:
        message["session"] = session
    reply = world.call(message)
    if not reply.get("ok"):
        raise StepFailure(op, reply)
    return reply["result"]


def seed_base(world: World) -> dict:
    """Create the national layer every cohort hangs off."""
    root = _call(
        world, "login", actor_id="WHO", password=ROOT_PASSWORD, context={"address": "root-ops"}
    )["session"]
    moh = _call(
        world,
        "register_ministry",
        session=root,
        display_name="Ministry of Health",
        password=MOH_PASSWORD,
        binding={"kind": "shared_secret", "secret": "moh-ops-line"},
    )["actor_id"]
    moh_session = _call(
        world, "login", actor_id=moh, password=MOH_PASSWORD, context={"address": "moh-ops"}
    )["session"]
    return {"root_session": root, "ministry_id": moh, "moh_session": moh_session}


def seed_cohorts(world: World, count: int, moh_session: str) -> list[Cohort]:
    """Register one care team per simulated user and pre-trust its locations.

    Location pre-trust mirrors enrollment-time setup; without it every
    first scripted login would stall on a confirmation challenge and the
    run would measure the challenge flow instead of steady traffic.
    """
    cohorts = []
    gateway = world.cloud.gateway
    for u in range(count):
        tunnel = f"tunnel-{u:04d}"
        ward = f"ward-{u:04d}"
        hospital = _call(
            world,
            "register_hospital",
            session=moh_session,
            display_name=f"Load Hospital {u:04d}",
            password=HOSPITAL_PASSWORD,
            province="ALX",
            province_number=2,
            city_number=2,
            binding={"kind": "shared_secret", "secret": tunnel},
        )["actor_id"]
        hospital_ctx = {"hospital_tunnel": hospital, "tunnel_secret": tunnel, "address": ward}
        hos_session = _call(
            world, "login", actor_id=hospital, password=HOSPITAL_PASSWORD, context=hospital_ctx
        )["session"]
        physicians = []
        for tag in ("A", "B"):
            physicians.append(
                _call(
                    world,
                    "register_physician",
                    session=hos_session,
                    display_name=f"Dr {u:04d} {tag}",
                    password=PHYSICIAN_PASSWORD,
                    province="ALX",
                    province_number=2,
                    city_number=3,
                    area_number=3,
                )["actor_id"]
            )
        patients = []
        for tag in ("Alpha", "Beta"):
            home = f"home-{u:04d}-{tag.lower()}"
            created = _call(
                world,
                "register_patient",
                session=hos_session,
                display_name=f"Pat {u:04d} {tag}",
                province="ALX",
                province_number=2,
                city="MAN",
                city_number=4,
                password=PATIENT_PASSWORD,
                contact={"phone": f"+20-{u:04d}", "address": home},
                insurance={"payer": "NationalCare"},
            )
            patients.append(
                {
                    "patient_id": created["patient_id"],
                    "display_name": f"Pat {u:04d} {tag}",
                    "home_address": home,
                }
            )
        clinic = f"clinic-{u:04d}.sim"
        clinic_addr = f"clinic-addr-{u:04d}"
        dr_b_session = _call(
            world,
            "login",
            actor_id=physicians[1],
            password=PHYSICIAN_PASSWORD,
            context={"address": clinic_addr},
        )["session"]
        _call(world, "register_clinic", session=dr_b_session, endpoint=clinic)
        _call(world, "logout", session=dr_b_session)
        _call(world, "logout", session=hos_session)

        gateway.preconfirm_location(hospital, f"hospital:{hospital}")
        gateway.preconfirm_location(physicians[0], f"hospital:{hospital}")
        gateway.preconfirm_location(physicians[1], f"clinic:{clinic}")
        for patient in patients:
            gateway.preconfirm_location(patient["patient_id"], f"addr:{patient['home_address']}")

        cohorts.append(
            Cohort(
                index=u,
                hospital_id=hospital,
                tunnel_secret=tunnel,
                ward_address=ward,
                physician_a=physicians[0],
                physician_b=physicians[1],
                clinic_endpoint=clinic,
                clinic_address=clinic_addr,
                patients=patients,
            )
        )
    return cohorts


def expected_writes(cohort: Cohort) -> dict:
    """What the script should leave behind, keyed by patient id."""
    out = {}
    for patient in cohort.patients:
        pid = patient["patient_id"]
        out[pid] = [
            {"entry_kind": "case", "author": cohort.hospital_id, "marker": f"{pid}:admit"},
            {"entry_kind": "case", "author": cohort.physician_a, "marker": f"{pid}:amend"},
            {"entry_kind": "visit", "author": cohort.physician_b, "marker": f"{pid}:visit"},
            {"entry_kind": "note", "author": pid, "marker": f"{pid}:note"},
        ]
    return out


def build_script(world: World, cohort: Cohort) -> list[Step]:
    """The ninety-request shift for one simulated user.

    Nine login bundles (login, whoami, location check, dashboard,
    notification poll) each end in a logout; between the bundle and its
    logout the acting account does its part of the shift.
    """
    state: dict = {"sessions": {}, "sections": {}, "case_entry": {}, "otp": {}}
    pat1 = cohort.patients[0]["patient_id"]
    pat2 = cohort.patients[1]["patient_id"]

    contexts = {
        "hospital": {
            "hospital_tunnel": cohort.hospital_id,
            "tunnel_secret": cohort.tunnel_secret,
            "address": cohort.ward_address,
        },
        "phys_a": {
            "hospital_tunnel": cohort.hospital_id,
            "tunnel_secret": cohort.tunnel_secret,
            "address": cohort.ward_address,
        },
        "phys_b": {"clinic_endpoint": cohort.clinic_endpoint, "address": cohort.clinic_address},
        "pat1": {"address": cohort.patients[0]["home_address"]},
        "pat2": {"address": cohort.patients[1]["home_address"]},
    }
    accounts = {
        "hospital": (cohort.hospital_id, HOSPITAL_PASSWORD),
        "phys_a": (cohort.physician_a, PHYSICIAN_PASSWORD),
        "phys_b": (cohort.physician_b, PHYSICIAN_PASSWORD),
        "pat1": (pat1, PATIENT_PASSWORD),
        "pat2": (pat2, PATIENT_PASSWORD),
    }
    patient_of = {"pat1": pat1, "pat2": pat2}

    def call(op, role=None, **args):
        session = state["sessions"][role] if role is not None else None
        return _call(world, op, session=session, **args)

    def login_fn(role):
        def run():
            actor_id, password = accounts[role]
            result = call("login", actor_id=actor_id, password=password, context=contexts[role])
            state["sessions"][role] = result["session"]

        return run

    def simple(role, op, **args):
        def run():
            call(op, role=role, **args)

        return run

    def dashboard_fn(role):
        def run():
            result = call("dashboard", role=role)
            pid = patient_of.get(role)
            if pid is not None:
                state["sections"][pid] = result["section_ids"]

        return run

    def logout_fn(role):
        def run():
            call("logout", role=role)
            state["sessions"].pop(role, None)

        return run

    def bundle(role):
        patient_login = role in patient_of
        return [
            Step(role, "login", patient_login, login_fn(role)),
            Step(role, "whoami", False, simple(role, "whoami")),
            Step(role, "location_status", False, simple(role, "location_status")),
            Step(role, "dashboard", False, dashboard_fn(role)),
            Step(role, "notifications", False, simple(role, "notifications", peek=True)),
        ]

    def search_name_fn(role, pid, display_name):
        def run():
            hits = call("search", role=role, query=display_name)["hits"]
            for hit in hits:
                if hit.get("patient_id") == pid:
                    state["sections"][pid] = hit["sections"]
                    return
            raise StepFailure("search", {"error": "patient-not-found"})

        return run

    def search_id_fn(role, pid):
        def run():
            hit = call("search", role=role, patient_id=pid)["hits"][0]
            state["sections"][pid] = hit["sections"]

        return run

    def read_medical_fn(role, pid):
        def run():
            call("read_section", role=role, virtual_id=state["sections"][pid]["medical"])

        return run

    def admit_fn(pid):
        def run():
            receipt = call(
                "append_entry",
                role="hospital",
                virtual_id=state["sections"][pid]["medical"],
                entry_kind="case",
                body={"marker": f"{pid}:admit", "summary": "admission triage"},
                hospital_tag=cohort.hospital_id,
                disease_codes=["A09"],
            )
            state["case_entry"][pid] = receipt["entry_id"]

        return run

    def amend_fn(pid):
        def run():
            call(
                "append_entry",
                role="phys_a",
                virtual_id=state["sections"][pid]["medical"],
                entry_kind="case",
                body={"marker": f"{pid}:amend", "summary": "plan amended on review"},
                hospital_tag=cohort.hospital_id,
                physician_tag=cohort.physician_a,
                corrects=state["case_entry"][pid],
            )

        return run

    def otp_generate_fn(role):
        def run():
            state["otp"][patient_of[role]] = call("otp_generate", role=role)["code"]

        return run

    def otp_redeem_fn(pid):
        def run():
            result = call("otp_redeem", role="phys_b", patient_id=pid, code=state["otp"][pid])
            state["sections"][pid] = result["sections"]

        return run

    def visit_fn(pid):
        def run():
            call(
                "append_entry",
                role="phys_b",
                virtual_id=state["sections"][pid]["medical"],
                entry_kind="visit",
                body={"marker": f"{pid}:visit", "summary": "clinic follow-up"},
                clinic_tag=cohort.clinic_endpoint,
                physician_tag=cohort.physician_b,
            )

        return run

    def self_note_fn(role):
        def run():
            pid = patient_of[role]
            call(
                "append_entry",
                role=role,
                virtual_id=state["sections"][pid]["medical"],
                entry_kind="note",
                body={"marker": f"{pid}:note", "text": "symptoms settled"},
            )

        return run

    def admission_body(pid, display_name):
        return [
            Step("hospital", "search", True, search_name_fn("hospital", pid, display_name)),
            Step("hospital", "read_section", True, read_medical_fn("hospital", pid)),
            Step("hospital", "append_entry", True, admit_fn(pid)),
            Step("hospital", "read_section", True, read_medical_fn("hospital", pid)),
        ]

    def amendment_body(pid):
        return [
            Step("phys_a", "search", True, search_id_fn("phys_a", pid)),
            Step("phys_a", "read_section", True, read_medical_fn("phys_a", pid)),
            Step("phys_a", "append_entry", True, amend_fn(pid)),
            Step("phys_a", "read_section", True, read_medical_fn("phys_a", pid)),
        ]

    def clinic_body(pid):
        return [
            Step("phys_b", "otp_redeem", True, otp_redeem_fn(pid)),
            Step("phys_b", "append_entry", True, visit_fn(pid)),
            Step("phys_b", "read_section", True, read_medical_fn("phys_b", pid)),
        ]

    def review_body(role):
        pid = patient_of[role]
        return [
            Step(role, "read_section", True, read_medical_fn(role, pid)),
            Step(role, "list_grants", False, simple(role, "list_grants")),
            Step(role, "get_global_access", False, simple(role, "get_global_access")),
            Step(role, "audit_query", False, simple(role, "audit_query", limit=20)),
            Step(role, "append_entry", True, self_note_fn(role)),
            Step(role, "read_section", True, read_medical_fn(role, pid)),
        ]

    script: list[Step] = []

    def shift(role, body):
        script.extend(bundle(role))
        script.extend(body)
        script.append(Step(role, "logout", False, logout_fn(role)))

    shift(
        "hospital",
        admission_body(pat1, cohort.patients[0]["display_name"])
        + admission_body(pat2, cohort.patients[1]["display_name"]),
    )
    shift("phys_a", amendment_body(pat1))
    shift("pat1", [Step("pat1", "otp_generate", True, otp_generate_fn("pat1"))])
    shift("phys_b", clinic_body(pat1))
    shift("phys_a", amendment_body(pat2))
    shift("pat2", [Step("pat2", "otp_generate", True, otp_generate_fn("pat2"))])
    shift("phys_b", clinic_body(pat2))
    shift("pat1", review_body("pat1"))
    shift("pat2", review_body("pat2"))
    return script
