#!/usr/bin/env python3
"""Regenerate data/access_matrix.csv from the written-down privilege rows.

This script is deliberately independent of ghr.policy: each location row
is transcribed here as an explicit outcome template, and the cross
product of all inputs is expanded into one CSV row per combination.
The checked-in CSV is the reference the engine is tested against, so
regenerate it only when the access rules themselves are meant to change.
"""
import csv
import itertools
import sys
from pathlib import Path

REQUESTERS = ("patient_self", "patient_other", "physician", "hospital_staff", "ministry", "root")
LOCATIONS = ("hospital_network", "clinic", "anywhere")
PRESENCE = ("absent", "session_token", "biometric")

FULL = ("full_record", "name+patient_id", "names_and_ids", "yes")
DENIED = ("denied", "", "none", "no")


def physician_row(location, presence, registered, treated, trusted):
    if presence != "absent":
        # Patient at hand with a live token or matching biometric: full
        # record, wherever the physician happens to be.
        return FULL
    if location == "hospital_network":
        if registered:
            return FULL
        return ("medical_only", "disease+patient_id", "ids_only", "no")
    if location == "clinic":
        if treated or trusted:
            return ("medical_only", "disease+name+patient_id", "names_and_ids", "no")
        return ("medical_only", "disease", "ids_only", "no")
    # anywhere, patient absent
    if treated or trusted:
        return ("medical_only", "name+patient_id", "names_and_ids", "no")
    return ("medical_only", "disease", "ids_only", "no")


def staff_row(location, presence, registered, treated, trusted):
    if location == "hospital_network" and registered:
        return ("medical_only", "name+patient_id", "names_and_ids", "yes")
    return DENIED


def outcome(requester, location, presence, registered, treated, trusted):
    if requester == "patient_self":
        return FULL
    if requester in ("patient_other", "ministry", "root"):
        return DENIED
    if requester == "hospital_staff":
        return staff_row(location, presence, registered, treated, trusted)
    return physician_row(location, presence, registered, treated, trusted)


def main(out_path):
    rows = []
    for combo in itertools.product(REQUESTERS, LOCATIONS, PRESENCE, (False, True), (False, True), (False, True)):
        requester, location, presence, registered, treated, trusted = combo
        level, axes, idents, write = outcome(*combo)
        rows.append(
            {
                "requester": requester,
                "location": location,
                "presence": presence,
                "registered_at_hospital": "yes" if registered else "no",
                "previously_treated": "yes" if treated else "no",
                "on_trusted_list": "yes" if trusted else "no",
                "level": level,
                "searchable_by": axes,
                "identifiers_visible": idents,
                "can_write_medical": write,
            }
        )
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_path}")


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else str(
        Path(__file__).resolve().parent.parent / "src" / "ghr" / "data" / "access_matrix.csv"
    )
    main(target)
