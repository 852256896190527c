"""Discrete-event load runner.

The loop owns a virtual clock and an event heap.  A user's next request
enters the heap when its previous one completes; each request pays a
network delay, waits for a gateway worker, optionally waits for a
record-store worker, and pays the return delay.  The real API call runs
when the completion event fires, so observed behaviour and measured
timing come from the same interleaving.
"""
from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field

from ..audit import APPEND
from ..vault import entry_digest
from . import scenario
from .model import NodeQueue, TimingModel
from .report import AggregateReport, RequestSample, build_report, warmup_curve
from .scenario import Cohort, StepFailure, build_script, seed_base, seed_cohorts
from .topology import Topology, World, boot_world


@dataclass
class RunResult:
    """Everything a finished load run leaves behind."""

    topology: Topology
    users: int
    samples: list[RequestSample]
    report: AggregateReport
    cohorts: list[Cohort]
    expected: dict[str, list[dict]]
    world: World
    wall_s: float
    errors: list[dict] = field(default_factory=list)

    @property
    def error_count(self) -> int:
        return len(self.errors)

    def warmup(self) -> dict:
        return warmup_curve(self.samples)


@dataclass
class VerifyReport:
    ok: bool
    patients_checked: int
    entries_checked: int
    problems: list[str]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "patients_checked": self.patients_checked,
            "entries_checked": self.entries_checked,
            "problems": self.problems,
        }


@dataclass
class SweepResult:
    points: list[dict]

    def averages_non_decreasing(self) -> bool:
        avgs = [p["avg_ms"] for p in self.points]
        return all(later >= earlier for earlier, later in zip(avgs, avgs[1:]))

    def to_dict(self) -> dict:
        return {"points": self.points, "monotone": self.averages_non_decreasing()}


def run_scenario(
    topology: Topology,
    users: int | None = None,
    ramp_s: float | None = None,
    world: World | None = None,
    progress=None,
) -> RunResult:
    """Seed cohorts and replay every user's shift under virtual time."""
    users = topology.users if users is None else int(users)
    ramp = topology.ramp_s if ramp_s is None else float(ramp_s)
    wall_start = time.monotonic()
    if world is None:
        world = boot_world(topology)
    base = seed_base(world)
    cohorts = seed_cohorts(world, users, base["moh_session"])
    scripts = [build_script(world, cohort) for cohort in cohorts]

    rng = random.Random(topology.seed * 1_000_003 + users)
    model = TimingModel(topology, rng)
    gateway = NodeQueue("gateway", topology.gateway_workers)
    backend = NodeQueue("backend", topology.backend_workers)

    samples: list[RequestSample] = []
    errors: list[dict] = []
    position = [0] * users
    start_at = world.clock.now()

    heap: list[tuple[float, int, str, int, float]] = []
    tick = 0
    for u in range(users):
        offset = ramp * u / users if users else 0.0
        heapq.heappush(heap, (start_at + offset, tick, "send", u, 0.0))
        tick += 1

    while heap:
        at, _, kind, user, send_t = heapq.heappop(heap)
        world.clock.set(max(world.clock.now(), at))
        step = scripts[user][position[user]]
        if kind == "send":
            arrival = at + model.edge_delay()
            _, node_done = gateway.admit(arrival, model.service_time("gateway", step.action))
            if step.backend:
                _, node_done = backend.admit(node_done, model.service_time("backend", step.action))
            complete = node_done + model.edge_delay()
            heapq.heappush(heap, (complete, tick, "complete", user, at))
            tick += 1
            continue

        ok, code = True, ""
        try:
            step.run()
        except StepFailure as failure:
            ok, code = False, failure.code
        except Exception as exc:
            ok, code = False, f"script-error:{type(exc).__name__}"
        samples.append(
            RequestSample(
                user=user,
                role=step.role,
                action=step.action,
                send_t=send_t,
                complete_t=at,
                ok=ok,
                error=code,
            )
        )
        if not ok:
            errors.append({"user": user, "action": step.action, "error": code})
        if progress is not None:
            progress(len(samples))
        position[user] += 1
        if position[user] < len(scripts[user]):
            heapq.heappush(heap, (at + model.think_delay(), tick, "send", user, 0.0))
            tick += 1

    expected: dict[str, list[dict]] = {}
    for cohort in cohorts:
        expected.update(scenario.expected_writes(cohort))
    report = build_report(samples, bucket_count=topology.report_buckets)
    return RunResult(
        topology=topology,
        users=users,
        samples=samples,
        report=report,
        cohorts=cohorts,
        expected=expected,
        world=world,
        wall_s=time.monotonic() - wall_start,
        errors=errors,
    )


def verify_effects(world: World, cohorts: list[Cohort], expected: dict[str, list[dict]]) -> VerifyReport:
    """Read every scripted write back through patient credentials.

    Checks three things per patient: the medical section holds exactly
    the expected entries in order, every stored entry recomputes to the
    digest its audit line recorded, and no expected write is missing an
    audit line.
    """
    problems: list[str] = []
    patients = 0
    entries_checked = 0

    appended: dict[str, dict] = {}
    for event in world.cloud.audit.events():
        if event.action == APPEND and "entry_id" in event.detail:
            appended[event.detail["entry_id"]] = {
                "digest": event.detail.get("digest"),
                "target": event.target,
            }

    for cohort in cohorts:
        for patient in cohort.patients:
            pid = patient["patient_id"]
            patients += 1
            want = expected.get(pid, [])
            try:
                login = scenario._call(
                    world,
                    "login",
                    actor_id=pid,
                    password=scenario.PATIENT_PASSWORD,
                    context={"address": patient["home_address"]},
                )
                session = login["session"]
                sections = scenario._call(world, "dashboard", session=session)["section_ids"]
                view = scenario._call(
                    world, "read_section", session=session, virtual_id=sections["medical"]
                )
                scenario._call(world, "logout", session=session)
            except StepFailure as failure:
                problems.append(f"{pid}: readback failed ({failure.code})")
                continue
            got = view.get("entries", [])
            if len(got) != len(want):
                problems.append(f"{pid}: expected {len(want)} entries, found {len(got)}")
            for idx, (entry, spec_row) in enumerate(zip(got, want), start=1):
                entries_checked += 1
                marker = (entry.get("body") or {}).get("marker")
                if (
                    entry.get("entry_kind") != spec_row["entry_kind"]
                    or entry.get("author") != spec_row["author"]
                    or marker != spec_row["marker"]
                ):
                    problems.append(f"{pid}: entry {idx} does not match the script ledger")
                audit_row = appended.get(entry.get("entry_id"))
                if audit_row is None:
                    problems.append(f"{pid}: entry {idx} has no audit line")
                    continue
                if audit_row["target"] != sections["medical"]:
                    problems.append(f"{pid}: entry {idx} audited against the wrong section")
                recomputed = entry_digest({k: v for k, v in entry.items() if k != "seq"})
                if recomputed != audit_row["digest"]:
                    problems.append(f"{pid}: entry {idx} digest does not match its audit line")

    return VerifyReport(
        ok=not problems,
        patients_checked=patients,
        entries_checked=entries_checked,
        problems=problems,
    )


def sweep(topology: Topology, user_counts=(10, 50, 100), progress=None) -> SweepResult:
    """Run the same scenario against fresh fleets at increasing load."""
    points = []
    for count in user_counts:
        result = run_scenario(topology, users=count, progress=progress)
        verify = verify_effects(result.world, result.cohorts, result.expected)
        curve = result.warmup()
        points.append(
            {
                "users": count,
                "requests": len(result.samples),
                "avg_ms": result.report.overall.avg_ms,
                "p95_ms": result.report.overall.p95_ms,
                "throughput_rps": result.report.throughput_rps,
                "errors": result.error_count,
                "verified": verify.ok,
                "warmup": curve,
                "buckets": result.report.buckets,
            }
        )
    return SweepResult(points=points)
