"""Operations console for the record fabric.

A state directory ties the commands together: ``boot`` lays down the
fleet description and the cloud's persistent stores, ``scenario`` runs
the standard load shift against it, and ``verify``, ``audit-verify``
and ``vault-dump`` inspect what the run left on disk, each from a fresh
process.  ``serve`` exposes the booted gateway over TCP for interactive
clients.

Exit codes: 0 on success, 1 when a check fails, 2 for usage or
configuration problems.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .audit import verify_lines
from .clock import SystemClock
from .harness import (
    Topology,
    World,
    boot_world,
    run_scenario,
    seed_base,
    seed_cohorts,
    sweep,
    verify_effects,
)
from .harness.report import render_text
from .harness.scenario import Cohort, expected_writes
from .transport import FrameServer

TOPOLOGY_FILE = "topology.json"
WORLD_FILE = "world.json"
REPORT_FILE = "report.json"
CLOUD_DIR = "cloud"


def _config_error(message: str) -> "SystemExit":
    print(f"error: {message}", file=sys.stderr)
    return SystemExit(2)


def _load_topology(state: str, override: str | None = None) -> Topology:
    path = override or os.path.join(state, TOPOLOGY_FILE)
    if not os.path.exists(path):
        raise _config_error(f"no topology at {path} (run 'ghr boot' first?)")
    try:
        return Topology.from_file(path)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise _config_error(f"bad topology {path}: {exc}")


def _boot_state(state: str, clock=None) -> World:
    topology = _load_topology(state)
    cloud_dir = os.path.join(state, CLOUD_DIR)
    if not os.path.isdir(cloud_dir):
        raise _config_error(f"no cloud data under {state} (run 'ghr boot' first?)")
    return boot_world(topology, data_dir=cloud_dir, clock=clock)


def _load_world_file(state: str) -> dict:
    path = os.path.join(state, WORLD_FILE)
    if not os.path.exists(path):
        raise _config_error(f"no {WORLD_FILE} under {state} (run 'ghr seed' or 'ghr scenario' first?)")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_boot(args) -> int:
    state = args.state
    marker = os.path.join(state, TOPOLOGY_FILE)
    if os.path.exists(marker) and not args.force:
        raise _config_error(f"{state} is already booted (use --force to redo)")
    os.makedirs(os.path.join(state, CLOUD_DIR), exist_ok=True)
    if args.topology:
        topology = _load_topology(state, override=args.topology)
    else:
        topology = Topology()
    topology.write(marker)
    boot_world(topology, data_dir=os.path.join(state, CLOUD_DIR))
    print(f"booted {topology.country} cloud under {state}")
    return 0


def cmd_seed(args) -> int:
    state = args.state
    if os.path.exists(os.path.join(state, WORLD_FILE)):
        raise _config_error(f"{state} is already seeded")
    world = _boot_state(state)
    base = seed_base(world)
    cohorts = seed_cohorts(world, args.users, base["moh_session"])
    _write_json(
        os.path.join(state, WORLD_FILE),
        {
            "users": args.users,
            "ministry_id": base["ministry_id"],
            "cohorts": [c.to_dict() for c in cohorts],
        },
    )
    print(f"seeded {args.users} cohorts ({2 * args.users} patients) under {state}")
    return 0


def cmd_scenario(args) -> int:
    state = args.state
    if os.path.exists(os.path.join(state, WORLD_FILE)):
        raise _config_error(f"{state} already holds a seeded world; scenario seeds its own")
    world = _boot_state(state)
    result = run_scenario(world.topology, users=args.users, ramp_s=args.ramp, world=world)
    verify = verify_effects(result.world, result.cohorts, result.expected)
    _write_json(
        os.path.join(state, WORLD_FILE),
        {
            "users": result.users,
            "cohorts": [c.to_dict() for c in result.cohorts],
        },
    )
    _write_json(
        os.path.join(state, REPORT_FILE),
        {
            "users": result.users,
            "report": result.report.to_dict(),
            "warmup": result.warmup(),
            "errors": result.errors,
            "verified": verify.ok,
            "wall_s": round(result.wall_s, 3),
        },
    )
    print(render_text(result.report))
    print()
    print(f"errors {result.error_count}  readback {'ok' if verify.ok else 'FAILED'}  wall {result.wall_s:.1f}s")
    for problem in verify.problems[:10]:
        print(f"  {problem}")
    return 0 if result.error_count == 0 and verify.ok else 1


def cmd_sweep(args) -> int:
    if args.topology:
        topology = _load_topology("", override=args.topology)
    else:
        topology = Topology()
    try:
        counts = [int(part) for part in args.counts.split(",") if part.strip()]
    except ValueError:
        raise _config_error(f"bad --counts {args.counts!r}; want e.g. 10,50,100")
    if not counts:
        raise _config_error("--counts is empty")
    result = sweep(topology, user_counts=counts)
    print(f"{'users':>7}{'requests':>10}{'avg':>10}{'p95':>10}{'thr/s':>9}{'errors':>8}{'settled':>9}")
    for point in result.points:
        print(
            f"{point['users']:>7}{point['requests']:>10}{point['avg_ms']:>10.2f}"
            f"{point['p95_ms']:>10.2f}{point['throughput_rps']:>9.1f}{point['errors']:>8}"
            f"{str(point['warmup']['settled']):>9}"
        )
    monotone = result.averages_non_decreasing()
    clean = all(p["errors"] == 0 and p["verified"] for p in result.points)
    settled = all(p["warmup"]["settled"] for p in result.points)
    print(f"latency monotone under load: {monotone}; all runs clean: {clean}; warm-up settled: {settled}")
    if args.out:
        _write_json(args.out, result.to_dict())
    return 0 if monotone and clean and settled else 1


def cmd_verify(args) -> int:
    state = args.state
    manifest = _load_world_file(state)
    cohorts = [Cohort.from_dict(row) for row in manifest["cohorts"]]
    expected: dict = {}
    for cohort in cohorts:
        expected.update(expected_writes(cohort))
    world = _boot_state(state)
    report = verify_effects(world, cohorts, expected)
    print(
        f"patients {report.patients_checked}  entries {report.entries_checked}  "
        f"{'ok' if report.ok else 'FAILED'}"
    )
    for problem in report.problems[:20]:
        print(f"  {problem}")
    return 0 if report.ok else 1


def cmd_report(args) -> int:
    if not os.path.exists(args.file):
        raise _config_error(f"no report at {args.file}")
    with open(args.file, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    body = payload.get("report", payload)
    overall = body.get("overall", {})
    print(
        f"requests {overall.get('count', 0)}  errors {body.get('errors', 0)}  "
        f"duration {body.get('duration_s', 0)}s  throughput {body.get('throughput_rps', 0)}/s"
    )
    print(f"{'action':<18}{'count':>7}{'avg':>9}{'median':>9}{'p95':>9}{'max':>9}")
    for name, stats in sorted(body.get("per_action", {}).items()):
        print(
            f"{name:<18}{stats['count']:>7}{stats['avg_ms']:>9.2f}{stats['median_ms']:>9.2f}"
            f"{stats['p95_ms']:>9.2f}{stats['max_ms']:>9.2f}"
        )
    if "warmup" in payload:
        warm = payload["warmup"]
        print(
            f"warm-up variance {warm['first_quartile_var']:.1f} -> {warm['final_quartile_var']:.1f} "
            f"({'settled' if warm['settled'] else 'NOT settled'})"
        )
    return 0


def cmd_audit_verify(args) -> int:
    if args.file:
        path = args.file
    else:
        if not args.state:
            raise _config_error("give --state or --file")
        path = os.path.join(args.state, CLOUD_DIR, "audit.ndjson")
    if not os.path.exists(path):
        raise _config_error(f"no audit log at {path}")
    with open(path, "r", encoding="ascii") as fh:
        report = verify_lines(fh)
    if report.ok:
        print(f"chain ok ({report.events} events)")
        return 0
    print(f"chain BROKEN at seq {report.first_bad_seq} ({report.events} events)")
    return 1


def cmd_vault_dump(args) -> int:
    world = _boot_state(args.state)
    dump = world.cloud.vault.dump()
    if args.table:
        if args.table not in dump:
            raise _config_error(f"no table {args.table!r}; have {', '.join(sorted(dump))}")
        dump = {args.table: dump[args.table]}
    json.dump(dump, sys.stdout, indent=2, sort_keys=True, default=str)
    print()
    return 0


def cmd_serve(args) -> int:
    world = _boot_state(args.state, clock=SystemClock())
    server = FrameServer(args.host, args.port, world.call)
    print(f"serving {world.topology.country} gateway on {args.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghr", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    boot = sub.add_parser("boot", help="initialize a state directory and its cloud stores")
    boot.add_argument("--state", required=True, help="state directory to create")
    boot.add_argument("--topology", help="topology JSON to copy in (defaults are used otherwise)")
    boot.add_argument("--force", action="store_true", help="re-initialize an existing state")
    boot.set_defaults(func=cmd_boot)

    seed = sub.add_parser("seed", help="register cohorts for interactive use")
    seed.add_argument("--state", required=True)
    seed.add_argument("--users", type=int, default=1, help="number of cohorts to register")
    seed.set_defaults(func=cmd_seed)

    scenario = sub.add_parser("scenario", help="run the standard load shift against a booted state")
    scenario.add_argument("--state", required=True)
    scenario.add_argument("--users", type=int, default=None, help="override the topology's user count")
    scenario.add_argument("--ramp", type=float, default=None, help="override the ramp-up window (seconds)")
    scenario.set_defaults(func=cmd_scenario)

    sweep_cmd = sub.add_parser("sweep", help="run the shift at several user counts on fresh fleets")
    sweep_cmd.add_argument("--topology", help="topology JSON (defaults are used otherwise)")
    sweep_cmd.add_argument("--counts", default="10,50,100", help="comma-separated user counts")
    sweep_cmd.add_argument("--out", help="write the sweep result JSON here")
    sweep_cmd.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify", help="read a finished run back through patient credentials")
    verify.add_argument("--state", required=True)
    verify.set_defaults(func=cmd_verify)

    report = sub.add_parser("report", help="pretty-print a stored report.json")
    report.add_argument("--file", required=True)
    report.set_defaults(func=cmd_report)

    audit = sub.add_parser("audit-verify", help="check an audit chain export end to end")
    audit.add_argument("--state", help="state directory holding cloud/audit.ndjson")
    audit.add_argument("--file", help="explicit audit NDJSON path")
    audit.set_defaults(func=cmd_audit_verify)

    dump = sub.add_parser("vault-dump", help="print the record store's at-rest view")
    dump.add_argument("--state", required=True)
    dump.add_argument("--table", help="limit output to one table")
    dump.set_defaults(func=cmd_vault_dump)

    serve = sub.add_parser("serve", help="expose the gateway over TCP frames")
    serve.add_argument("--state", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=7860)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
