"""Fleet description for load runs: one country cloud plus a traffic model."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from ..clock import Clock, ManualClock
from ..cloud import CountryCloud
from ..config import CloudConfig
from ..identity import CodeTables
from ..transport import DirectTransport

ROOT_PASSWORD = "root-ops"

# Virtual epoch for load runs; any fixed instant works, the fabric only
# needs a clock that never moves backwards.
SIM_EPOCH = 1_700_000_000.0


@dataclass
class Topology:
    """Everything a load run needs to know about the fleet under test.

    Latency figures are milliseconds.  The jitter knobs are the sigma of
    a lognormal multiplier, so 0 means fully deterministic draws.
    """

    country: str = "EG"
    seed: int = 20260823
    users: int = 100
    ramp_s: float = 20.0
    kdf_iterations: int = 16
    session_ttl_s: float = 1800.0
    otp_ttl_s: float = 900.0
    # Worker pools are sized so saturation shows up within a hundred
    # simulated users; this rig probes capacity, it does not flatter it.
    gateway_workers: int = 2
    backend_workers: int = 2
    edge_latency_ms: float = 6.0
    edge_jitter: float = 0.45
    service_scale: float = 1.0
    service_jitter: float = 0.25
    cold_start_ms: float = 60.0
    warm_requests: int = 8
    think_ms: float = 160.0
    report_buckets: int = 12

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, row: dict) -> "Topology":
        known = {field.name for field in dataclasses.fields(cls)}
        extra = sorted(set(row) - known)
        if extra:
            raise ValueError(f"unknown topology keys: {', '.join(extra)}")
        return cls(**row)

    @classmethod
    def from_file(cls, path: str) -> "Topology":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class World:
    """A booted fleet: transport, shared clock and the cloud under test."""

    topology: Topology
    transport: DirectTransport
    clock: Clock
    cloud: CountryCloud

    def call(self, message: dict) -> dict:
        return self.cloud.call(message)


def boot_world(topology: Topology, data_dir: str | None = None, clock=None) -> World:
    """Stand up the cloud described by a topology, optionally persistent."""
    transport = DirectTransport()
    clock = clock if clock is not None else ManualClock(SIM_EPOCH)
    config = CloudConfig(
        kdf_iterations=topology.kdf_iterations,
        session_ttl_s=topology.session_ttl_s,
        otp_ttl_s=topology.otp_ttl_s,
    )
    tables = CodeTables(
        provinces={
            "ALX": {"number": 2, "cities": {"MAN": 4}},
        }
    )
    cloud = CountryCloud(
        topology.country,
        transport,
        clock=clock,
        config=config,
        code_tables=tables,
        root_password=ROOT_PASSWORD,
        data_dir=data_dir,
    )
    return World(topology=topology, transport=transport, clock=clock, cloud=cloud)
