"""Timing model for simulated traffic.

All durations are virtual seconds.  Draws come from one seeded
`random.Random` owned by the run, never from the process-wide generator
and never from the entropy pool the fabric uses for keys.
"""
from __future__ import annotations

import heapq
import math
import random

from .topology import Topology

# Baseline per-request service cost in milliseconds before scaling,
# jitter and cold starts.  Crypto-heavy paths cost more than plain
# session bookkeeping.
ACTION_BASE_MS = {
    "login": 21.0,
    "logout": 3.5,
    "whoami": 3.0,
    "location_status": 3.0,
    "dashboard": 4.8,
    "notifications": 4.2,
    "search": 15.0,
    "read_section": 9.5,
    "append_entry": 13.0,
    "otp_generate": 9.0,
    "otp_redeem": 14.5,
    "list_grants": 3.6,
    "get_global_access": 2.8,
    "audit_query": 7.5,
}
DEFAULT_BASE_MS = 6.0


class NodeQueue:
    """A node with a fixed number of workers and a shared wait queue.

    Admission returns when the request would start and finish; requests
    arriving while every worker is busy wait for the earliest slot.
    """

    def __init__(self, name: str, workers: int):
        self.name = name
        self._free = [0.0] * max(1, int(workers))
        heapq.heapify(self._free)
        self.admitted = 0
        self.busy_s = 0.0

    def admit(self, arrival: float, service: float) -> tuple[float, float]:
        slot = heapq.heappop(self._free)
        start = max(arrival, slot)
        done = start + service
        heapq.heappush(self._free, done)
        self.admitted += 1
        self.busy_s += service
        return start, done


class TimingModel:
    """Draws latency, service and think times for one run."""

    def __init__(self, topology: Topology, rng: random.Random):
        self.topology = topology
        self.rng = rng
        self._warm_counts: dict[tuple[str, str], int] = {}

    def edge_delay(self) -> float:
        """One-way client-to-fleet network delay."""
        jitter = self.rng.lognormvariate(0.0, self.topology.edge_jitter)
        return (self.topology.edge_latency_ms / 1000.0) * jitter

    def think_delay(self) -> float:
        """Pause a simulated user takes between consecutive requests."""
        jitter = self.rng.lognormvariate(0.0, 0.5)
        return (self.topology.think_ms / 1000.0) * jitter

    def service_time(self, node: str, action: str) -> float:
        """In-node processing time including any remaining cold start."""
        base = ACTION_BASE_MS.get(action, DEFAULT_BASE_MS) * self.topology.service_scale
        jitter = self.rng.lognormvariate(0.0, self.topology.service_jitter)
        return (base * jitter + self._cold_penalty(node, action)) / 1000.0

    def _cold_penalty(self, node: str, action: str) -> float:
        """Extra cost while a (node, action) code path is still warming up."""
        key = (node, action)
        count = self._warm_counts.get(key, 0)
        self._warm_counts[key] = count + 1
        warm = max(1, self.topology.warm_requests)
        if count >= warm:
            return 0.0
        return self.topology.cold_start_ms * math.exp(-3.0 * count / warm)
