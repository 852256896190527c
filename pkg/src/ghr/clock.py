"""Injectable time sources.

All expiry logic (sessions, one-time tokens, envelope freshness) and all
latency measurement in the load harness read time through a ``Clock`` so
tests and simulations can drive time explicitly.
"""
from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float:
        """Seconds since the epoch (or since boot for a manual clock)."""
        ...


class SystemClock:
    """Wall clock, used when the fabric runs for real."""

    def now(self) -> float:
        return time.time()


class ManualClock:
    """A clock that only moves when told to."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("clock cannot run backwards")
        self._now += seconds
        return self._now

    def set(self, timestamp: float) -> None:
        if timestamp < self._now:
            raise ValueError("clock cannot run backwards")
        self._now = float(timestamp)
