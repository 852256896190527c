"""Load and soak testing rig for a country cloud.

The rig drives the real gateway API with simulated clients.  Time is
virtual: a discrete-event loop advances a shared manual clock, models
network latency, per-node worker pools and cold starts, and executes
each request against the live fabric at its scheduled moment.  Timing
comes from a seeded model generator; the fabric keeps using the system
entropy pool for key material, so load numbers are reproducible while
ciphertext never is.
"""

from .model import NodeQueue, TimingModel
from .report import AggregateReport, build_report
from .runner import RunResult, SweepResult, run_scenario, sweep, verify_effects
from .scenario import Cohort, build_script, seed_base, seed_cohorts
from .topology import Topology, World, boot_world

__all__ = [
    "AggregateReport",
    "Cohort",
    "NodeQueue",
    "RunResult",
    "SweepResult",
    "TimingModel",
    "Topology",
    "World",
    "boot_world",
    "build_report",
    "build_script",
    "run_scenario",
    "seed_base",
    "seed_cohorts",
    "sweep",
    "verify_effects",
]
