"""Federated health-record access fabric.

A country is served by a paired front-end gateway and back-end record
vault; a root directory links countries together for cross-border
lookups.  The package also ships a deterministic in-process load harness
and a command-line entry point (``ghr``).
"""

__version__ = "0.1.0"
