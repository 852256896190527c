"""Tunable constants for a country cloud.

The defaults mirror the intended deployment behaviour: login sessions
live 30 minutes and slide on use, one-time tokens live 15 minutes and do
not slide.  The key-derivation iteration count is deliberately modest so
simulated populations stay cheap to build; a real deployment would raise
it by a few orders of magnitude.
"""
from __future__ import annotations

from dataclasses import dataclass

SESSION_TTL_S = 30 * 60
OTP_TTL_S = 15 * 60

# 32-symbol alphabet (no I, L, O, U) used for one-time token values.
OTP_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
OTP_LENGTH = 8

MAX_CHALLENGE_ATTEMPTS = 3

KDF_ITERATIONS = 1_000


@dataclass
class CloudConfig:
    """Per-cloud knobs; the topology file may override any of them."""

    session_ttl_s: float = SESSION_TTL_S
    otp_ttl_s: float = OTP_TTL_S
    otp_alphabet: str = OTP_ALPHABET
    otp_length: int = OTP_LENGTH
    kdf_iterations: int = KDF_ITERATIONS
    max_challenge_attempts: int = MAX_CHALLENGE_ATTEMPTS
    # Accept the first location an actor is ever seen from without a
    # confirmation round-trip; later locations still need confirmation.
    trust_first_location: bool = True
    # Maximum age of a gateway->backend envelope, seconds.  None disables
    # the freshness check (manual-clock tests drive time themselves).
    envelope_max_age_s: float | None = None
