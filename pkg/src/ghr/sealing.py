"""Key derivation, authenticated sealing, and message signatures.

Thin wrappers over PBKDF2, AES-GCM and Ed25519 so the rest of the code
never touches primitive APIs directly.  A sealed blob is
``base64(nonce || ciphertext)`` of the canonical JSON payload; the
optional ``aad`` binds the blob to its storage context.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

KEY_BYTES = 32
_NONCE_BYTES = 12


class UnsealError(Exception):
    """Wrong key, wrong context, or corrupted blob."""


def new_key() -> bytes:
    return secrets.token_bytes(KEY_BYTES)


def new_salt() -> bytes:
    return secrets.token_bytes(16)


def derive_key(secret: str, salt: bytes, iterations: int) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", secret.encode("utf-8"), salt, iterations, dklen=KEY_BYTES)


def credential_hash(password: str, salt: bytes, iterations: int) -> str:
    return derive_key(password, salt, iterations).hex()


def check_credential(password: str, salt: bytes, iterations: int, expected_hex: str) -> bool:
    return hmac.compare_digest(credential_hash(password, salt, iterations), expected_hex)


def seal(key: bytes, payload: dict, *, aad: str = "") -> str:
    nonce = secrets.token_bytes(_NONCE_BYTES)
    plaintext = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ciphertext = AESGCM(key).encrypt(nonce, plaintext, aad.encode("utf-8") or None)
    return base64.b64encode(nonce + ciphertext).decode("ascii")


def unseal(key: bytes, blob: str, *, aad: str = "") -> dict:
    try:
        raw = base64.b64decode(blob.encode("ascii"), validate=True)
        nonce, ciphertext = raw[:_NONCE_BYTES], raw[_NONCE_BYTES:]
        plaintext = AESGCM(key).decrypt(nonce, ciphertext, aad.encode("utf-8") or None)
        return json.loads(plaintext.decode("utf-8"))
    except (InvalidTag, ValueError) as exc:
        raise UnsealError(str(exc)) from exc


def new_signing_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def signing_key_bytes(key: Ed25519PrivateKey) -> bytes:
    return key.private_bytes_raw()


def signing_key_from_bytes(raw: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(raw)


def public_bytes(key: Ed25519PrivateKey) -> str:
    return key.public_key().public_bytes_raw().hex()


def sign(key: Ed25519PrivateKey, data: bytes) -> str:
    return base64.b64encode(key.sign(data)).decode("ascii")


def check_signature(public_hex: str, data: bytes, signature_b64: str) -> bool:
    try:
        public = Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_hex))
        public.verify(base64.b64decode(signature_b64.encode("ascii")), data)
        return True
    except (InvalidSignature, ValueError):
        return False
