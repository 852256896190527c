"""Wiring for one country's cloud: registry, vault, storage node, gateway.

A CountryCloud owns the keys that tie the pieces together and registers
both nodes on a transport. With a data directory the keys and every
durable table land on disk, so a later process can pick the cloud back
up; without one everything stays in memory.
"""
from __future__ import annotations

import json
import os
from typing import Optional

from .audit import AuditLog, NotificationStore
from .backend import BackendNode
from .clock import Clock, SystemClock
from .config import CloudConfig
from .federation import FederationClient
from .gateway import GatewayNode
from .identity import CodeTables, Registry
from .sealing import (
    new_key,
    new_signing_key,
    public_bytes,
    signing_key_bytes,
    signing_key_from_bytes,
)
from .vault import RecordVault, VaultKeys


class CountryCloud:
    def __init__(
        self,
        country: str,
        transport,
        *,
        clock: Optional[Clock] = None,
        config: Optional[CloudConfig] = None,
        code_tables: Optional[CodeTables] = None,
        root_password: Optional[str] = None,
        data_dir: Optional[str] = None,
        directory_name: Optional[str] = None,
    ):
        self.country = country.upper()
        self.clock = clock or SystemClock()
        self.config = config or CloudConfig()
        self.transport = transport
        self.gateway_name = f"{self.country.lower()}.gateway"
        self.backend_name = f"{self.country.lower()}.backend"

        audit_path = registry_path = vault_path = None
        if data_dir:
            os.makedirs(data_dir, exist_ok=True)
            audit_path = os.path.join(data_dir, "audit.ndjson")
            registry_path = os.path.join(data_dir, "registry.jsonl")
            vault_path = os.path.join(data_dir, "vault.ndjson")
        keys = self._load_or_create_keys(data_dir)
        self._signing_key = signing_key_from_bytes(bytes.fromhex(keys["signing"]))
        self._channel_key = bytes.fromhex(keys["channel"])

        self.audit = AuditLog(clock=self.clock, path=audit_path)
        self.notifications = NotificationStore(clock=self.clock)
        self.registry = Registry(
            self.country,
            clock=self.clock,
            config=self.config,
            code_tables=code_tables,
            root_password=root_password,
            path=registry_path,
        )
        self.vault = RecordVault(
            self.country,
            VaultKeys(
                storage_key=bytes.fromhex(keys["storage"]),
                escrow_key=bytes.fromhex(keys["escrow"]),
            ),
            clock=self.clock,
            audit=self.audit,
            kdf_iterations=self.config.kdf_iterations,
            path=vault_path,
        )
        self.backend = BackendNode(
            self.backend_name,
            self.vault,
            gateway_name=self.gateway_name,
            gateway_public_hex=public_bytes(self._signing_key),
            channel_key=self._channel_key,
            clock=self.clock,
            envelope_max_age_s=self.config.envelope_max_age_s,
        )
        self.gateway = GatewayNode(
            self.gateway_name,
            self.country,
            registry=self.registry,
            clock=self.clock,
            config=self.config,
            audit=self.audit,
            notifications=self.notifications,
            transport=transport,
            backend_name=self.backend_name,
            signing_key=self._signing_key,
            channel_key=self._channel_key,
        )
        transport.register(self.gateway_name, self.gateway.handle)
        transport.register(self.backend_name, self.backend.handle)
        if directory_name:
            self.join_directory(directory_name)

    def join_directory(self, directory_name: str) -> None:
        self.gateway.federation = FederationClient(
            self.country,
            self.gateway_name,
            signing_key=self._signing_key,
            transport=self.transport,
            directory_name=directory_name,
            clock=self.clock,
            audit=self.audit,
        )

    @staticmethod
    def _load_or_create_keys(data_dir: Optional[str]) -> dict:
        path = os.path.join(data_dir, "keys.json") if data_dir else None
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        keys = {
            "storage": new_key().hex(),
            "escrow": new_key().hex(),
            "channel": new_key().hex(),
            "signing": signing_key_bytes(new_signing_key()).hex(),
        }
        if path:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(keys, fh)
            os.chmod(path, 0o600)
        return keys

    def call(self, message: dict) -> dict:
        """Shortcut for tests and tools: one request against this gateway."""
        return self.transport.call(self.gateway_name, message)
