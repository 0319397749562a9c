"""Node configuration: YAML file keys overridable via PL_* environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..errors import ValidationError
from .. import crypto

ROLE_AUTHORITY = "authority"
ROLE_REPLICA = "replica"

# config key -> environment variable
ENV_MAP = {
    "role": "PL_ROLE",
    "listen_address": "PL_LISTEN_ADDRESS",
    "data_dir": "PL_DATA_DIR",
    "authority_public_key": "PL_AUTHORITY_PUBLIC_KEY",
    "authority_private_key": "PL_AUTHORITY_PRIVATE_KEY",
    "authority_id": "PL_AUTHORITY_ID",
    "peers": "PL_PEERS",  # comma-separated
    "sync_interval": "PL_SYNC_INTERVAL",
    "policy_path": "PL_POLICY_PATH",
    "auth_token": "PL_AUTH_TOKEN",
    "uid_prefix": "PL_UID_PREFIX",
    "extra_reason_codes": "PL_EXTRA_REASON_CODES",  # comma-separated
}

_LIST_KEYS = {"peers", "extra_reason_codes"}


@dataclass
class NodeConfig:
    role: str = ROLE_AUTHORITY
    listen_address: str = "127.0.0.1:8800"
    data_dir: str = "./pl-data"
    authority_public_key: str = ""
    authority_private_key: str | None = None
    authority_id: str = "health-authority"
    peers: list[str] = field(default_factory=list)
    sync_interval: float = 2.0
    policy_path: str | None = None
    auth_token: str | None = None
    uid_prefix: str = "IN"
    extra_reason_codes: list[str] = field(default_factory=list)

    @property
    def is_authority(self) -> bool:
        return self.role == ROLE_AUTHORITY

    @property
    def host(self) -> str:
        return self.listen_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rsplit(":", 1)[1])

    def public_key_bytes(self) -> bytes:
        return _key_bytes("authority_public_key", self.authority_public_key)

    def private_key_bytes(self) -> bytes | None:
        if not self.authority_private_key:
            return None
        return _key_bytes("authority_private_key", self.authority_private_key)

    def validate(self) -> None:
        if self.role not in (ROLE_AUTHORITY, ROLE_REPLICA):
            raise ValidationError("role", f"must be {ROLE_AUTHORITY} or {ROLE_REPLICA}")
        if ":" not in self.listen_address:
            raise ValidationError("listen_address", "expected host:port")
        try:
            self.port
        except ValueError:
            raise ValidationError("listen_address", "port is not an integer") from None
        if self.is_authority:
            private = self.private_key_bytes()
            if private is None:
                raise ValidationError("authority_private_key", "required for the authority role")
            derived = crypto.public_key_of(private)
            if not self.authority_public_key:
                self.authority_public_key = derived.hex()
            elif self.public_key_bytes() != derived:
                raise ValidationError(
                    "authority_public_key", "does not match the configured private key"
                )
        else:
            if not self.peers:
                raise ValidationError("peers", "a replica needs at least one peer URL")
            self.public_key_bytes()  # replicas must know the authority key
        if self.sync_interval < 1:
            raise ValidationError("sync_interval", "must be >= 1 second")


def _key_bytes(field_name: str, value: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise ValidationError(field_name, "must be hex") from None
    if len(raw) != crypto.KEY_LEN:
        raise ValidationError(field_name, f"must be {crypto.KEY_LEN} bytes of hex")
    return raw


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] = os.environ
) -> NodeConfig:
    """Build a config from an optional YAML file plus PL_* env overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ValidationError("config", f"{path} is not a mapping")
        unknown = set(loaded) - set(ENV_MAP)
        if unknown:
            raise ValidationError("config", f"unknown keys: {sorted(unknown)}")
        values.update(loaded)
    for key, env_name in ENV_MAP.items():
        if env_name in env:
            raw = env[env_name]
            values[key] = [p for p in raw.split(",") if p] if key in _LIST_KEYS else raw
    if "sync_interval" in values:
        try:
            values["sync_interval"] = float(values["sync_interval"])
        except (TypeError, ValueError):
            raise ValidationError("sync_interval", "must be a number") from None
    for key in _LIST_KEYS:
        if key in values and isinstance(values[key], str):
            values[key] = [p for p in values[key].split(",") if p]
    config = NodeConfig(**values)
    config.validate()
    return config
