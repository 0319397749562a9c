"""Node runtime assembly and the `pl-node` entry point."""

from __future__ import annotations

import logging
import socket
import sys

import click
import uvicorn

from .. import crypto
from ..errors import BindFailure, CorruptStore, LedgerError
from ..ledger import ChainStore
from ..incentives import DEFAULT_REASON_CODES
from ..service import HealthLedgerService
from .api import create_app
from .config import ENV_MAP, NodeConfig, load_config
from .sync import SyncLoop

log = logging.getLogger(__name__)


class NodeRuntime:
    """A configured node: store, service, HTTP app, and (replica) sync loop."""

    def __init__(self, config: NodeConfig):
        self.config = config
        self.store = ChainStore(
            data_dir=config.data_dir,
            authority_public_key=config.public_key_bytes(),
            private_key=config.private_key_bytes() if config.is_authority else None,
            authority_id=config.authority_id,
        )
        reason_codes = list(DEFAULT_REASON_CODES) + list(config.extra_reason_codes)
        try:
            self._startup_checks()
            self.service = HealthLedgerService(
                self.store, uid_prefix=config.uid_prefix, reason_codes=reason_codes
            )
            if config.is_authority:
                self.service.initialize_genesis(
                    {
                        "authority_id": config.authority_id,
                        "authority_public_key": config.authority_public_key,
                        "uid_prefix": config.uid_prefix,
                    }
                )
                if config.policy_path:
                    with open(config.policy_path, "rb") as fh:
                        self.service.activate_policy(fh.read())
            elif config.policy_path:
                # replicas load the policy read-only, for display purposes
                with open(config.policy_path, "rb") as fh:
                    self.service.activate_policy(fh.read(), record_on_chain=False)
        except Exception:
            self.store.close()
            raise
        self.app = create_app(self)
        self.sync_loop: SyncLoop | None = None
        if not config.is_authority:
            self.sync_loop = SyncLoop(self.service, config.peers, config.sync_interval)

    def _startup_checks(self) -> None:
        if self.store.head_height >= 0:
            report = self.store.verify_chain()
            if not report.ok:
                raise CorruptStore(
                    f"chain verification failed at height {report.failure_height}: "
                    f"{report.failure} ({report.detail}); refusing to start"
                )

    def start_background(self) -> None:
        if self.sync_loop is not None:
            self.sync_loop.start()

    def shutdown(self) -> None:
        if self.sync_loop is not None:
            self.sync_loop.stop()
            if self.sync_loop.is_alive():
                self.sync_loop.join(timeout=5)
        self.store.close()


def serve(config: NodeConfig) -> None:
    """Run a node until interrupted. Raises BindFailure/CorruptStore early."""
    runtime = NodeRuntime(config)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        runtime.shutdown()
        raise BindFailure(f"cannot bind {config.listen_address}: {exc}") from exc
    finally:
        probe.close()
    runtime.start_background()
    try:
        uvicorn.run(runtime.app, host=config.host, port=config.port, log_level="info")
    finally:
        runtime.shutdown()


@click.group()
def main() -> None:
    """Run and administer a pandemic-ledger node."""


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file; PL_* environment variables override its keys.")
def serve_cmd(config_path: str | None) -> None:
    """Start the node (authority or replica, per config)."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        config = load_config(config_path)
        serve(config)
    except LedgerError as exc:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        sys.exit(1)


@main.command("keygen")
def keygen_cmd() -> None:
    """Generate an authority keypair (hex)."""
    private, public = crypto.generate_keypair()
    click.echo(f"authority_private_key: {private.hex()}")
    click.echo(f"authority_public_key: {public.hex()}")


@main.command("env-help")
def env_help_cmd() -> None:
    """List the PL_* environment variables that override config keys."""
    for key, env_name in ENV_MAP.items():
        click.echo(f"{env_name}  ->  {key}")


if __name__ == "__main__":
    main()
