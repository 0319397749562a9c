"""Pull-based block replication for read replicas.

A replica repeatedly asks a peer for blocks above its own head. Every
fetched frame is verified (link, hash, root, authority signature) before
it is persisted; the first invalid block aborts the batch, leaving the
replica at its last valid head.
"""

from __future__ import annotations

import base64
import binascii
import logging
import threading
from dataclasses import dataclass

import httpx

from ..errors import InvalidBlock, LedgerError, PeerUnreachable

log = logging.getLogger(__name__)

SYNC_PAGE = 200


@dataclass(frozen=True)
class SyncResult:
    fetched: int
    new_head: int


def sync_once(service, peer: str, client: httpx.Client | None = None) -> SyncResult:
    """Catch up with one peer; returns how many blocks landed and the new head."""
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=10.0)
    fetched = 0
    try:
        while True:
            local_head = service.store.head_height
            try:
                response = client.get(
                    f"{peer.rstrip('/')}/chain/blocks",
                    params={"from": local_head + 1, "limit": SYNC_PAGE},
                )
            except httpx.HTTPError as exc:
                raise PeerUnreachable(f"{peer}: {exc}") from exc
            if response.status_code != 200:
                raise PeerUnreachable(f"{peer}: HTTP {response.status_code}")
            payload = response.json()
            blocks = payload.get("blocks", [])
            for entry in blocks:
                try:
                    frame = base64.b64decode(entry["frame"], validate=True)
                except (KeyError, binascii.Error) as exc:
                    raise InvalidBlock(local_head + 1 + fetched, f"bad frame encoding: {exc}") from exc
                service.apply_frame(frame)  # raises InvalidBlock on any verification failure
                fetched += 1
            peer_head = payload.get("head", {}).get("height", -1)
            if not blocks or service.store.head_height >= peer_head:
                break
        return SyncResult(fetched=fetched, new_head=service.store.head_height)
    finally:
        if own_client:
            client.close()


class SyncLoop(threading.Thread):
    """Background poller: tries each peer in order until one round succeeds."""

    def __init__(self, service, peers: list[str], interval: float):
        super().__init__(name="pl-sync", daemon=True)
        self.service = service
        self.peers = peers
        self.interval = interval
        self._halt = threading.Event()
        self.last_result: SyncResult | None = None
        self.last_error: str | None = None

    def stop(self) -> None:
        self._halt.set()

    def run(self) -> None:
        client = httpx.Client(timeout=10.0)
        try:
            while not self._halt.is_set():
                for peer in self.peers:
                    try:
                        self.last_result = sync_once(self.service, peer, client)
                        self.last_error = None
                        break
                    except LedgerError as exc:
                        self.last_error = exc.message
                        log.warning("sync with %s failed: %s", peer, exc.message)
                self._halt.wait(self.interval)
        finally:
            client.close()
