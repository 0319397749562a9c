from __future__ import annotations

import threading
import time
import warnings

import pytest
import uvicorn

from pandemic_ledger import crypto
from pandemic_ledger.ledger import ChainStore
from pandemic_ledger.service import HealthLedgerService

warnings.filterwarnings("ignore", message="Using `httpx` with `starlette.testclient`")

POLICY_TEXT = (
    "# benefits catalogue\n"
    "tax_rebate|3|1|Reduction in annual tax\n"
    "ration_pack|1|1|Necessities package\n"
    "bill_discount|2|1|Electricity and water bill discount\n"
    "legacy_bonus|5|0|Disabled legacy benefit\n"
)


@pytest.fixture(scope="session")
def keypair():
    return crypto.generate_keypair()


@pytest.fixture
def store(tmp_path, keypair):
    private, public = keypair
    s = ChainStore(tmp_path / "chain", public, private, authority_id="gov")
    yield s
    s.close()


@pytest.fixture
def service(store):
    svc = HealthLedgerService(store)
    svc.initialize_genesis({"authority_id": "gov"})
    svc.activate_policy(POLICY_TEXT.encode("utf-8"))
    return svc


def frame_spans(log_path) -> list[tuple[int, int]]:
    """Independent scan of chain.log framing: [(frame_offset, frame_len)].

    Offsets point at the frame body (after the 4-byte length prefix). Kept
    deliberately separate from the store's own index so tests can tamper
    with persisted bytes without trusting the code under test.
    """
    spans = []
    data = log_path.read_bytes()
    pos = 0
    while pos < len(data):
        frame_len = int.from_bytes(data[pos : pos + 4], "big")
        spans.append((pos + 4, frame_len))
        pos += 4 + frame_len
    return spans


class LiveServer:
    """uvicorn in a thread on an ephemeral port."""

    def __init__(self, app):
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self.url = ""

    def start(self) -> "LiveServer":
        self._thread.start()
        deadline = time.time() + 15
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start in time")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        self.url = f"http://127.0.0.1:{port}"
        return self

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)
