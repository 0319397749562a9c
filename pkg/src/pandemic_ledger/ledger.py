"""Append-only, hash-chained, authority-signed block store.

On disk: ``chain.log`` holds canonical block frames, each prefixed by a
4-byte big-endian length; ``chain.idx`` holds fixed 16-byte records
(height, file offset) and is rebuilt from the log whenever the two
disagree. The log is the source of truth; recovery truncates a torn tail
frame left by a crash mid-append.

Writes are serialized through one lock (single-writer model); reads use
pread and never observe a torn block.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Sequence

from .blocks import MAX_BATCH, ZERO_HASH, Block, build_block, decode_block, verify_frame
from .crypto import HASH_LEN
from .errors import (
    BatchTooLarge,
    CorruptStore,
    EmptyBatch,
    InvalidBlock,
    InvalidEvent,
    NotAuthority,
    NotFound,
    RangeOutOfBounds,
    StorageFailure,
)
from .events import Event, EventKind, validate_event
from .wire import WireError

LOG_NAME = "chain.log"
IDX_NAME = "chain.idx"
IDX_RECORD = struct.Struct(">QQ")
MAX_FRAME = 32 * 1024 * 1024


@dataclass(frozen=True)
class ChainHead:
    height: int
    block_hash: bytes

    def to_dict(self) -> dict[str, Any]:
        return {"height": self.height, "block_hash": self.block_hash.hex()}


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    from_height: int
    to_height: int
    checked: int
    failure_height: int | None = None
    failure: str | None = None
    detail: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "from_height": self.from_height,
            "to_height": self.to_height,
            "checked": self.checked,
            "failure_height": self.failure_height,
            "failure": self.failure,
            "detail": self.detail,
        }


class ChainStore:
    """Block store bound to one authority key.

    A store holding the authority's private key may append new event
    batches; a verify-only store (replica) may only append frames that
    already carry a valid authority signature.
    """

    def __init__(
        self,
        data_dir: str | Path,
        authority_public_key: bytes,
        private_key: bytes | None = None,
        authority_id: str = "authority",
        fsync: bool = True,
    ):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._public_key = authority_public_key
        self._private_key = private_key
        self._authority_id = authority_id
        self._fsync = fsync
        self._lock = threading.RLock()
        self._offsets: list[tuple[int, int]] = []  # height -> (offset, frame_len)
        self._head_hash = ZERO_HASH
        self._event_ids: set[bytes] = set()
        self._undecodable: int | None = None  # first height that failed to decode
        self._broken = False  # set after a failed write; appends refused
        self._end = 0
        self._log_fd = os.open(self._dir / LOG_NAME, os.O_RDWR | os.O_CREAT | os.O_APPEND, 0o644)
        self._idx_fd = os.open(self._dir / IDX_NAME, os.O_RDWR | os.O_CREAT | os.O_APPEND, 0o644)
        try:
            self._recover()
        except Exception:
            self.close()
            raise

    # --- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        for fd_name in ("_log_fd", "_idx_fd"):
            fd = getattr(self, fd_name, -1)
            if fd >= 0:
                try:
                    os.close(fd)
                except OSError:
                    pass
                setattr(self, fd_name, -1)

    def _recover(self) -> None:
        size = os.fstat(self._log_fd).st_size
        pos = 0
        offsets: list[tuple[int, int]] = []
        truncate_at: int | None = None
        while pos < size:
            header = os.pread(self._log_fd, 4, pos)
            if len(header) < 4:
                truncate_at = pos  # torn write of the length prefix
                break
            frame_len = int.from_bytes(header, "big")
            if frame_len == 0 or frame_len > MAX_FRAME:
                raise CorruptStore(f"unreadable frame length at offset {pos}")
            if pos + 4 + frame_len > size:
                truncate_at = pos  # torn write of the frame body
                break
            offsets.append((pos, frame_len))
            pos += 4 + frame_len
        if truncate_at is not None:
            os.ftruncate(self._log_fd, truncate_at)
            pos = truncate_at
        self._offsets = offsets
        self._end = pos
        for height, (offset, frame_len) in enumerate(offsets):
            frame = os.pread(self._log_fd, frame_len, offset + 4)
            if height == len(offsets) - 1:
                self._head_hash = frame[-HASH_LEN:]
            try:
                block = decode_block(frame)
            except WireError:
                if self._undecodable is None:
                    self._undecodable = height
                continue
            for event in block.events:
                self._event_ids.add(event.event_id)
        self._sync_idx_file()

    def _sync_idx_file(self) -> None:
        expected = b"".join(
            IDX_RECORD.pack(height, offset)
            for height, (offset, _) in enumerate(self._offsets)
        )
        current = os.pread(self._idx_fd, os.fstat(self._idx_fd).st_size, 0)
        if current != expected:
            os.ftruncate(self._idx_fd, 0)
            if expected:
                os.pwrite(self._idx_fd, expected, 0)

    # --- heads and reads -------------------------------------------------------

    @property
    def head(self) -> ChainHead | None:
        with self._lock:
            if not self._offsets:
                return None
            return ChainHead(height=len(self._offsets) - 1, block_hash=self._head_hash)

    @property
    def head_height(self) -> int:
        """Height of the newest block, or -1 on an empty chain."""
        with self._lock:
            return len(self._offsets) - 1

    def get_frame(self, height: int) -> bytes:
        with self._lock:
            if not 0 <= height < len(self._offsets):
                raise NotFound(f"no block at height {height}")
            offset, frame_len = self._offsets[height]
        data = os.pread(self._log_fd, frame_len, offset + 4)
        if len(data) != frame_len:
            raise StorageFailure(f"short read at height {height}")
        return data

    def get_block(self, height: int) -> Block:
        frame = self.get_frame(height)
        try:
            return decode_block(frame)
        except WireError as exc:
            raise StorageFailure(f"persisted block {height} undecodable: {exc}") from exc

    def iter_blocks(self, from_height: int = 0, to_height: int | None = None) -> Iterator[Block]:
        stop = self.head_height if to_height is None else to_height
        for height in range(from_height, stop + 1):
            yield self.get_block(height)

    def iter_events(
        self, kind: EventKind | None = None, subject_uid: str | None = None
    ) -> Iterator[Event]:
        """Events in (height, intra-block index) order; filters are exact-match ANDed."""
        for block in self.iter_blocks():
            for event in block.events:
                if kind is not None and event.kind is not kind:
                    continue
                if subject_uid is not None and event.subject_uid != subject_uid:
                    continue
                yield event

    def has_event_id(self, event_id: bytes) -> bool:
        with self._lock:
            return event_id in self._event_ids

    # --- appends -----------------------------------------------------------------

    def append_events(self, events: Sequence[Event], timestamp: int | None = None) -> Block:
        """Sign and durably persist a new block; the authority write path."""
        if self._private_key is None:
            raise NotAuthority("store holds no authority signing key")
        events = list(events)
        if not events:
            raise EmptyBatch("a block must contain at least one event")
        if len(events) > MAX_BATCH:
            raise BatchTooLarge(f"batch of {len(events)} exceeds {MAX_BATCH}")
        with self._lock:
            self._check_writable()
            batch_ids: set[bytes] = set()
            last_ts: int | None = None
            for event in events:
                validate_event(event)
                if event.event_id in self._event_ids or event.event_id in batch_ids:
                    raise InvalidEvent(event.kind.label, "duplicate event_id")
                batch_ids.add(event.event_id)
                if last_ts is not None and event.timestamp < last_ts:
                    raise InvalidEvent(event.kind.label, "timestamps not monotone in batch")
                last_ts = event.timestamp
            height = len(self._offsets)
            block, frame = build_block(
                height=height,
                prev_hash=self._head_hash,
                events=events,
                timestamp=int(time.time()) if timestamp is None else timestamp,
                authority_id=self._authority_id,
                private_key=self._private_key,
            )
            self._persist(frame, height)
            self._head_hash = block.block_hash
            self._event_ids |= batch_ids
            return block

    def append_frame(self, frame: bytes) -> Block:
        """Verify and persist a frame signed elsewhere; the replica sync path."""
        with self._lock:
            self._check_writable()
            height = len(self._offsets)
            block, failure, detail = verify_frame(frame, height, self._head_hash, self._public_key)
            if failure is not None:
                raise InvalidBlock(height, f"{failure}: {detail}")
            assert block is not None
            for event in block.events:
                if event.event_id in self._event_ids:
                    raise InvalidBlock(height, f"duplicate event_id {event.event_id.hex()}")
            self._persist(frame, height)
            self._head_hash = block.block_hash
            for event in block.events:
                self._event_ids.add(event.event_id)
            return block

    def _check_writable(self) -> None:
        if self._broken:
            raise StorageFailure("store is in a failed state; reopen to recover")
        if self._undecodable is not None:
            raise StorageFailure(
                f"store contains an undecodable block at height {self._undecodable}"
            )

    def _persist(self, frame: bytes, height: int) -> None:
        offset = self._end
        record = len(frame).to_bytes(4, "big") + frame
        try:
            written = 0
            while written < len(record):
                written += os.write(self._log_fd, record[written:])
            if self._fsync:
                os.fsync(self._log_fd)
        except OSError as exc:
            self._broken = True
            raise StorageFailure(f"failed to persist block {height}: {exc}") from exc
        try:
            os.write(self._idx_fd, IDX_RECORD.pack(height, offset))
        except OSError:
            pass  # index is a rebuildable accelerator; the log landed
        self._offsets.append((offset, len(frame)))
        self._end = offset + len(record)

    # --- verification ---------------------------------------------------------------

    def verify_chain(
        self, from_height: int = 0, to_height: int | None = None
    ) -> VerificationReport:
        """Re-verify hashes, links, roots, signatures, and event schemas.

        Stops at the first failing height. With from_height > 0 the previous
        block's stored hash is taken as the trusted link anchor.
        """
        with self._lock:
            head = len(self._offsets) - 1
        if head < 0:
            raise RangeOutOfBounds("chain is empty")
        stop = head if to_height is None else to_height
        if not 0 <= from_height <= stop <= head:
            raise RangeOutOfBounds(
                f"range [{from_height}, {stop}] outside [0, {head}]"
            )
        if from_height == 0:
            expected_prev = ZERO_HASH
        else:
            expected_prev = self.get_frame(from_height - 1)[-HASH_LEN:]
        checked = 0
        for height in range(from_height, stop + 1):
            frame = self.get_frame(height)
            block, failure, detail = verify_frame(frame, height, expected_prev, self._public_key)
            if failure is not None:
                return VerificationReport(
                    ok=False,
                    from_height=from_height,
                    to_height=stop,
                    checked=checked,
                    failure_height=height,
                    failure=failure,
                    detail=detail,
                )
            assert block is not None
            expected_prev = block.block_hash
            checked += 1
        return VerificationReport(ok=True, from_height=from_height, to_height=stop, checked=checked)
