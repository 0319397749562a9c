"""Block frames: hash-linked, authority-signed batches of events.

The signature covers (height, prev_hash, events_root, timestamp,
authority_id); the block hash covers the whole frame including the
signature. events_root is a Merkle root over the canonical event bytes,
duplicating the last leaf at odd levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from . import crypto
from .events import Event, decode_event, encode_event, validate_event
from .wire import Reader, Writer, WireError

ZERO_HASH = b"\x00" * crypto.HASH_LEN
MAX_BATCH = 1000

# Failure classes reported by chain verification.
HASH_MISMATCH = "HashMismatch"
LINK_BROKEN = "LinkBroken"
BAD_SIGNATURE = "BadSignature"
MALFORMED_EVENT = "MalformedEvent"


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    events_root: bytes
    timestamp: int
    authority_id: str
    events: tuple[Event, ...]
    signature: bytes
    block_hash: bytes

    def to_dict(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "events_root": self.events_root.hex(),
            "timestamp": self.timestamp,
            "authority_id": self.authority_id,
            "events": [e.to_dict() for e in self.events],
            "signature": self.signature.hex(),
            "block_hash": self.block_hash.hex(),
        }


def merkle_root(leaves: list[bytes]) -> bytes:
    """Merkle root over SHA-256 leaf hashes; odd levels duplicate the last node."""
    if not leaves:
        raise ValueError("merkle root of zero leaves is undefined")
    level = [crypto.sha256(leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [crypto.sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def signing_preimage(
    height: int, prev_hash: bytes, events_root: bytes, timestamp: int, authority_id: str
) -> bytes:
    w = Writer()
    w.u64(height)
    w.raw(prev_hash)
    w.raw(events_root)
    w.u64(timestamp)
    w.string(authority_id)
    return w.getvalue()


def _encode_body(
    height: int,
    prev_hash: bytes,
    events_root: bytes,
    timestamp: int,
    authority_id: str,
    event_frames: list[bytes],
    signature: bytes,
) -> bytes:
    w = Writer()
    w.u64(height)
    w.raw(prev_hash)
    w.raw(events_root)
    w.u64(timestamp)
    w.string(authority_id)
    w.u32(len(event_frames))
    for frame in event_frames:
        w.bytes_(frame)
    w.raw(signature)
    return w.getvalue()


def build_block(
    height: int,
    prev_hash: bytes,
    events: list[Event],
    timestamp: int,
    authority_id: str,
    private_key: bytes,
) -> tuple[Block, bytes]:
    """Assemble, sign, and hash a block; returns (block, canonical frame)."""
    event_frames = [encode_event(e) for e in events]
    root = merkle_root(event_frames)
    preimage = signing_preimage(height, prev_hash, root, timestamp, authority_id)
    signature = crypto.sign(private_key, preimage)
    body = _encode_body(height, prev_hash, root, timestamp, authority_id, event_frames, signature)
    block_hash = crypto.sha256(body)
    block = Block(
        height=height,
        prev_hash=prev_hash,
        events_root=root,
        timestamp=timestamp,
        authority_id=authority_id,
        events=tuple(events),
        signature=signature,
        block_hash=block_hash,
    )
    return block, body + block_hash


def encode_block(block: Block) -> bytes:
    event_frames = [encode_event(e) for e in block.events]
    body = _encode_body(
        block.height,
        block.prev_hash,
        block.events_root,
        block.timestamp,
        block.authority_id,
        event_frames,
        block.signature,
    )
    return body + block.block_hash


def decode_block(frame: bytes) -> Block:
    return decode_block_with_frames(frame)[0]


def decode_block_with_frames(frame: bytes) -> tuple[Block, list[bytes]]:
    """Decode a frame, also returning the raw per-event byte slices."""
    r = Reader(frame)
    height = r.u64()
    prev_hash = r.raw(crypto.HASH_LEN)
    events_root = r.raw(crypto.HASH_LEN)
    timestamp = r.u64()
    authority_id = r.string()
    count = r.u32()
    if count == 0:
        raise WireError("block has no events")
    if count > MAX_BATCH:
        raise WireError(f"block exceeds max batch: {count}")
    event_frames = [r.bytes_() for _ in range(count)]
    events = tuple(decode_event(ef) for ef in event_frames)
    signature = r.raw(crypto.SIG_LEN)
    block_hash = r.raw(crypto.HASH_LEN)
    r.expect_eof()
    block = Block(
        height=height,
        prev_hash=prev_hash,
        events_root=events_root,
        timestamp=timestamp,
        authority_id=authority_id,
        events=events,
        signature=signature,
        block_hash=block_hash,
    )
    return block, event_frames


def verify_frame(
    frame: bytes, expected_height: int, expected_prev: bytes, authority_public_key: bytes
) -> tuple[Block | None, str | None, str | None]:
    """Full structural verification of one persisted frame.

    Returns (block, failure_class, detail); failure_class is None on success.
    Checks run cheapest-first: the stored hash must match the frame bytes
    before anything is decoded, so any byte-level tamper is caught even when
    the mutation breaks the frame's internal structure.
    """
    if len(frame) < crypto.HASH_LEN + crypto.SIG_LEN:
        return None, MALFORMED_EVENT, "frame shorter than minimum"
    body, stored_hash = frame[:-crypto.HASH_LEN], frame[-crypto.HASH_LEN:]
    if crypto.sha256(body) != stored_hash:
        return None, HASH_MISMATCH, "block_hash does not match frame bytes"
    try:
        block, event_frames = decode_block_with_frames(frame)
    except WireError as exc:
        return None, MALFORMED_EVENT, f"undecodable frame: {exc}"
    if block.height != expected_height:
        return block, LINK_BROKEN, f"height {block.height} where {expected_height} expected"
    if block.prev_hash != expected_prev:
        return block, LINK_BROKEN, "prev_hash does not match previous block"
    if merkle_root(event_frames) != block.events_root:
        return block, HASH_MISMATCH, "events_root does not match events"
    preimage = signing_preimage(
        block.height, block.prev_hash, block.events_root, block.timestamp, block.authority_id
    )
    if not crypto.verify(authority_public_key, block.signature, preimage):
        return block, BAD_SIGNATURE, "signature does not verify under the authority key"
    last_ts = None
    for event in block.events:
        try:
            validate_event(event, check_roundtrip=False)
        except Exception as exc:
            return block, MALFORMED_EVENT, str(exc)
        if last_ts is not None and event.timestamp < last_ts:
            return block, MALFORMED_EVENT, "event timestamps not monotone within block"
        last_ts = event.timestamp
    return block, None, None
