"""Canonical binary encoding primitives.

Everything that gets hashed or signed goes through this codec: fixed-width
big-endian integers, u32 length-prefixed byte strings, and a one-byte
presence flag for optionals. Field order is fixed per structure (see
docs/wire-format.md); there is exactly one valid encoding for any value.
"""

from __future__ import annotations

import struct

# Upper bound for any single length-prefixed field. Protects decoders from
# absurd allocations when reading corrupted frames.
MAX_FIELD_LEN = 16 * 1024 * 1024


class WireError(ValueError):
    """Raised when bytes cannot be decoded under the canonical format."""


class Writer:
    __slots__ = ("_parts",)

    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, value: int) -> None:
        if not 0 <= value <= 0xFF:
            raise WireError(f"u8 out of range: {value}")
        self._parts.append(value.to_bytes(1, "big"))

    def u32(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFF:
            raise WireError(f"u32 out of range: {value}")
        self._parts.append(value.to_bytes(4, "big"))

    def u64(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
            raise WireError(f"u64 out of range: {value}")
        self._parts.append(value.to_bytes(8, "big"))

    def raw(self, data: bytes) -> None:
        """Fixed-width bytes, no length prefix."""
        self._parts.append(bytes(data))

    def bytes_(self, data: bytes) -> None:
        if len(data) > MAX_FIELD_LEN:
            raise WireError("field too long")
        self.u32(len(data))
        self._parts.append(bytes(data))

    def string(self, text: str) -> None:
        self.bytes_(text.encode("utf-8"))

    def opt_string(self, text: str | None) -> None:
        if text is None:
            self.u8(0)
        else:
            self.u8(1)
            self.string(text)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    __slots__ = ("_buf", "_pos")

    def __init__(self, buf: bytes):
        self._buf = buf
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._buf):
            raise WireError("truncated input")
        chunk = self._buf[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def bytes_(self) -> bytes:
        n = self.u32()
        if n > MAX_FIELD_LEN:
            raise WireError("field length exceeds cap")
        return self._take(n)

    def string(self) -> str:
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError(f"invalid utf-8: {exc}") from exc

    def opt_string(self) -> str | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag == 1:
            return self.string()
        raise WireError(f"bad presence flag: {flag}")

    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def expect_eof(self) -> None:
        if self._pos != len(self._buf):
            raise WireError(f"{self.remaining()} trailing bytes")
