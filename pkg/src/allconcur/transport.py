"""Bit-exact wire format for the broadcast protocol over byte streams.

Frame layout, all integers little-endian:

    length   u32   number of bytes after this field
    type     u8    1=Bcast 2=Fail 3=Fwd 4=Bwd 5=Heartbeat 6=Join
    round    u32
    a        u32   origin / failed / sender / joiner
    b        u32   detector; 0xFFFFFFFF when the type has no second id
    payload  varint length + bytes, Bcast frames only

The payload length is a LEB128 varint, so an empty broadcast costs one
byte of framing and the fixed-field body stays 13 bytes for every
other type.  Oversized payloads, unknown type tags and trailing bytes
are decode errors: a peer speaking garbage gets its connection reset
rather than a best-effort parse.
"""

from __future__ import annotations

import struct

from allconcur.protocol import Bcast, Bwd, Fail, Fwd, Heartbeat

UNUSED = 0xFFFFFFFF
MAX_PAYLOAD = 1 << 20

_HEAD = struct.Struct("<BIII")

TYPE_BCAST = 1
TYPE_FAIL = 2
TYPE_FWD = 3
TYPE_BWD = 4
TYPE_HEARTBEAT = 5
TYPE_JOIN = 6


class Join:
    """Membership request carried on the wire; round marks the epoch."""

    __slots__ = ("round", "joiner")

    def __init__(self, round: int, joiner: int):
        self.round = round
        self.joiner = joiner

    def __eq__(self, other):
        return (
            isinstance(other, Join)
            and (self.round, self.joiner) == (other.round, other.joiner)
        )

    def __repr__(self):
        return f"Join(round={self.round}, joiner={self.joiner})"


class FrameError(ValueError):
    """Malformed frame; the connection carrying it must be reset."""


def _write_varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(buf):
            raise FrameError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 35:
            raise FrameError("varint too long")


def encode(msg, max_payload: int = MAX_PAYLOAD) -> bytes:
    """Serialise a message to one length-prefixed frame."""
    if isinstance(msg, Bcast):
        if len(msg.payload) > max_payload:
            raise FrameError(f"payload of {len(msg.payload)} bytes exceeds limit")
        body = (
            _HEAD.pack(TYPE_BCAST, msg.round, msg.origin, UNUSED)
            + _write_varint(len(msg.payload))
            + msg.payload
        )
    elif isinstance(msg, Fail):
        body = _HEAD.pack(TYPE_FAIL, msg.round, msg.failed, msg.detector)
    elif isinstance(msg, Fwd):
        body = _HEAD.pack(TYPE_FWD, msg.round, msg.origin, UNUSED)
    elif isinstance(msg, Bwd):
        body = _HEAD.pack(TYPE_BWD, msg.round, msg.origin, UNUSED)
    elif isinstance(msg, Heartbeat):
        body = _HEAD.pack(TYPE_HEARTBEAT, 0, msg.sender, UNUSED)
    elif isinstance(msg, Join):
        body = _HEAD.pack(TYPE_JOIN, msg.round, msg.joiner, UNUSED)
    else:
        raise FrameError(f"cannot encode {msg!r}")
    return struct.pack("<I", len(body)) + body


def decode_body(body: bytes, max_payload: int = MAX_PAYLOAD):
    """Decode the bytes after the length field into a message."""
    if len(body) < _HEAD.size:
        raise FrameError(f"frame body of {len(body)} bytes is too short")
    type_, round_, a, b = _HEAD.unpack_from(body)
    pos = _HEAD.size
    if type_ == TYPE_BCAST:
        plen, pos = _read_varint(body, pos)
        if plen > max_payload:
            raise FrameError(f"payload of {plen} bytes exceeds limit")
        if len(body) - pos != plen:
            raise FrameError("payload length mismatch")
        return Bcast(round_, a, body[pos:])
    if len(body) != _HEAD.size:
        raise FrameError(f"trailing bytes in type-{type_} frame")
    if type_ == TYPE_FAIL:
        return Fail(round_, a, b)
    if type_ == TYPE_FWD:
        return Fwd(round_, a)
    if type_ == TYPE_BWD:
        return Bwd(round_, a)
    if type_ == TYPE_HEARTBEAT:
        return Heartbeat(a)
    if type_ == TYPE_JOIN:
        return Join(round_, a)
    raise FrameError(f"unknown frame type {type_}")


def decode(frame: bytes, max_payload: int = MAX_PAYLOAD):
    """Decode one complete frame (length prefix included)."""
    if len(frame) < 4:
        raise FrameError("truncated length prefix")
    (length,) = struct.unpack_from("<I", frame)
    if len(frame) - 4 != length:
        raise FrameError(f"frame claims {length} bytes, has {len(frame) - 4}")
    return decode_body(frame[4:], max_payload)


class FrameSplitter:
    """Incremental splitter for a byte stream of frames."""

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self._buf = bytearray()
        self._max = max_payload

    def feed(self, data: bytes):
        """Yield messages completed by ``data``."""
        self._buf += data
        while True:
            if len(self._buf) < 4:
                return
            (length,) = struct.unpack_from("<I", self._buf)
            if length > self._max + 64:
                raise FrameError(f"frame of {length} bytes exceeds limit")
            if len(self._buf) - 4 < length:
                return
            body = bytes(self._buf[4 : 4 + length])
            del self._buf[: 4 + length]
            yield decode_body(body, self._max)


def parse_members(text: str) -> dict[int, tuple[str, int]]:
    """Parse membership lines "<id> <host> <port>"."""
    members = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        sid, host, port = ln.split()
        sid = int(sid)
        if sid in members:
            raise ValueError(f"duplicate server id {sid} in membership")
        members[sid] = (host, int(port))
    if sorted(members) != list(range(len(members))):
        raise ValueError("server ids must be dense 0..n-1")
    return members
