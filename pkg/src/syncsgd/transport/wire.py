"""Envelope framing.

Layout, all big-endian::

    u32 length      bytes that follow this field (13 + payload)
    u8  kind
    u32 epoch
    u32 iteration
    u16 src
    u16 dst
    ... payload
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

HEADER = struct.Struct(">IBIIHH")
HEADER_SIZE = HEADER.size  # 17
LENGTH_SIZE = 4
MAX_PAYLOAD = 0xFFFFFFFF - (HEADER_SIZE - LENGTH_SIZE)
MAX_RANK = 0xFFFF


class Kind(enum.IntEnum):
    PULL_REQ = 1
    MODEL_CHUNK = 2
    GRAD_PUSH = 3
    RING_CHUNK = 4
    BARRIER = 5
    CONTROL = 6


class FrameError(ValueError):
    pass


class ShortRead(FrameError):
    pass


@dataclass(frozen=True)
class Envelope:
    kind: Kind
    epoch: int
    iteration: int
    src: int
    dst: int
    payload: bytes = b""

    def __repr__(self):
        return (f"Envelope({self.kind.name}, e={self.epoch}, t={self.iteration}, "
                f"{self.src}->{self.dst}, {len(self.payload)}B)")


def frame(env: Envelope) -> bytes:
    if len(env.payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(env.payload)} bytes overflows the length field")
    try:
        kind = Kind(env.kind)
    except ValueError:
        raise FrameError(f"unknown kind {env.kind!r}") from None
    header = HEADER.pack(HEADER_SIZE - LENGTH_SIZE + len(env.payload), kind,
                         env.epoch, env.iteration, env.src, env.dst)
    return header + bytes(env.payload)


def frame_length(prefix: bytes) -> int:
    """Total frame size given at least its first 4 bytes."""
    if len(prefix) < LENGTH_SIZE:
        raise ShortRead("need 4 bytes for the length prefix")
    (length,) = struct.unpack_from(">I", prefix)
    if length < HEADER_SIZE - LENGTH_SIZE:
        raise FrameError(f"length field {length} shorter than the header")
    return LENGTH_SIZE + length


def unframe(buf: bytes) -> Envelope:
    """Decode exactly one frame; trailing bytes are an error."""
    if len(buf) < HEADER_SIZE:
        raise ShortRead(f"{len(buf)} bytes is shorter than the {HEADER_SIZE}-byte header")
    total = frame_length(buf)
    if len(buf) < total:
        raise ShortRead(f"frame needs {total} bytes, have {len(buf)}")
    if len(buf) > total:
        raise FrameError(f"{len(buf) - total} trailing bytes after frame")
    _, kind, epoch, iteration, src, dst = HEADER.unpack_from(buf)
    try:
        kind = Kind(kind)
    except ValueError:
        raise FrameError(f"unknown kind {kind}") from None
    return Envelope(kind, epoch, iteration, src, dst, bytes(buf[HEADER_SIZE:total]))
