"""Canonical byte encodings used for hashing and signing."""

import json
import struct


def canonical_json(value, default=None):
    """Deterministic JSON bytes: sorted keys, no whitespace, ASCII only."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True,
                      default=default).encode("ascii")


def u32(n):
    return struct.pack(">I", n)


def u64(n):
    return struct.pack(">Q", n)


def u256(n):
    if n < 0 or n >= 1 << 256:
        raise ValueError(f"value out of u256 range: {n}")
    return n.to_bytes(32, "big")


def pad32(data):
    """Length-prefix ``data`` and zero-pad it to a multiple of 32 bytes."""
    body = u32(len(data)) + data
    return body + b"\x00" * (-len(body) % 32)


def unpad32(word):
    (n,) = struct.unpack(">I", word[:4])
    return word[4:4 + n]
