"""Straight-line CID computation, kept independent of lienpay.cas.

Leaf  = 0x00 || payload
Branch = 0x01 || u32be(count) || per link: (0x12 0x20 digest) || u64be(size)
CID text = base58(0x12 0x20 sha256(node))
"""
import hashlib
import struct

ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
CHUNK = 262144
FANOUT = 174


def b58(raw):
    n = int.from_bytes(raw, "big")
    out = ""
    while n:
        n, r = divmod(n, 58)
        out = ALPHABET[r] + out
    pad = len(raw) - len(raw.lstrip(b"\x00"))
    return "1" * pad + out


def mh(node):
    return b"\x12\x20" + hashlib.sha256(node).digest()


def cid_of(data, chunk=CHUNK):
    # level entries: (multihash, size)
    level = []
    chunks = [data[i:i + chunk] for i in range(0, len(data), chunk)] or [b""]
    for c in chunks:
        level.append((mh(b"\x00" + c), len(c)))
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), FANOUT):
            group = level[i:i + FANOUT]
            if len(group) == 1:
                nxt.append(group[0])
                continue
            node = b"\x01" + struct.pack(">I", len(group))
            for m, s in group:
                node += m + struct.pack(">Q", s)
            nxt.append((mh(node), sum(s for _, s in group)))
        level = nxt
    return b58(level[0][0])


if __name__ == "__main__":
    import random
    print("empty", cid_of(b""))
    print("hello", cid_of(b"hello world"))
    print("r300k", cid_of(random.Random(300000).randbytes(300000)))
    print("pattern300k", cid_of(bytes(i % 251 for i in range(300000))))
    # 175 leaves: last group of one is promoted
    small = bytes(range(256)) * 3
    print("chunk4_768", cid_of(small, chunk=4))   # 192 leaves -> [174, 18]
    print("chunk4_697", cid_of(small[:697], chunk=4))  # 175 leaves -> [174, 1]
