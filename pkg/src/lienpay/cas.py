"""Content-addressable block store.

Files are split into leaves of at most ``chunk_size`` bytes and linked into a
Merkle DAG with a fixed fan-out. Every node is stored under the CID of its
canonical bytes:

    Leaf   = 0x00 || payload
    Branch = 0x01 || u32be(link count) || per link: multihash(34) || u64be(subtree size)

A CID is ``base58(0x12 0x20 || sha256(node bytes))``, i.e. a CIDv0-shaped
"Qm..." string. Real IPFS wraps leaves in a protobuf envelope, so CIDs here
are not interchangeable with go-ipfs ones.
"""

import hashlib
import os
import struct
import threading
from dataclasses import dataclass
from functools import cached_property

from .errors import IntegrityViolation, NotFound, StorageFull

ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_INDEX = {c: i for i, c in enumerate(ALPHABET)}

SHA2_256 = 0x12
DIGEST_LEN = 0x20
MULTIHASH_PREFIX = bytes([SHA2_256, DIGEST_LEN])

CHUNK_SIZE = 262_144
FANOUT = 174

LEAF = 0x00
BRANCH = 0x01


def b58encode(raw: bytes) -> str:
    n = int.from_bytes(raw, "big")
    out = []
    while n:
        n, r = divmod(n, 58)
        out.append(ALPHABET[r])
    zeros = len(raw) - len(raw.lstrip(b"\x00"))
    return "1" * zeros + "".join(reversed(out))


def b58decode(text: str) -> bytes:
    n = 0
    for ch in text:
        try:
            n = n * 58 + _INDEX[ch]
        except KeyError:
            raise ValueError(f"invalid base58 character {ch!r}") from None
    zeros = len(text) - len(text.lstrip("1"))
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    return b"\x00" * zeros + body


@dataclass(frozen=True, order=True)
class Cid:
    """SHA-256 multihash content identifier, compared by digest."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_LEN:
            raise ValueError("digest must be 32 bytes")

    @classmethod
    def of(cls, node: bytes) -> "Cid":
        return cls(hashlib.sha256(node).digest())

    @classmethod
    def parse(cls, text: str) -> "Cid":
        if not isinstance(text, str) or len(text) != 46 or not text.startswith("Qm"):
            raise ValueError(f"not a CIDv0 string: {text!r}")
        raw = b58decode(text)
        if len(raw) != 34 or raw[:2] != MULTIHASH_PREFIX:
            raise ValueError(f"not a sha2-256 multihash: {text!r}")
        return cls(raw[2:])

    @property
    def multihash(self) -> bytes:
        return MULTIHASH_PREFIX + self.digest

    @cached_property
    def text(self) -> str:
        return b58encode(self.multihash)

    def __str__(self):
        return self.text

    def __repr__(self):
        return f"Cid({self.text})"


def is_cid_text(text) -> bool:
    try:
        Cid.parse(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class DagNode:
    kind: int
    payload: bytes = b""
    links: tuple = ()  # ((Cid, subtree_size), ...)

    @property
    def size(self) -> int:
        if self.kind == LEAF:
            return len(self.payload)
        return sum(s for _, s in self.links)

    def encode(self) -> bytes:
        if self.kind == LEAF:
            return bytes([LEAF]) + self.payload
        parts = [bytes([BRANCH]), struct.pack(">I", len(self.links))]
        for child, size in self.links:
            parts.append(child.multihash)
            parts.append(struct.pack(">Q", size))
        return b"".join(parts)

    @classmethod
    def decode(cls, raw: bytes) -> "DagNode":
        if not raw:
            raise IntegrityViolation("empty node bytes")
        if raw[0] == LEAF:
            return cls(LEAF, payload=raw[1:])
        if raw[0] != BRANCH or len(raw) < 5:
            raise IntegrityViolation("unknown node kind")
        (count,) = struct.unpack(">I", raw[1:5])
        if len(raw) != 5 + 42 * count or count < 2:
            raise IntegrityViolation("malformed branch node")
        links = []
        for i in range(count):
            off = 5 + 42 * i
            mh = raw[off:off + 34]
            if mh[:2] != MULTIHASH_PREFIX:
                raise IntegrityViolation("unsupported multihash in link")
            (size,) = struct.unpack(">Q", raw[off + 34:off + 42])
            links.append((Cid(mh[2:]), size))
        return cls(BRANCH, links=tuple(links))


def build_dag(data: bytes, chunk_size: int = CHUNK_SIZE, fanout: int = FANOUT):
    """Return ``(root_cid, [(cid, node_bytes), ...])`` without touching a store."""
    if chunk_size <= 0 or fanout < 2:
        raise ValueError("chunk_size must be positive and fanout >= 2")
    nodes = []
    level = []
    for off in range(0, max(len(data), 1), chunk_size):
        node = DagNode(LEAF, payload=bytes(data[off:off + chunk_size]))
        raw = node.encode()
        cid = Cid.of(raw)
        nodes.append((cid, raw))
        level.append((cid, node.size))
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), fanout):
            group = level[i:i + fanout]
            if len(group) == 1:
                # a lone trailing child is promoted rather than wrapped
                nxt.append(group[0])
                continue
            node = DagNode(BRANCH, links=tuple(group))
            raw = node.encode()
            cid = Cid.of(raw)
            nodes.append((cid, raw))
            nxt.append((cid, node.size))
        level = nxt
    return level[0][0], nodes


class BlockStore:
    """In-memory block store; subclass and override the three ``_raw`` hooks
    for other backends.

    ``max_blocks`` bounds the store to simulate a full disk.
    """

    def __init__(self, chunk_size: int = CHUNK_SIZE, fanout: int = FANOUT, max_blocks=None):
        self.chunk_size = chunk_size
        self.fanout = fanout
        self.max_blocks = max_blocks
        self._blocks = {}
        self._pins = set()
        self._lock = threading.Lock()

    # backend hooks
    def _raw_get(self, cid):
        return self._blocks.get(cid)

    def _raw_put(self, cid, raw):
        self._blocks[cid] = raw

    def _raw_keys(self):
        return list(self._blocks)

    def _save_pins(self):
        pass

    def __len__(self):
        return len(self._raw_keys())

    def __contains__(self, cid):
        return self._raw_get(cid) is not None

    @property
    def pins(self):
        return frozenset(self._pins)

    def put(self, data: bytes, pin: bool = True) -> Cid:
        root, nodes = build_dag(data, self.chunk_size, self.fanout)
        for cid, raw in nodes:
            with self._lock:
                if self._raw_get(cid) is not None:
                    continue
                if self.max_blocks is not None and len(self) >= self.max_blocks:
                    raise StorageFull(f"block limit {self.max_blocks} reached")
                try:
                    self._raw_put(cid, raw)
                except OSError as exc:
                    raise StorageFull(str(exc)) from exc
        if pin and root not in self._pins:
            with self._lock:
                self._pins.add(root)
                self._save_pins()
        return root

    def put_block(self, raw: bytes) -> Cid:
        """Store one already-encoded node (used by replication/tests)."""
        DagNode.decode(raw)
        cid = Cid.of(raw)
        with self._lock:
            if self._raw_get(cid) is None:
                self._raw_put(cid, raw)
        return cid

    def get_block(self, cid: Cid) -> bytes:
        raw = self._raw_get(cid)
        if raw is None:
            raise NotFound(f"block {cid} not in store")
        if hashlib.sha256(raw).digest() != cid.digest:
            raise IntegrityViolation(f"block {cid} does not hash to its key")
        return raw

    def get(self, root) -> bytes:
        """Reassemble the file under ``root`` (a Cid or its text form)."""
        out = bytearray()
        self._collect(Cid.parse(root) if isinstance(root, str) else root, None, out)
        return bytes(out)

    def _collect(self, cid, expected_size, out):
        node = DagNode.decode(self.get_block(cid))
        if expected_size is not None and node.size != expected_size:
            raise IntegrityViolation(f"block {cid} subtree size mismatch")
        if node.kind == LEAF:
            out += node.payload
            return
        for child, size in node.links:
            self._collect(child, size, out)

    def verify(self, cid: Cid, data: bytes) -> bool:
        root, _ = build_dag(data, self.chunk_size, self.fanout)
        return root == cid

    def pin(self, cid: Cid):
        with self._lock:
            self._pins.add(cid)
            self._save_pins()

    def unpin(self, cid: Cid):
        with self._lock:
            self._pins.discard(cid)
            self._save_pins()

    def check(self):
        """Return the CIDs whose stored bytes no longer hash to their key."""
        bad = []
        for cid in self._raw_keys():
            raw = self._raw_get(cid)
            if hashlib.sha256(raw).digest() != cid.digest:
                bad.append(cid)
        return bad


class DiskBlockStore(BlockStore):
    """One file per block under ``root``, named by CID text; pins in pins.txt."""

    def __init__(self, root, **kwargs):
        super().__init__(**kwargs)
        self.root = os.fspath(root)
        os.makedirs(self.root, exist_ok=True)
        pins_path = os.path.join(self.root, "pins.txt")
        if os.path.exists(pins_path):
            with open(pins_path) as fh:
                self._pins = {Cid.parse(line.strip()) for line in fh if line.strip()}

    def _path(self, cid):
        return os.path.join(self.root, cid.text)

    def _raw_get(self, cid):
        try:
            with open(self._path(cid), "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            return None

    def _raw_put(self, cid, raw):
        tmp = self._path(cid) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, self._path(cid))

    def _raw_keys(self):
        return [Cid.parse(n) for n in os.listdir(self.root) if n.startswith("Qm") and len(n) == 46]

    def _save_pins(self):
        with open(os.path.join(self.root, "pins.txt"), "w") as fh:
            for cid in sorted(self._pins):
                fh.write(cid.text + "\n")
