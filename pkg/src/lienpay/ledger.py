"""Deterministic single-writer blockchain simulator.

Accounts are either key-controlled (EOA) or native contracts registered by
type name. External transactions queue FIFO and are applied when a block is
mined; contracts may emit value transfers during execution, which are
recorded as separate ``ContractEmitted`` transactions in the same block.

The state root is SHA-256 over a canonical sorted serialization of every
account, not a Merkle-Patricia trie.
"""

import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from typing import Optional

from .encoding import canonical_json, pad32, u32, u64, u256, unpad32
from .errors import (
    BadSignature,
    IntegrityViolation,
    InsufficientFunds,
    LienpayError,
    NonceMismatch,
    UnknownAccount,
    UnknownTransaction,
)

EOA = 0
CONTRACT = 1

EXTERNAL = 0
CONTRACT_EMITTED = 1

FINALITY_DEPTH = 12
ZERO_ADDRESS = "0x" + "00" * 20
ZERO_HASH = b"\x00" * 32
CODE_KEY = hashlib.sha256(b"__code__").digest()


def to_address(raw: bytes) -> str:
    if len(raw) != 20:
        raise ValueError("address must be 20 bytes")
    return "0x" + raw.hex()


def address_bytes(addr: str) -> bytes:
    if not is_address(addr):
        raise ValueError(f"not an address: {addr!r}")
    return bytes.fromhex(addr[2:])


def is_address(addr) -> bool:
    if not isinstance(addr, str) or len(addr) != 42 or not addr.startswith("0x"):
        return False
    try:
        bytes.fromhex(addr[2:])
    except ValueError:
        return False
    return addr == addr.lower()


def contract_address(creator: str, nonce: int) -> str:
    return to_address(hashlib.sha256(b"create" + address_bytes(creator) + u64(nonce)).digest()[-20:])


def storage_key(name: str) -> bytes:
    return hashlib.sha256(name.encode()).digest()


class DeterministicSigner:
    """Test signature scheme: sig = sha256(key || message).

    Verification recomputes the signature with the registered key, so this
    proves nothing cryptographically; it only makes replay deterministic.
    Any object with ``register``/``sign``/``verify`` can replace it.
    """

    def __init__(self):
        self._keys = {}

    @staticmethod
    def public_key(key: bytes) -> bytes:
        return hashlib.sha256(b"lienpay-pub" + key).digest()

    @classmethod
    def address_of(cls, key: bytes) -> str:
        return to_address(hashlib.sha256(cls.public_key(key)).digest()[-20:])

    def register(self, key: bytes) -> str:
        if len(key) != 32:
            raise ValueError("keys are 32 bytes")
        addr = self.address_of(key)
        self._keys[addr] = key
        return addr

    def registered_keys(self):
        return list(self._keys.values())

    def knows(self, addr) -> bool:
        return addr in self._keys

    def sign(self, key: bytes, message: bytes) -> bytes:
        return hashlib.sha256(key + message).digest()

    def verify(self, addr: str, message: bytes, signature) -> bool:
        key = self._keys.get(addr)
        if key is None or not isinstance(signature, (bytes, bytearray)):
            return False
        return hashlib.sha256(key + message).digest() == bytes(signature)


def key_from_seed(seed: str) -> bytes:
    """Deterministic 32-byte key for fixtures and scenarios."""
    return hashlib.sha256(b"lienpay-key:" + seed.encode()).digest()


@dataclass
class AccountState:
    balance: int = 0
    nonce: int = 0
    kind: int = EOA
    storage: dict = field(default_factory=dict)

    def copy(self):
        return AccountState(self.balance, self.nonce, self.kind, dict(self.storage))

    @property
    def code(self):
        raw = self.storage.get(CODE_KEY)
        return unpad32(raw).decode() if raw else None


@dataclass(frozen=True)
class AccountSummary:
    address: str
    balance: int
    nonce: int
    kind: str
    storage_slots: int
    code: Optional[str]


@dataclass(frozen=True)
class Transaction:
    sender: str
    to: str
    value: int
    payload: bytes
    nonce: int
    origin: int = EXTERNAL
    signature: bytes = b""

    def canonical(self) -> bytes:
        return (address_bytes(self.sender) + address_bytes(self.to) + u256(self.value)
                + u64(self.nonce) + bytes([self.origin]) + u32(len(self.payload)) + self.payload)

    @property
    def id(self) -> str:
        return hashlib.sha256(self.canonical()).hexdigest()

    def encode(self) -> bytes:
        return self.canonical() + self.signature

    @classmethod
    def decode(cls, raw: bytes) -> "Transaction":
        sender, to = to_address(raw[:20]), to_address(raw[20:40])
        value = int.from_bytes(raw[40:72], "big")
        (nonce,) = struct.unpack(">Q", raw[72:80])
        origin = raw[80]
        (n,) = struct.unpack(">I", raw[81:85])
        payload = raw[85:85 + n]
        return cls(sender, to, value, payload, nonce, origin, raw[85 + n:])

    def to_json(self):
        return {
            "id": self.id,
            "from": self.sender,
            "to": self.to,
            "value": self.value,
            "nonce": self.nonce,
            "origin": "External" if self.origin == EXTERNAL else "ContractEmitted",
            "payload": self.payload.decode("utf-8", "replace"),
        }


@dataclass(frozen=True)
class BlockHeader:
    number: int
    parent_hash: bytes
    tx_root: bytes
    state_root: bytes

    def encode(self) -> bytes:
        return u64(self.number) + self.parent_hash + self.tx_root + self.state_root

    @property
    def hash(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    def to_json(self):
        return {
            "number": self.number,
            "hash": self.hash.hex(),
            "parentHash": self.parent_hash.hex(),
            "txRoot": self.tx_root.hex(),
            "stateRoot": self.state_root.hex(),
        }


@dataclass
class Receipt:
    tx_id: str
    block: int
    ok: bool
    error: Optional[str] = None
    message: str = ""
    emitted: list = field(default_factory=list)
    result: object = None
    parent: Optional[str] = None

    def to_json(self):
        return {
            "txId": self.tx_id,
            "block": self.block,
            "status": "ok" if self.ok else "failed",
            "error": self.error,
            "message": self.message,
            "emitted": list(self.emitted),
            "result": self.result,
            "parent": self.parent,
        }


@dataclass
class Block:
    header: BlockHeader
    transactions: list
    receipts: list


def tx_root(ids) -> bytes:
    return hashlib.sha256(b"".join(bytes.fromhex(i) for i in ids)).digest()


def state_root(accounts) -> bytes:
    h = hashlib.sha256()
    for addr in sorted(accounts):
        acc = accounts[addr]
        h.update(address_bytes(addr) + u256(acc.balance) + u64(acc.nonce) + bytes([acc.kind]))
        h.update(u32(len(acc.storage)))
        for key in sorted(acc.storage):
            val = acc.storage[key]
            h.update(key + u32(len(val)) + val)
    return h.digest()


class _Overlay:
    """Copy-on-write account view; ``commit`` pushes writes to the parent."""

    def __init__(self, parent):
        self.parent = parent
        self.accounts = {}

    def get(self, addr):
        if addr in self.accounts:
            return self.accounts[addr]
        return self.parent.get(addr)

    def account(self, addr):
        acc = self.accounts.get(addr)
        if acc is None:
            base = self.parent.get(addr)
            acc = base.copy() if base is not None else AccountState()
            self.accounts[addr] = acc
        return acc

    def commit(self):
        if isinstance(self.parent, _Overlay):
            self.parent.accounts.update(self.accounts)
        else:
            self.parent.update(self.accounts)


class StorageView:
    """Named, JSON-valued access to one account's 32-byte-keyed storage."""

    def __init__(self, overlay, address, prefix=""):
        self._overlay = overlay
        self.address = address
        self.prefix = prefix

    def _key(self, name):
        return storage_key(self.prefix + name)

    def get_json(self, name, default=None):
        acc = self._overlay.get(self.address)
        raw = acc.storage.get(self._key(name)) if acc is not None else None
        if raw is None:
            return default
        return json.loads(unpad32(raw))

    def set_json(self, name, value):
        self._overlay.account(self.address).storage[self._key(name)] = pad32(canonical_json(value))

    def child(self, prefix):
        return StorageView(self._overlay, self.address, self.prefix + prefix)


class ExecContext:
    """What native contract code sees while a transaction executes."""

    def __init__(self, chain, overlay, address, sender, value, tx_id, block_number):
        self.chain = chain
        self.overlay = overlay
        self.address = address
        self.sender = sender
        self.value = value
        self.tx_id = tx_id
        self.block_number = block_number
        self.emitted = []

    @property
    def storage(self):
        return StorageView(self.overlay, self.address)

    def balance(self, addr=None):
        acc = self.overlay.get(addr or self.address)
        return acc.balance if acc is not None else 0

    def transfer(self, to, value) -> str:
        """Emit a value transfer from this contract; returns its transaction id."""
        me = self.overlay.account(self.address)
        if me.balance < value:
            raise InsufficientFunds(f"contract balance {me.balance} < {value}")
        me.nonce += 1
        tx = Transaction(self.address, to, value, b"", me.nonce, CONTRACT_EMITTED)
        me.balance -= value
        self.overlay.account(to).balance += value
        self.emitted.append(tx)
        return tx.id

    def verify_signature(self, addr, message, signature) -> bool:
        return self.chain.signer.verify(addr, message, signature)


def call_payload(method, args=None) -> bytes:
    return canonical_json({"method": method, "args": args or {}})


def create_payload(contract_type, args=None) -> bytes:
    return canonical_json({"create": contract_type, "args": args or {}})


class Chain:
    """One linear chain with an explicit mining step.

    ``accounts`` is the genesis allocation: ``[(key, balance), ...]``.
    ``contract_types`` maps type names to native contract classes.
    """

    def __init__(self, accounts=(), contract_types=None, finality=FINALITY_DEPTH,
                 signer=None, journal=None):
        self.signer = signer or DeterministicSigner()
        self.contract_types = dict(contract_types or {})
        self.finality = finality
        self._state = {}
        self._pending = []
        self._blocks = []
        self._tx_index = {}   # id -> (block number, position)
        self._lock = threading.RLock()
        self._root = None
        self._journal = None
        genesis = []
        for key, balance in accounts:
            addr = self.signer.register(key)
            self._state.setdefault(addr, AccountState()).balance += balance
            genesis.append([key.hex(), balance])
        self._root = state_root(self._state)
        header = BlockHeader(0, ZERO_HASH, tx_root([]), self._root)
        self._blocks.append(Block(header, [], []))
        if journal is not None:
            self._journal = open(journal, "w")
            self._write({"genesis": genesis, "finality": finality})

    # -- journal -------------------------------------------------------------

    def _write(self, record):
        if self._journal is not None:
            self._journal.write(json.dumps(record, sort_keys=True) + "\n")
            self._journal.flush()

    def close(self):
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    @classmethod
    def replay(cls, path, contract_types=None, signer=None, journal=None, verify=True):
        """Rebuild a chain from a journal, checking every block hash."""
        with open(path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records or "genesis" not in records[0]:
            raise IntegrityViolation("journal does not start with a genesis record")
        head = records[0]
        chain = cls([(bytes.fromhex(k), b) for k, b in head["genesis"]], contract_types,
                    head.get("finality", FINALITY_DEPTH), signer, journal)
        for rec in records[1:]:
            if "key" in rec:
                chain.register_key(bytes.fromhex(rec["key"]))
                continue
            for raw in rec["txs"]:
                chain.submit_transaction(Transaction.decode(bytes.fromhex(raw)))
            header = chain.mine_block()
            if verify and header.hash.hex() != rec["hash"]:
                raise IntegrityViolation(f"block {header.number} hash differs from journal")
        return chain

    # -- accounts ------------------------------------------------------------

    def register_key(self, key: bytes) -> str:
        with self._lock:
            addr = self.signer.register(key)
            self._write({"key": key.hex()})
            return addr

    def address_of(self, key: bytes) -> str:
        return self.signer.address_of(key)

    @property
    def head(self) -> BlockHeader:
        return self._blocks[-1].header

    @property
    def height(self) -> int:
        return self.head.number

    def block(self, number) -> Block:
        return self._blocks[number]

    @property
    def blocks(self):
        return list(self._blocks)

    def balance(self, addr) -> int:
        acc = self._state.get(addr)
        return acc.balance if acc is not None else 0

    def nonce(self, addr) -> int:
        acc = self._state.get(addr)
        return acc.nonce if acc is not None else 0

    def total_supply(self) -> int:
        return sum(a.balance for a in self._state.values())

    def account_info(self, addr) -> AccountSummary:
        acc = self._state.get(addr)
        if acc is None:
            raise UnknownAccount(addr)
        return AccountSummary(addr, acc.balance, acc.nonce,
                              "Contract" if acc.kind == CONTRACT else "EOA",
                              len(acc.storage), acc.code)

    def read_storage(self, addr, key: bytes) -> Optional[bytes]:
        acc = self._state.get(addr)
        if acc is None:
            raise UnknownAccount(addr)
        return acc.storage.get(key)

    def storage_view(self, addr, prefix="") -> StorageView:
        if addr not in self._state:
            raise UnknownAccount(addr)
        return StorageView(_Overlay(self._state), addr, prefix)

    def accounts_snapshot(self):
        return {a: s.copy() for a, s in self._state.items()}

    def is_contract(self, addr) -> bool:
        acc = self._state.get(addr)
        return acc is not None and acc.kind == CONTRACT

    # -- transactions --------------------------------------------------------

    def _pending_from(self, addr):
        return [t for t in self._pending if t.sender == addr]

    def next_nonce(self, addr) -> int:
        with self._lock:
            return self.nonce(addr) + len(self._pending_from(addr)) + 1

    def sign(self, key, to, value=0, payload=b"", nonce=None) -> Transaction:
        sender = self.address_of(key)
        if nonce is None:
            nonce = self.next_nonce(sender)
        tx = Transaction(sender, to, value, payload, nonce, EXTERNAL)
        return Transaction(sender, to, value, payload, nonce, EXTERNAL,
                           self.signer.sign(key, tx.canonical()))

    def submit_transaction(self, tx: Transaction) -> str:
        with self._lock:
            if tx.origin != EXTERNAL or self.is_contract(tx.sender):
                raise BadSignature("contract accounts cannot originate transactions")
            if not self.signer.verify(tx.sender, tx.canonical(), tx.signature):
                raise BadSignature(f"signature does not verify for {tx.sender}")
            pending = self._pending_from(tx.sender)
            expected = self.nonce(tx.sender) + len(pending) + 1
            if tx.nonce != expected:
                raise NonceMismatch(f"nonce {tx.nonce}, expected {expected}")
            committed = sum(t.value for t in pending)
            if self.balance(tx.sender) < committed + tx.value:
                raise InsufficientFunds(
                    f"{tx.sender} balance {self.balance(tx.sender)} < {committed + tx.value}")
            self._pending.append(tx)
            return tx.id

    def transact(self, key, to, value=0, payload=b"") -> str:
        return self.submit_transaction(self.sign(key, to, value, payload))

    def call(self, key, contract, method, args=None, value=0) -> str:
        return self.transact(key, contract, value, call_payload(method, args))

    def create(self, key, contract_type, args=None, value=0):
        """Queue a contract creation; returns ``(tx id, future contract address)``."""
        sender = self.address_of(key)
        nonce = self.next_nonce(sender)
        tx = self.sign(key, ZERO_ADDRESS, value, create_payload(contract_type, args), nonce)
        return self.submit_transaction(tx), contract_address(sender, nonce)

    @property
    def pending(self):
        return list(self._pending)

    def _apply(self, parent, tx, block_number):
        """Apply one external transaction onto ``parent``; returns (receipt, emitted)."""
        outer = _Overlay(parent)
        sender = outer.account(tx.sender)
        if tx.nonce != sender.nonce + 1:
            return Receipt(tx.id, block_number, False, "NonceMismatch", "stale nonce"), []
        sender.nonce += 1
        inner = _Overlay(outer)
        try:
            result, emitted, created = self._execute(inner, tx, block_number)
        except LienpayError as exc:
            outer.commit()
            return Receipt(tx.id, block_number, False, exc.name, str(exc)), []
        except (ValueError, KeyError, TypeError) as exc:
            outer.commit()
            return Receipt(tx.id, block_number, False, type(exc).__name__, str(exc)), []
        inner.commit()
        outer.commit()
        receipt = Receipt(tx.id, block_number, True, result=result,
                          emitted=[e.id for e in emitted])
        if created is not None:
            receipt.result = {"contract": created}
        return receipt, emitted

    def _execute(self, ov, tx, block_number):
        sender = ov.account(tx.sender)
        if sender.balance < tx.value:
            raise InsufficientFunds(f"{tx.sender} balance {sender.balance} < {tx.value}")
        if tx.to == ZERO_ADDRESS:
            return self._create(ov, tx, block_number)
        sender.balance -= tx.value
        ov.account(tx.to).balance += tx.value
        target = ov.get(tx.to)
        if target.kind != CONTRACT:
            return None, [], None
        ctx = ExecContext(self, ov, tx.to, tx.sender, tx.value, tx.id, block_number)
        contract = self._contract(target)
        if tx.payload:
            msg = json.loads(tx.payload)
            result = contract.call(ctx, msg.get("method"), msg.get("args") or {})
        else:
            result = contract.receive(ctx)
        return result, ctx.emitted, None

    def _create(self, ov, tx, block_number):
        msg = json.loads(tx.payload)
        cls = self.contract_types.get(msg.get("create"))
        if cls is None:
            raise ValueError(f"unknown contract type {msg.get('create')!r}")
        addr = contract_address(tx.sender, tx.nonce)
        acc = ov.account(addr)
        if acc.kind == CONTRACT:
            raise ValueError(f"contract already exists at {addr}")
        acc.kind = CONTRACT
        acc.storage[CODE_KEY] = pad32(msg["create"].encode())
        ov.account(tx.sender).balance -= tx.value
        acc.balance += tx.value
        ctx = ExecContext(self, ov, addr, tx.sender, tx.value, tx.id, block_number)
        cls().create(ctx, msg.get("args") or {})
        return None, ctx.emitted, addr

    def _contract(self, acc):
        cls = self.contract_types.get(acc.code)
        if cls is None:
            raise ValueError(f"no native code registered for {acc.code!r}")
        return cls()

    def simulate(self, tx: Transaction) -> Receipt:
        """Dry-run ``tx`` on top of head state plus the pending queue."""
        with self._lock:
            ov = _Overlay(self._state)
            number = self.height + 1
            for p in self._pending:
                self._apply(ov, p, number)
            receipt, _ = self._apply(ov, tx, number)
            return receipt

    def mine_block(self) -> BlockHeader:
        with self._lock:
            number = self.height + 1
            txs, receipts = [], []
            touched = False
            queue, self._pending = self._pending, []
            for tx in queue:
                receipt, emitted = self._apply(self._state, tx, number)
                touched = True
                txs.append(tx)
                receipts.append(receipt)
                for e in emitted:
                    txs.append(e)
                    receipts.append(Receipt(e.id, number, True, parent=tx.id))
            if touched:
                self._root = state_root(self._state)
            header = BlockHeader(number, self.head.hash, tx_root([t.id for t in txs]), self._root)
            self._blocks.append(Block(header, txs, receipts))
            for pos, tx in enumerate(txs):
                self._tx_index[tx.id] = (number, pos)
            self._write({
                "block": number,
                "hash": header.hash.hex(),
                "txs": [t.encode().hex() for t in txs if t.origin == EXTERNAL],
            })
            return header

    def mine(self, n=1):
        return [self.mine_block() for _ in range(n)]

    # -- queries -------------------------------------------------------------

    def _locate(self, tx_id):
        loc = self._tx_index.get(tx_id)
        if loc is None:
            raise UnknownTransaction(tx_id)
        return loc

    def get_transaction(self, tx_id):
        number, pos = self._locate(tx_id)
        block = self._blocks[number]
        return block.transactions[pos], block.receipts[pos]

    def receipt(self, tx_id) -> Receipt:
        return self.get_transaction(tx_id)[1]

    def confirmations(self, tx_id) -> int:
        number, _ = self._locate(tx_id)
        return self.height - number + 1

    def is_final(self, tx_id) -> bool:
        return self.confirmations(tx_id) >= self.finality

    def transaction_count(self, first_block=1, last_block=None):
        last = self.height if last_block is None else last_block
        return sum(len(self._blocks[n].transactions) for n in range(first_block, last + 1))

    def recompute_state_root(self) -> bytes:
        return state_root(self._state)
