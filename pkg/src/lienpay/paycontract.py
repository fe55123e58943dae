"""Escrow payment contract: progress updates in, payments and LIEN tokens out.

The contract runs as native code inside :class:`lienpay.ledger.Chain` and keeps
every piece of state in its account storage, so the block state root commits
to processed records, tokens and configuration alike.

Canonical update bytes (hashed for duplicate detection)::

    canonical_json({"cycle": int,
                    "instructions": [{"payee": "0x..", "amount": int,
                                      "scope": [str, ...],
                                      "bundle": {"elements": "Qm..", ...}}, ...]})

where ``canonical_json`` sorts keys and drops whitespace.
"""

import hashlib
from dataclasses import dataclass
from typing import Optional

from .cas import Cid, is_cid_text
from .encoding import canonical_json
from .errors import (
    AlreadyRedeemed,
    BadSignature,
    DuplicateUpdate,
    InsufficientEscrow,
    MalformedPayload,
    MissingSignature,
    NotOwner,
    StaleCycle,
    UnauthorizedPublisher,
    UnknownKey,
    error_class,
)
from .ledger import call_payload, is_address
from .progress import CidBundle
from .token import REDEEMED, LienRegistry

CONTRACT_TYPE = "PaymentContract"
BUNDLE_FIELDS = ("elements", "schedule_of_values", "raw_progress", "analysis_tool")


# -- canonical forms -----------------------------------------------------------

def _fail(msg):
    raise MalformedPayload(msg)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def normalize_config(cfg):
    if not isinstance(cfg, dict):
        _fail("config must be a mapping")
    owner = cfg.get("owner")
    publishers = cfg.get("publishers", [])
    stakeholders = cfg.get("stakeholders", [])
    payees = cfg.get("payees", {})
    if not is_address(owner):
        _fail("owner must be an address")
    if not isinstance(publishers, list) or not isinstance(stakeholders, list) or not isinstance(payees, dict):
        _fail("publishers/stakeholders must be lists and payees a mapping")
    for a in list(publishers) + list(stakeholders) + list(payees.values()):
        if not is_address(a):
            _fail(f"not an address: {a!r}")
    stakeholders = sorted(set(stakeholders) | {owner})
    if not set(publishers) <= set(stakeholders):
        _fail("every publisher must be a stakeholder")
    return {
        "owner": owner,
        "publishers": sorted(set(publishers)),
        "stakeholders": stakeholders,
        "payees": {str(k): v for k, v in sorted(payees.items())},
    }


def normalize_payload(payload):
    """Validate an update payload and return its canonical mapping."""
    if not isinstance(payload, dict):
        _fail("payload must be a mapping")
    cycle = payload.get("cycle")
    if not _is_int(cycle) or cycle < 0:
        _fail("cycle must be a non-negative integer")
    items = payload.get("instructions")
    if not isinstance(items, list) or not items:
        _fail("instructions must be a non-empty list")
    out = []
    for i, ins in enumerate(items):
        if not isinstance(ins, dict):
            _fail(f"instruction {i} must be a mapping")
        payee, amount = ins.get("payee"), ins.get("amount")
        scope, bundle = ins.get("scope", []), ins.get("bundle")
        if not is_address(payee):
            _fail(f"instruction {i}: payee is not an address")
        if not _is_int(amount) or amount <= 0:
            _fail(f"instruction {i}: amount must be a positive integer")
        if not isinstance(scope, list) or not all(isinstance(k, str) for k in scope):
            _fail(f"instruction {i}: scope must be a list of strings")
        if not isinstance(bundle, dict):
            _fail(f"instruction {i}: bundle missing")
        clean = {}
        for name in BUNDLE_FIELDS:
            if not is_cid_text(bundle.get(name)):
                _fail(f"instruction {i}: bundle.{name} is not a CID")
            clean[name] = bundle[name]
        if bundle.get("as_built_bim") is not None:
            if not is_cid_text(bundle["as_built_bim"]):
                _fail(f"instruction {i}: bundle.as_built_bim is not a CID")
            clean["as_built_bim"] = bundle["as_built_bim"]
        extra = set(bundle) - set(BUNDLE_FIELDS) - {"as_built_bim"}
        if extra:
            _fail(f"instruction {i}: unexpected bundle fields {sorted(extra)}")
        out.append({"payee": payee, "amount": amount, "scope": list(scope), "bundle": clean})
    return {"cycle": cycle, "instructions": out}


def payload_bytes(payload) -> bytes:
    return canonical_json(normalize_payload(payload))


def payload_digest(payload) -> str:
    return hashlib.sha256(payload_bytes(payload)).hexdigest()


def make_payload(cycle_id, instructions):
    """Update payload from :class:`lienpay.progress.PaymentInstruction` objects."""
    return {"cycle": cycle_id, "instructions": [ins.to_json() for ins in instructions]}


def amendment_message(contract, version, params) -> bytes:
    """Bytes every stakeholder signs to move the contract to ``version``."""
    return canonical_json({"contract": contract, "version": version, "params": params})


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class Settlement:
    payee: str
    amount: int
    scope: tuple
    bundle: CidBundle
    tx_id: Optional[str]
    token_id: int
    funded: bool

    @classmethod
    def from_json(cls, obj):
        return cls(obj["payee"], obj["amount"], tuple(obj["scope"]),
                   CidBundle.from_json(obj["bundle"]), obj["tx"], obj["token"], obj["funded"])


@dataclass(frozen=True)
class ProcessedRecord:
    digest: str
    cycle_id: int
    update_tx: str
    settlements: tuple

    @classmethod
    def from_json(cls, obj):
        return cls(obj["digest"], obj["cycle"], obj["updateTx"],
                   tuple(Settlement.from_json(s) for s in obj["settlements"]))


# -- on-chain code -------------------------------------------------------------

class PaymentContract:
    """Native contract code; stateless, all state lives in ``ctx.storage``."""

    def create(self, ctx, args):
        cfg = normalize_config(args.get("config"))
        if ctx.sender != cfg["owner"]:
            raise NotOwner("only the project owner may deploy the payment contract")
        s = ctx.storage
        s.set_json("config", cfg)
        s.set_json("version", 0)
        s.set_json("funded", ctx.value)
        s.set_json("paidOut", 0)
        s.set_json("lastCycle", -1)
        s.set_json("records", 0)

    def receive(self, ctx):
        self._credit(ctx)
        return {"funded": ctx.value}

    def call(self, ctx, method, args):
        handler = {
            "fund": self.fund,
            "receiveUpdate": self.receive_update,
            "redeemToken": self.redeem_token,
            "transferToken": self.transfer_token,
            "amend": self.amend,
        }.get(method)
        if handler is None:
            raise MalformedPayload(f"no public function {method!r}")
        self._credit(ctx)
        return handler(ctx, args)

    @staticmethod
    def _credit(ctx):
        if ctx.value:
            s = ctx.storage
            s.set_json("funded", s.get_json("funded") + ctx.value)

    def fund(self, ctx, args):
        return {"funded": ctx.value}

    def receive_update(self, ctx, args):
        s = ctx.storage
        payload = normalize_payload(args.get("payload"))
        cfg = s.get_json("config")
        if ctx.sender not in cfg["publishers"]:
            raise UnauthorizedPublisher(f"{ctx.sender} is not an authorized publisher")
        registered = set(cfg["payees"].values())
        for ins in payload["instructions"]:
            if ins["payee"] not in registered:
                raise MalformedPayload(f"payee {ins['payee']} is not registered")
        digest = hashlib.sha256(canonical_json(payload)).hexdigest()
        if s.get_json(f"digest:{digest}") is not None:
            raise DuplicateUpdate(f"update {digest} already processed")
        if payload["cycle"] <= s.get_json("lastCycle"):
            raise StaleCycle(f"cycle {payload['cycle']} not after {s.get_json('lastCycle')}")

        n = s.get_json("records")
        settlements = [self._settle(ctx, cfg, payload["cycle"], ins) for ins in payload["instructions"]]
        record = {
            "digest": digest,
            "cycle": payload["cycle"],
            "updateTx": ctx.tx_id,
            "settlements": settlements,
        }
        s.set_json(f"record:{n}", record)
        s.set_json("records", n + 1)
        s.set_json(f"digest:{digest}", n)
        s.set_json("lastCycle", payload["cycle"])
        s.set_json(f"idx:cycle:{payload['cycle']}", n)
        self._index(s, f"idx:tx:{ctx.tx_id}", [n, None])
        for i, st in enumerate(settlements):
            ref = [n, i]
            if st["tx"]:
                self._index(s, f"idx:tx:{st['tx']}", ref)
            s.set_json(f"idx:token:{st['token']}", ref)
            self._index(s, f"idx:payee:{st['payee']}", ref)
            for cid in sorted(set(st["bundle"].values())):
                self._index(s, f"idx:cid:{cid}", ref)
        return record

    @staticmethod
    def _index(s, name, ref):
        refs = s.get_json(name, [])
        if ref not in refs:
            refs.append(ref)
        s.set_json(name, refs)

    def _settle(self, ctx, cfg, cycle, ins):
        """PaymentSettlement: pay in full if the escrow covers it, else tokenize to the payee."""
        s = ctx.storage
        me, amount = ctx.address, ins["amount"]
        tokens = LienRegistry(s, me)
        token_id = tokens.mint(me, me, Cid.parse(ins["bundle"]["elements"]), amount,
                               ins["scope"], cycle)
        if ctx.balance() >= amount:
            tx_id = ctx.transfer(ins["payee"], amount)
            s.set_json("paidOut", s.get_json("paidOut") + amount)
            s.set_json(f"settled:{token_id}", True)
            tokens.transfer(token_id, me, cfg["owner"], me)
            funded = True
        else:
            tx_id = None
            tokens.transfer(token_id, me, ins["payee"], me)
            funded = False
        return {**ins, "tx": tx_id, "token": token_id, "funded": funded}

    def redeem_token(self, ctx, args):
        return self._redeem(ctx, args.get("tokenId"), ctx.sender)

    def _redeem(self, ctx, token_id, holder):
        s = ctx.storage
        me = ctx.address
        tokens = LienRegistry(s, me)
        tok = tokens.token_info(token_id)
        if tok.status == REDEEMED or s.get_json(f"settled:{token_id}"):
            raise AlreadyRedeemed(f"token {token_id} value already paid")
        if tok.owner != holder:
            raise NotOwner(f"{holder} does not own token {token_id}")
        if ctx.balance() < tok.value:
            raise InsufficientEscrow(f"escrow {ctx.balance()} < token value {tok.value}")
        cfg = s.get_json("config")
        tokens.transfer(token_id, holder, me, holder)
        tx_id = ctx.transfer(holder, tok.value)
        tokens.mark_redeemed(me, token_id)
        tokens.transfer(token_id, me, cfg["owner"], me)
        s.set_json("paidOut", s.get_json("paidOut") + tok.value)
        s.set_json(f"redemption:{token_id}", tx_id)
        ref = s.get_json(f"idx:token:{token_id}")
        if ref is not None:
            self._index(s, f"idx:tx:{tx_id}", ref)
            self._index(s, f"idx:tx:{ctx.tx_id}", ref)
        return {"tokenId": token_id, "tx": tx_id, "value": tok.value}

    def transfer_token(self, ctx, args):
        token_id, to = args.get("tokenId"), args.get("to")
        if not is_address(to):
            raise MalformedPayload("transferToken needs a recipient address")
        if to == ctx.address:
            # sending a token to the contract redeems it
            return self._redeem(ctx, token_id, ctx.sender)
        LienRegistry(ctx.storage, ctx.address).transfer(token_id, ctx.sender, to, ctx.sender)
        return {"tokenId": token_id, "owner": to}

    def amend(self, ctx, args):
        s = ctx.storage
        params, sigs = args.get("params"), args.get("signatures")
        if not isinstance(params, dict) or not isinstance(sigs, dict):
            raise MalformedPayload("amend needs params and signatures mappings")
        cfg = s.get_json("config")
        version = s.get_json("version") + 1
        message = amendment_message(ctx.address, version, params)
        for holder in cfg["stakeholders"]:
            sig = sigs.get(holder)
            if sig is None:
                raise MissingSignature(f"no signature from stakeholder {holder}")
            try:
                raw = bytes.fromhex(sig)
            except (TypeError, ValueError):
                raise BadSignature(f"unreadable signature from {holder}") from None
            if not ctx.verify_signature(holder, message, raw):
                raise BadSignature(f"signature from {holder} does not verify")
        unknown = set(params) - {"owner", "publishers", "stakeholders", "payees"}
        if unknown:
            raise MalformedPayload(f"cannot amend {sorted(unknown)}")
        new = normalize_config({**cfg, **params})
        s.set_json("config", new)
        s.set_json("version", version)
        return {"version": version}


# -- off-chain client ----------------------------------------------------------

def _raise_failed(receipt):
    if not receipt.ok:
        raise error_class(receipt.error)(receipt.message)


def deploy(chain, owner_key, config, fund=0):
    """Create the contract from the owner's account and mine it in; returns the address."""
    cfg = normalize_config(config)
    chain.contract_types.setdefault(CONTRACT_TYPE, PaymentContract)
    tx = chain.sign(owner_key, "0x" + "00" * 20, fund,
                    canonical_json({"create": CONTRACT_TYPE, "args": {"config": cfg}}))
    _raise_failed(chain.simulate(tx))
    tx_id = chain.submit_transaction(tx)
    chain.mine_block()
    receipt = chain.receipt(tx_id)
    _raise_failed(receipt)
    return receipt.result["contract"]


class PaymentClient:
    """Queue calls to, and read state from, one deployed payment contract.

    Mutating methods return transaction ids; with ``preflight`` they first
    dry-run against head + pending state and raise the contract's error.
    """

    def __init__(self, chain, address, preflight=True):
        self.chain = chain
        self.address = address
        self.preflight = preflight

    def _send(self, key, method, args, value=0):
        tx = self.chain.sign(key, self.address, value, call_payload(method, args))
        if self.preflight:
            _raise_failed(self.chain.simulate(tx))
        return self.chain.submit_transaction(tx)

    def fund(self, key, amount) -> str:
        return self._send(key, "fund", {}, amount)

    def receive_update(self, key, payload) -> str:
        return self._send(key, "receiveUpdate", {"payload": payload})

    def redeem_token(self, key, token_id) -> str:
        return self._send(key, "redeemToken", {"tokenId": token_id})

    def transfer_token(self, key, token_id, to) -> str:
        return self._send(key, "transferToken", {"tokenId": token_id, "to": to})

    def amend(self, key, params, signatures) -> str:
        return self._send(key, "amend", {"params": params, "signatures": signatures})

    def sign_amendment(self, key, params) -> str:
        msg = amendment_message(self.address, self.version + 1, params)
        return self.chain.signer.sign(key, msg).hex()

    # reads (head state) -------------------------------------------------------

    @property
    def _s(self):
        return self.chain.storage_view(self.address)

    @property
    def config(self):
        return self._s.get_json("config")

    @property
    def version(self) -> int:
        return self._s.get_json("version")

    @property
    def tokens(self) -> LienRegistry:
        return LienRegistry(self._s, self.address)

    @property
    def total_funded(self) -> int:
        return self._s.get_json("funded")

    @property
    def total_paid(self) -> int:
        return self._s.get_json("paidOut")

    def escrow_balanced(self) -> bool:
        return self.chain.balance(self.address) == self.total_funded - self.total_paid

    def records(self):
        s = self._s
        return [ProcessedRecord.from_json(s.get_json(f"record:{i}")) for i in range(s.get_json("records"))]

    def processed(self, update_tx) -> ProcessedRecord:
        receipt = self.chain.receipt(update_tx)
        _raise_failed(receipt)
        return ProcessedRecord.from_json(receipt.result)

    def audit(self, key):
        """Linked product-flow/cash-flow entries for a tx id, token id, payee, CID or cycle."""
        s = self._s
        refs = None
        if isinstance(key, bool):
            raise UnknownKey(repr(key))
        if isinstance(key, int):
            ref = s.get_json(f"idx:token:{key}")
            refs = [ref] if ref else None
        elif isinstance(key, Cid):
            refs = s.get_json(f"idx:cid:{key.text}")
        elif isinstance(key, tuple) and len(key) == 2 and key[0] == "cycle":
            n = s.get_json(f"idx:cycle:{key[1]}")
            refs = [[n, None]] if n is not None else None
        elif isinstance(key, str):
            k = key.lower()
            if is_address(k):
                refs = s.get_json(f"idx:payee:{k}")
            elif is_cid_text(key):
                refs = s.get_json(f"idx:cid:{key}")
            else:
                refs = s.get_json(f"idx:tx:{k[2:] if k.startswith('0x') else k}")
        if not refs:
            raise UnknownKey(f"nothing recorded for {key!r}")
        out = []
        for n, i in refs:
            rec = s.get_json(f"record:{n}")
            idxs = range(len(rec["settlements"])) if i is None else [i]
            out.extend(self._entry(s, rec, j) for j in idxs)
        return out

    def _entry(self, s, rec, i):
        st = rec["settlements"][i]
        tok = LienRegistry(s, self.address).token_info(st["token"])
        return {
            "cycle": rec["cycle"],
            "digest": rec["digest"],
            "updateTx": rec["updateTx"],
            "payee": st["payee"],
            "amount": st["amount"],
            "scope": st["scope"],
            "bundle": st["bundle"],
            "settlementTx": st["tx"],
            "funded": st["funded"],
            "tokenId": st["token"],
            "token": tok.to_json(),
            "redemptionTx": s.get_json(f"redemption:{st['token']}"),
        }


__all__ = [
    "CONTRACT_TYPE",
    "PaymentClient",
    "PaymentContract",
    "ProcessedRecord",
    "Settlement",
    "amendment_message",
    "deploy",
    "make_payload",
    "normalize_payload",
    "payload_bytes",
    "payload_digest",
]
