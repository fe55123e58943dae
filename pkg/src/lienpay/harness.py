"""Scenario harness: replays capture cycles end to end and renders reports.

A scenario file is YAML::

    project: A
    accounts: {owner: 10000000, gc: 0, framer: 0}   # name -> genesis wei
    owner: owner
    publishers: [gc]
    stakeholders: [owner, gc]
    escrow: {from: owner, amount: 5000000}
    schedule_of_values:
      - [09-2216, 1000000, framer]                  # cost_code, wei, payee name
    cycles:
      - capture: {cycle: 1, granularity: element, elements: [...]}
        publisher: gc            # optional, defaults to the first publisher
        fund: 0                  # optional owner top-up before the update
        redeem: [{payee: framer, cycle: 1}]    # optional, before the update
        replay_previous: false   # resend the previous payload verbatim
        expect: {transactions: 5, payments: {framer: 400}, tokens: {framer: owner},
                 error: null, redemptions: {framer: 400}}
    expect: {transactions: 10, all_funded: true}

Each cycle: ingest -> publish bundle -> value dues -> pay.receiveUpdate over
rpc -> mine until the update is final -> advance the paid ledger.
"""

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import yaml

from .cas import BlockStore, CHUNK_SIZE
from .errors import ExpectationMismatch, LienpayError, ScenarioParseError
from .ledger import CONTRACT, FINALITY_DEPTH, Chain, EXTERNAL, key_from_seed
from .paycontract import CONTRACT_TYPE, PaymentClient, PaymentContract, deploy, make_payload
from .progress import PaidLedger, ingest_capture, publish_bundle, value_due, ScheduleOfValues
from .rpc import RpcServer, request

CONTRACT_TYPES = {CONTRACT_TYPE: PaymentContract}
TOKEN_ROUTES = ("owner", "contractor")


@dataclass
class CycleSpec:
    capture: Optional[dict]
    publisher: Optional[str] = None
    fund: int = 0
    redeem: list = field(default_factory=list)
    replay_previous: bool = False
    expect: dict = field(default_factory=dict)


@dataclass
class Scenario:
    project: str
    accounts: dict          # name -> genesis balance
    owner: str
    publishers: list
    stakeholders: list
    sov_rows: list          # (cost_code, wei, payee name)
    escrow_from: str
    escrow: int
    cycles: list
    expect: dict = field(default_factory=dict)
    confirmations: int = FINALITY_DEPTH

    def key(self, name) -> bytes:
        return key_from_seed(f"{self.project}:{name}")


def _need(doc, name, kind, where="scenario"):
    if name not in doc:
        raise ScenarioParseError(f"{where}: missing {name!r}")
    value = doc[name]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ScenarioParseError(f"{where}: {name!r} has the wrong type")
    return value


def load_scenario(source) -> Scenario:
    """Parse a scenario from a path, YAML text, or a mapping."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                                and os.path.exists(source)):
            with open(source) as fh:
                text = fh.read()
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioParseError(str(exc)) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario must be a mapping")
    accounts = _need(doc, "accounts", dict)
    for name, bal in accounts.items():
        if not isinstance(bal, int) or isinstance(bal, bool) or bal < 0:
            raise ScenarioParseError(f"account {name}: balance must be a non-negative integer")
    owner = _need(doc, "owner", str)
    publishers = _need(doc, "publishers", list)
    stakeholders = list(doc.get("stakeholders", []))
    for name in [owner, *publishers, *stakeholders]:
        if name not in accounts:
            raise ScenarioParseError(f"unknown account {name!r}")
    rows = []
    for i, row in enumerate(_need(doc, "schedule_of_values", list)):
        if isinstance(row, dict):
            row = [row.get("cost_code"), row.get("scheduled_value_wei"), row.get("payee")]
        if not isinstance(row, list) or len(row) != 3:
            raise ScenarioParseError(f"schedule_of_values row {i}: expected [cost_code, wei, payee]")
        code, value, payee = row
        if not isinstance(value, int) or value < 0:
            raise ScenarioParseError(f"schedule_of_values row {i}: bad value")
        if payee is not None and payee not in accounts:
            raise ScenarioParseError(f"schedule_of_values row {i}: unknown payee {payee!r}")
        rows.append((str(code), value, payee))
    escrow = doc.get("escrow") or {}
    cycles = []
    last = None
    for i, c in enumerate(_need(doc, "cycles", list)):
        if not isinstance(c, dict):
            raise ScenarioParseError(f"cycle {i}: must be a mapping")
        capture = c.get("capture")
        replay = bool(c.get("replay_previous", False))
        if capture is None and not replay:
            raise ScenarioParseError(f"cycle {i}: needs a capture or replay_previous")
        if capture is not None:
            capture = {"project": doc.get("project", ""), **capture}
            cid = capture.get("cycle")
            if not isinstance(cid, int) or (last is not None and cid <= last):
                raise ScenarioParseError(f"cycle {i}: cycle ids must strictly increase")
            last = cid
        publisher = c.get("publisher")
        if publisher is not None and publisher not in accounts:
            raise ScenarioParseError(f"cycle {i}: unknown publisher {publisher!r}")
        for r in c.get("redeem") or []:
            if not isinstance(r, dict) or r.get("payee") not in accounts or not isinstance(r.get("cycle"), int):
                raise ScenarioParseError(f"cycle {i}: redeem entries need payee and cycle")
        cycles.append(CycleSpec(capture, publisher, int(c.get("fund", 0)), list(c.get("redeem") or []),
                                replay, dict(c.get("expect") or {})))
    return Scenario(
        project=str(doc.get("project", "")),
        accounts=dict(accounts),
        owner=owner,
        publishers=list(publishers),
        stakeholders=stakeholders,
        sov_rows=rows,
        escrow_from=escrow.get("from", owner),
        escrow=int(escrow.get("amount", 0)),
        cycles=cycles,
        expect=dict(doc.get("expect") or {}),
        confirmations=int(doc.get("confirmations", FINALITY_DEPTH)),
    )


def bundled_scenario(name) -> str:
    """Path of a scenario shipped with the package, e.g. ``project_a``."""
    fname = name if name.endswith(".scenario") else name + ".scenario"
    return str(resources.files("lienpay") / "scenarios" / fname)


@dataclass
class CycleResult:
    cycle_id: Optional[int]
    update_tx: Optional[str] = None
    error: Optional[str] = None
    transactions: int = 0
    settlements: list = field(default_factory=list)   # audit entries
    redemptions: list = field(default_factory=list)   # (payee name, value or error name)
    instructions: list = field(default_factory=list)
    payload: Optional[dict] = None


class Project:
    """Off-chain client for one scenario: owns the chain, store and paid ledger."""

    def __init__(self, scenario: Scenario, journal=None, store=None, confirmations=None,
                 chunk_size=CHUNK_SIZE):
        self.scenario = scenario
        self.names = {}
        accounts = []
        for name, bal in scenario.accounts.items():
            key = scenario.key(name)
            accounts.append((key, bal))
        depth = confirmations if confirmations is not None else scenario.confirmations
        self.chain = Chain(accounts, CONTRACT_TYPES, depth, journal=journal)
        self.addr = {n: self.chain.address_of(scenario.key(n)) for n in scenario.accounts}
        self.names = {a: n for n, a in self.addr.items()}
        self.store = store if store is not None else BlockStore(chunk_size=chunk_size)
        self.sov = ScheduleOfValues()
        for code, value, payee in scenario.sov_rows:
            self.sov.add(code, value, self.addr[payee] if payee else None)
        self.paid = PaidLedger()
        self.contract = None
        self.client = None
        self.rpc = None
        self.results = []
        self._last_payload = None

    def key(self, name):
        return self.scenario.key(name)

    def setup(self):
        sc = self.scenario
        config = {
            "owner": self.addr[sc.owner],
            "publishers": [self.addr[p] for p in sc.publishers],
            "stakeholders": [self.addr[s] for s in sc.stakeholders],
            "payees": {code: self.addr[p] for code, _, p in sc.sov_rows if p},
        }
        self.contract = deploy(self.chain, self.key(sc.owner), config)
        self.client = PaymentClient(self.chain, self.contract)
        keyring = {a: self.key(n) for n, a in self.addr.items()}
        self.rpc = RpcServer(self.chain, self.contract, self.store, keyring)
        if sc.escrow:
            self.client.fund(self.key(sc.escrow_from), sc.escrow)
            self.chain.mine_block()
        return self.contract

    def call(self, method, params):
        resp = json.loads(self.rpc.dispatch(request(method, params)))
        if "error" in resp:
            return None, resp["error"]["message"]
        return resp["result"], None

    def mine_until_final(self, tx_id):
        while not self.chain.is_final(tx_id):
            self.chain.mine_block()

    def run_cycle(self, spec: CycleSpec) -> CycleResult:
        sc = self.scenario
        if spec.fund:
            self.client.fund(self.key(sc.owner), spec.fund)
            self.chain.mine_block()
        result = CycleResult(spec.capture["cycle"] if spec.capture else None)
        for r in spec.redeem:
            result.redemptions.append((r["payee"], self._redeem(r["payee"], r["cycle"])))

        if spec.replay_previous:
            payload, instructions = self._last_payload, []
            if payload is None:
                raise ScenarioParseError("replay_previous with no earlier update")
            result.cycle_id = payload["cycle"]
        else:
            capture = ingest_capture(spec.capture)
            bundle = publish_bundle(capture, self.sov, self.store)
            instructions = [i.with_bundle(bundle) for i in value_due(capture, self.sov, self.paid)]
            if not instructions:
                self.results.append(result)
                return result
            payload = make_payload(capture.cycle_id, instructions)
        result.instructions = instructions
        result.payload = payload

        publisher = spec.publisher or sc.publishers[0]
        first = self.chain.height + 1
        res, err = self.call("pay.receiveUpdate", {"from": self.addr[publisher], "payload": payload})
        if err is not None:
            result.error = err
            self.results.append(result)
            return result
        result.update_tx = res["txId"]
        self.chain.mine_block()
        self.mine_until_final(result.update_tx)
        result.transactions = self.chain.transaction_count(first)
        record = self.client.processed(result.update_tx)
        # cumulative value advances only once the settling transaction is final;
        # tokenized instructions count as settled (the token carries the claim)
        for ins in instructions:
            self.paid.advance(ins, record.cycle_id)
        result.settlements = self.client.audit(result.update_tx)
        self._last_payload = payload
        self.results.append(result)
        return result

    def _redeem(self, payee, cycle):
        holder = self.addr[payee]
        try:
            entries = [e for e in self.client.audit(holder) if e["cycle"] == cycle]
        except LienpayError as exc:
            return exc.name
        if not entries:
            return "UnknownToken"
        token_id = entries[0]["tokenId"]
        res, err = self.call("pay.redeemToken", {"from": holder, "tokenId": token_id})
        if err is not None:
            return err
        self.chain.mine_block()
        self.mine_until_final(res["txId"])
        return self.chain.receipt(res["txId"]).result["value"]

    def run(self):
        if self.contract is None:
            self.setup()
        for spec in self.scenario.cycles:
            self.run_cycle(spec)
        return self.results

    # -- expectations -------------------------------------------------------------

    def check(self):
        """Compare results against the scenario's expectations; returns diff lines."""
        diffs = []
        for spec, res in zip(self.scenario.cycles, self.results):
            tag = f"cycle {res.cycle_id}"
            exp = spec.expect
            if "error" in exp and exp["error"] != res.error:
                diffs.append(f"{tag}: error expected {exp['error']}, actual {res.error}")
            elif "error" not in exp and res.error is not None:
                diffs.append(f"{tag}: unexpected error {res.error}")
            if "transactions" in exp and exp["transactions"] != res.transactions:
                diffs.append(f"{tag}: transactions expected {exp['transactions']}, actual {res.transactions}")
            by_payee = {}
            for e in res.settlements:
                by_payee.setdefault(self.names.get(e["payee"], e["payee"]), []).append(e)
            for name, amount in (exp.get("payments") or {}).items():
                got = sum(e["amount"] for e in by_payee.get(name, []) if e["funded"])
                if got != amount:
                    diffs.append(f"{tag}: payee {name} expected {amount}, actual {got}")
            for name, route in (exp.get("tokens") or {}).items():
                want = self.addr[self.scenario.owner] if route == "owner" else self.addr.get(name)
                owners = [e["token"]["history"][1][1] for e in by_payee.get(name, [])]
                if owners != [want]:
                    got = [self.names.get(o, o) for o in owners]
                    diffs.append(f"{tag}: token for {name} expected {route}, actual {got}")
            got_red = dict(res.redemptions)
            for name, want in (exp.get("redemptions") or {}).items():
                if got_red.get(name) != want:
                    diffs.append(f"{tag}: redemption by {name} expected {want}, actual {got_red.get(name)}")
        total = sum(r.transactions for r in self.results)
        exp = self.scenario.expect
        if "transactions" in exp and exp["transactions"] != total:
            diffs.append(f"total: transactions expected {exp['transactions']}, actual {total}")
        if exp.get("all_funded"):
            unfunded = [e for r in self.results for e in r.settlements if not e["funded"]]
            if unfunded:
                diffs.append(f"total: {len(unfunded)} settlements not funded")
        if "cycles" in exp and exp["cycles"] != len(self.results):
            diffs.append(f"total: cycles expected {exp['cycles']}, actual {len(self.results)}")
        return diffs

    def assert_expectations(self):
        diffs = self.check()
        if diffs:
            raise ExpectationMismatch(diffs)


def run_scenario(source, **kwargs) -> Project:
    project = Project(load_scenario(source), **kwargs)
    project.run()
    return project


# -- reporting --------------------------------------------------------------------

def find_contract(chain):
    for addr, acc in sorted(chain.accounts_snapshot().items()):
        if acc.kind == CONTRACT and acc.code == CONTRACT_TYPE:
            return addr
    return None


def classify_transactions(chain):
    """Count ledger transactions by role across the whole chain."""
    counts = {"deploy": 0, "fund": 0, "update": 0, "settlement": 0, "redemption": 0,
              "failed": 0, "other": 0}
    kind_of = {}
    for block in chain.blocks[1:]:
        for tx, receipt in zip(block.transactions, block.receipts):
            if tx.origin == EXTERNAL:
                kind = "other"
                if tx.to == "0x" + "00" * 20:
                    kind = "deploy"
                elif tx.payload:
                    method = json.loads(tx.payload).get("method")
                    kind = {"receiveUpdate": "update", "fund": "fund", "redeemToken": "redemption",
                            "transferToken": "redemption"}.get(method, "other")
                elif chain.is_contract(tx.to):
                    kind = "fund"
                if not receipt.ok:
                    kind = "failed"
                kind_of[tx.id] = kind
                counts[kind] += 1
            else:
                parent = kind_of.get(receipt.parent)
                counts["settlement" if parent == "update" else
                       "redemption" if parent == "redemption" else "other"] += 1
    counts["payment_processing"] = counts["update"] + counts["settlement"]
    counts["total"] = sum(len(b.transactions) for b in chain.blocks[1:])
    return counts


def _table(headers, rows):
    cols = [list(map(str, c)) for c in zip(headers, *rows)] if rows else [[h] for h in headers]
    widths = [max(len(v) for v in c) for c in cols]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def _short(h, n=12):
    return "-" if not h else h[:n]


def cycle_report(chain, contract, fmt="text") -> str:
    """Per-settlement report built only from chain state (so journals reproduce it)."""
    client = PaymentClient(chain, contract)
    records = client.records()
    counts = classify_transactions(chain)
    rows, entries = [], []
    for rec in records:
        for e in client.audit(rec.update_tx):
            entries.append(e)
            rows.append([rec.cycle_id, _short(rec.update_tx), e["payee"], e["amount"],
                         "yes" if e["funded"] else "no", e["tokenId"], _short(e["settlementTx"]),
                         e["token"]["owner"], e["token"]["status"]])
    summary = {
        "contract": contract,
        "height": chain.height,
        "head": chain.head.hash.hex(),
        "stateRoot": chain.head.state_root.hex(),
        "cycles": len(records),
        "transactions": counts,
        "settlements": len(entries),
        "funded": sum(1 for e in entries if e["funded"]),
        "paid": client.total_paid,
        "escrowBalance": chain.balance(contract),
        "escrowBalanced": client.escrow_balanced(),
    }
    if fmt == "json":
        return json.dumps({"summary": summary, "settlements": entries}, sort_keys=True, indent=2) + "\n"
    out = [_table(["cycle", "update", "payee", "amount", "funded", "token", "settlement",
                   "token owner", "status"], rows), ""]
    out.append(f"contract            {contract}")
    out.append(f"blocks              {chain.height}")
    out.append(f"head                {summary['head']}")
    out.append(f"state root          {summary['stateRoot']}")
    out.append(f"payment cycles      {len(records)}")
    out.append(f"payment txs         {counts['payment_processing']} "
               f"(updates {counts['update']}, settlements {counts['settlement']})")
    out.append(f"other txs           deploy {counts['deploy']}, fund {counts['fund']}, "
               f"redemption {counts['redemption']}, failed {counts['failed']}")
    out.append(f"settlements funded  {summary['funded']}/{len(entries)}")
    out.append(f"total paid (wei)    {summary['paid']}")
    out.append(f"escrow balance      {summary['escrowBalance']} "
               f"({'balanced' if summary['escrowBalanced'] else 'UNBALANCED'})")
    return "\n".join(out) + "\n"


def parse_key(text):
    """Report/audit key from CLI text: token:N, cycle:N, bare N (token), or a string key."""
    text = text.strip()
    if text.startswith("token:"):
        return int(text[6:])
    if text.startswith("cycle:"):
        return ("cycle", int(text[6:]))
    if text.isdigit():
        return int(text)
    return text


def audit_report(chain, contract, key, fmt="text") -> str:
    client = PaymentClient(chain, contract)
    entries = client.audit(key)
    if fmt == "json":
        return json.dumps(entries, sort_keys=True, indent=2) + "\n"
    out = []
    for e in entries:
        tok = e["token"]
        out.append(_table(["field", "value"], [
            ["cycle", e["cycle"]],
            ["payee", e["payee"]],
            ["amount (wei)", e["amount"]],
            ["scope", ", ".join(e["scope"])],
            ["funded", "yes" if e["funded"] else "no"],
            ["update tx", e["updateTx"]],
            ["settlement tx", e["settlementTx"] or "-"],
            ["redemption tx", e["redemptionTx"] or "-"],
            ["token id", e["tokenId"]],
            ["token uri", tok["uri"]],
            ["token value", tok["value"]],
            ["token owner", tok["owner"]],
            ["token status", tok["status"]],
            ["ownership", " -> ".join((h[1] for h in tok["history"]))],
            *[[f"cid {k}", v] for k, v in sorted(e["bundle"].items())],
        ]))
        out.append("")
    return "\n".join(out)
