import pytest

from lienpay.cas import BlockStore
from lienpay.ledger import Chain, key_from_seed
from lienpay.paycontract import PaymentClient, deploy
from lienpay.progress import ScheduleOfValues


class World:
    """Owner, GC publisher and a few subcontractors on a fresh chain."""

    NAMES = ("owner", "gc", "alpha", "beta", "gamma", "delta", "outsider")

    def __init__(self, balance=10**12, escrow=0, payees=("alpha", "beta", "gamma", "delta")):
        self.keys = {n: key_from_seed(f"test:{n}") for n in self.NAMES}
        self.chain = Chain([(k, balance if n == "owner" else 1_000) for n, k in self.keys.items()])
        self.addr = {n: self.chain.address_of(k) for n, k in self.keys.items()}
        self.codes = {p: p.upper() for p in payees}
        self.config = {
            "owner": self.addr["owner"],
            "publishers": [self.addr["gc"]],
            "stakeholders": [self.addr["owner"], self.addr["gc"]],
            "payees": {self.codes[p]: self.addr[p] for p in payees},
        }
        self.contract = deploy(self.chain, self.keys["owner"], self.config)
        self.client = PaymentClient(self.chain, self.contract)
        self.store = BlockStore()
        if escrow:
            self.fund(escrow)

    def fund(self, amount, who="owner"):
        tx = self.client.fund(self.keys[who], amount)
        self.chain.mine_block()
        return tx

    def sov(self, values):
        sov = ScheduleOfValues()
        for payee, value in values.items():
            sov.add(self.codes[payee], value, self.addr[payee])
        return sov

    def bundle_json(self, tag="x"):
        from lienpay.progress import CidBundle
        put = self.store.put
        return CidBundle(put(f"elements {tag}".encode()), put(b"sov"), put(f"raw {tag}".encode()),
                         put(b"tool")).to_json()

    def instruction(self, payee, amount, tag="x", scope=None):
        return {"payee": self.addr[payee], "amount": amount, "scope": scope or [self.codes[payee]],
                "bundle": self.bundle_json(tag)}


@pytest.fixture
def world():
    return World()


@pytest.fixture
def make_world():
    return World


_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    prev = _acceptance.get(number, (title, True))
    _acceptance[number] = (title, prev[1] and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:>2}  {'PASS' if ok else 'FAIL'}  {title}")
