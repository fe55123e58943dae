import pytest

from lienpay.cas import Cid
from lienpay.errors import NotOwner, Unauthorized, UnauthorizedMinter, UnknownToken
from lienpay.ledger import StorageView, _Overlay
from lienpay.token import HELD, REDEEMED, LienRegistry

MINTER = "0x" + "cc" * 20
OWNER = "0x" + "0a" * 20
SUB = "0x" + "5b" * 20
OTHER = "0x" + "77" * 20
URI = Cid.of(b"elements")


@pytest.fixture
def reg():
    return LienRegistry(StorageView(_Overlay({}), MINTER), MINTER)


def test_first_mint_is_one(reg):
    assert reg.mint(MINTER, SUB, URI, 400, ["PART"], 1) == 1
    info = reg.token_info(1)
    assert (info.owner, info.uri, info.value, info.status) == (SUB, URI, 400, HELD)
    assert info.history == ((None, SUB),)
    assert reg.token_uri(1) == URI and reg.owner_of(1) == SUB


def test_distinct_tokens_per_settlement(reg):
    a = reg.mint(MINTER, MINTER, URI, 1, ["A"], 1)
    b = reg.mint(MINTER, MINTER, URI, 2, ["B"], 1)
    assert a != b and reg.count == 2
    assert reg.token_info(a).scope != reg.token_info(b).scope


def test_only_minter_mints(reg):
    with pytest.raises(UnauthorizedMinter):
        reg.mint(SUB, SUB, URI, 1, [], 1)
    assert reg.count == 0


def test_transfer_rules(reg):
    t = reg.mint(MINTER, SUB, URI, 400, [], 1)
    with pytest.raises(NotOwner):
        reg.transfer(t, OTHER, OWNER, OTHER)
    with pytest.raises(Unauthorized):
        reg.transfer(t, SUB, OWNER, OTHER)
    reg.transfer(t, SUB, MINTER, SUB)
    assert reg.owner_of(t) == MINTER
    reg.transfer(t, MINTER, OWNER, MINTER)
    assert reg.token_info(t).history == ((None, SUB), (SUB, MINTER), (MINTER, OWNER))


def test_redeemed_status(reg):
    t = reg.mint(MINTER, SUB, URI, 400, [], 1)
    with pytest.raises(Unauthorized):
        reg.mark_redeemed(SUB, t)
    reg.mark_redeemed(MINTER, t)
    assert reg.token_info(t).status == REDEEMED
    assert reg.token_info(t).to_json()["status"] == "Redeemed"


@pytest.mark.parametrize("tid", [0, 5, "1", None])
def test_unknown_token(reg, tid):
    reg.mint(MINTER, SUB, URI, 1, [], 1)
    with pytest.raises(UnknownToken):
        reg.token_info(tid)
