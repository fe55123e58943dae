import base64
import json
import socket
import threading
import urllib.request

import pytest

from lienpay.rpc import RpcServer, request, serve_http, serve_socket
from tests.conftest import World


@pytest.fixture
def node():
    w = World(escrow=10_000)
    w.rpc = RpcServer(w.chain, w.contract, w.store, {w.addr[n]: k for n, k in w.keys.items()})
    return w


def call(node, method, params=None, rid=1):
    return json.loads(node.rpc.dispatch(request(method, params, rid)))


def update(node, cycle=1, amount=400):
    return {"from": node.addr["gc"],
            "payload": {"cycle": cycle, "instructions": [node.instruction("alpha", amount)]}}


def test_receive_update_happy_path(node):
    out = call(node, "pay.receiveUpdate", update(node))
    tx = out["result"]["txId"]
    node.chain.mine_block()
    assert node.chain.receipt(tx).ok
    conf = call(node, "chain.confirmations", {"txId": tx})["result"]
    assert conf == {"confirmations": 1, "final": False}
    got = call(node, "chain.getTransaction", {"txId": tx})["result"]
    assert got["transaction"]["from"] == node.addr["gc"] and got["receipt"]["status"] == "ok"
    assert call(node, "chain.getBalance", {"address": node.addr["alpha"]})["result"]["balance"] == 1_400
    assert call(node, "token.ownerOf", {"tokenId": 1})["result"]["owner"] == node.addr["owner"]
    uri = call(node, "token.tokenURI", {"tokenId": 1})["result"]["uri"]
    assert call(node, "token.info", {"tokenId": 1})["result"]["uri"] == uri
    entries = call(node, "pay.audit", {"txId": tx})["result"]["entries"]
    assert entries[0]["amount"] == 400


def test_duplicate_over_the_wire(node):
    params = update(node)
    call(node, "pay.receiveUpdate", params)
    node.chain.mine_block()
    err = call(node, "pay.receiveUpdate", params)["error"]
    assert err["code"] == -32000 and err["message"] == "DuplicateUpdate"


def test_envelope_errors(node):
    assert call(node, "nosuch.method")["error"]["code"] == -32601
    assert json.loads(node.rpc.dispatch(b"{not json"))["error"]["code"] == -32700
    assert json.loads(node.rpc.dispatch(b"\xff"))["error"]["code"] == -32700
    assert json.loads(node.rpc.dispatch(b"[1]"))["error"]["code"] == -32600
    assert json.loads(node.rpc.dispatch(b'{"method":"chain.getBalance"}'))["error"]["code"] == -32600
    bad = [
        ("chain.getBalance", {}),
        ("chain.getBalance", {"address": "0xABC"}),
        ("token.ownerOf", {"tokenId": "1"}),
        ("pay.audit", {"txId": "a", "tokenId": 1}),
        ("pay.receiveUpdate", {"from": node.addr["gc"], "payload": [1]}),
        ("pay.receiveUpdate", {"from": "0x" + "12" * 20, "payload": {}}),
        ("cas.add", {"data": "***"}),
        ("cas.get", {"cid": "Qm0"}),
    ]
    for method, params in bad:
        assert call(node, method, params)["error"]["code"] == -32602, method
    assert json.loads(node.rpc.dispatch(b'{"jsonrpc":"2.0","id":1,"method":"cas.add","params":[1]}')
                      )["error"]["code"] == -32602


def test_application_errors_carry_class_name(node):
    assert call(node, "token.ownerOf", {"tokenId": 5})["error"]["message"] == "UnknownToken"
    assert call(node, "chain.confirmations", {"txId": "00"})["error"]["message"] == "UnknownTransaction"
    assert call(node, "pay.audit", {"cycle": 4})["error"]["message"] == "UnknownKey"
    out = call(node, "pay.receiveUpdate", dict(update(node), **{"from": node.addr["alpha"]}))
    assert out["error"]["message"] == "UnauthorizedPublisher"


def test_mine_is_gated(node):
    assert call(node, "chain.mine", {"blocks": 2})["error"]["code"] == -32601
    node.rpc = RpcServer(node.chain, node.contract, node.store, node.rpc.keyring, allow_mine=True)
    h = node.chain.height
    assert len(call(node, "chain.mine", {"blocks": 2})["result"]["headers"]) == 2
    assert node.chain.height == h + 2
    assert call(node, "chain.mine", {"blocks": 0})["error"]["code"] == -32602


def test_cas_round_trip(node):
    data = bytes(range(256)) * 10
    cid = call(node, "cas.add", {"data": base64.b64encode(data).decode()})["result"]["cid"]
    back = call(node, "cas.get", {"cid": cid})["result"]["data"]
    assert base64.b64decode(back) == data
    missing = call(node, "cas.get", {"cid": "QmVkqaunyKCw4NKmWXbsGhkr5CotM8vCBKWyxsh8FGZyfr"})
    assert missing["error"]["message"] == "NotFound"


def test_redeem_over_rpc(make_world):
    w = make_world(escrow=100)
    w.rpc = RpcServer(w.chain, w.contract, w.store, {w.addr[n]: k for n, k in w.keys.items()})
    call(w, "pay.receiveUpdate", update(w))
    w.chain.mine_block()
    err = call(w, "pay.redeemToken", {"from": w.addr["alpha"], "tokenId": 1})["error"]
    assert err["message"] == "InsufficientEscrow"
    w.fund(300)
    assert "txId" in call(w, "pay.redeemToken", {"from": w.addr["alpha"], "tokenId": 1})["result"]


def test_responses_are_byte_identical():
    outs = []
    for _ in range(2):
        w = World(escrow=10_000)
        rpc = RpcServer(w.chain, w.contract, w.store, {w.addr[n]: k for n, k in w.keys.items()})
        body = request("pay.receiveUpdate", update(w), rid="x")
        outs.append(rpc.dispatch(body))
        w.chain.mine_block()
        outs.append(rpc.dispatch(request("pay.audit", {"cycle": 1})))
    assert outs[0] == outs[2] and outs[1] == outs[3]


def _start(srv):
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    return srv.server_address


def test_http_transport(node):
    srv = serve_http(node.rpc)
    host, port = _start(srv)
    try:
        body = request("chain.getBalance", {"address": node.addr["owner"]})
        with urllib.request.urlopen(urllib.request.Request(f"http://{host}:{port}/", data=body)) as r:
            assert r.read() == node.rpc.dispatch(body)
    finally:
        srv.shutdown()
        srv.server_close()


def test_socket_transport(node):
    srv = serve_socket(node.rpc)
    host, port = _start(srv)
    try:
        with socket.create_connection((host, port)) as s:
            f = s.makefile("rwb")
            for method in ("chain.getBalance", "nosuch"):
                body = request(method, {"address": node.addr["owner"]})
                f.write(body + b"\n")
                f.flush()
                assert f.readline().rstrip(b"\n") == node.rpc.dispatch(body)
    finally:
        srv.shutdown()
        srv.server_close()
