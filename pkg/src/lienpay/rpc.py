"""JSON-RPC 2.0 style interface over the chain, payment contract and block store.

``RpcServer.dispatch`` maps request bytes to response bytes and is shared by
both transports: newline-delimited TCP (:func:`serve_socket`) and one request
per HTTP POST body (:func:`serve_http`). Responses are serialized with sorted
keys and no whitespace so identical requests against identical state give
identical bytes.
"""

import base64
import binascii
import json
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .cas import Cid
from .encoding import canonical_json
from .errors import LienpayError
from .ledger import is_address
from .paycontract import PaymentClient

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
APPLICATION_ERROR = -32000


class InvalidParams(Exception):
    pass


def _param(params, name, kind=None, required=True):
    if name not in params:
        if required:
            raise InvalidParams(f"missing parameter {name!r}")
        return None
    value = params[name]
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise InvalidParams(f"{name} must be an integer")
    if kind is str and not isinstance(value, str):
        raise InvalidParams(f"{name} must be a string")
    if kind == "address" and not is_address(value):
        raise InvalidParams(f"{name} must be a lowercase 0x address")
    return value


class RpcServer:
    """Method table bound to one chain (and optionally a contract and a store).

    ``keyring`` maps addresses to the keys this node signs with; mutating pay.*
    calls name their sender in ``params.from``.
    """

    def __init__(self, chain, contract=None, store=None, keyring=None, allow_mine=False):
        self.chain = chain
        self.client = PaymentClient(chain, contract) if contract else None
        self.store = store
        self.keyring = dict(keyring or {})
        self.allow_mine = allow_mine
        self._lock = threading.Lock()
        self.methods = {
            "pay.receiveUpdate": self._receive_update,
            "pay.redeemToken": self._redeem_token,
            "pay.audit": self._audit,
            "chain.getBalance": self._get_balance,
            "chain.getTransaction": self._get_transaction,
            "chain.confirmations": self._confirmations,
            "token.ownerOf": self._owner_of,
            "token.tokenURI": self._token_uri,
            "token.info": self._token_info,
            "cas.add": self._cas_add,
            "cas.get": self._cas_get,
        }
        if allow_mine:
            self.methods["chain.mine"] = self._mine

    # -- envelope ---------------------------------------------------------------

    def dispatch(self, body) -> bytes:
        if isinstance(body, (bytes, bytearray)):
            try:
                body = body.decode("utf-8")
            except UnicodeDecodeError:
                return self._encode(self._error(None, PARSE_ERROR, "Parse error"))
        try:
            request = json.loads(body)
        except ValueError:
            return self._encode(self._error(None, PARSE_ERROR, "Parse error"))
        with self._lock:
            return self._encode(self.handle(request))

    def handle(self, request) -> dict:
        if not isinstance(request, dict):
            return self._error(None, INVALID_REQUEST, "Invalid request")
        rid = request.get("id")
        if (request.get("jsonrpc") != "2.0" or not isinstance(request.get("method"), str)
                or isinstance(rid, bool) or not isinstance(rid, (int, str, type(None)))):
            return self._error(rid if isinstance(rid, (int, str)) else None,
                               INVALID_REQUEST, "Invalid request")
        fn = self.methods.get(request["method"])
        if fn is None:
            return self._error(rid, METHOD_NOT_FOUND, "Method not found", request["method"])
        params = request.get("params", {})
        if not isinstance(params, dict):
            return self._error(rid, INVALID_PARAMS, "Invalid params", "params must be an object")
        try:
            result = fn(params)
        except InvalidParams as exc:
            return self._error(rid, INVALID_PARAMS, "Invalid params", str(exc))
        except LienpayError as exc:
            return self._error(rid, APPLICATION_ERROR, exc.name, str(exc))
        return {"jsonrpc": "2.0", "id": rid, "result": result}

    @staticmethod
    def _error(rid, code, message, data=None):
        err = {"code": code, "message": message}
        if data is not None:
            err["data"] = data
        return {"jsonrpc": "2.0", "id": rid, "error": err}

    @staticmethod
    def _encode(response) -> bytes:
        return canonical_json(response)

    # -- helpers -----------------------------------------------------------------

    def _key(self, params):
        sender = _param(params, "from", "address")
        key = self.keyring.get(sender)
        if key is None:
            raise InvalidParams(f"this node holds no key for {sender}")
        return key

    def _contract(self):
        if self.client is None:
            raise InvalidParams("no payment contract configured on this node")
        return self.client

    def _cas(self):
        if self.store is None:
            raise InvalidParams("no block store configured on this node")
        return self.store

    @staticmethod
    def _cid(params):
        try:
            return Cid.parse(_param(params, "cid", str))
        except ValueError as exc:
            raise InvalidParams(str(exc)) from None

    # -- methods -----------------------------------------------------------------

    def _receive_update(self, params):
        client = self._contract()
        payload = _param(params, "payload")
        if not isinstance(payload, dict):
            raise InvalidParams("payload must be an object")
        return {"txId": client.receive_update(self._key(params), payload)}

    def _redeem_token(self, params):
        client = self._contract()
        token_id = _param(params, "tokenId", int)
        return {"txId": client.redeem_token(self._key(params), token_id)}

    def _audit(self, params):
        client = self._contract()
        keys = [k for k in ("txId", "tokenId", "payee", "cid", "cycle") if k in params]
        if len(keys) != 1:
            raise InvalidParams("give exactly one of txId, tokenId, payee, cid, cycle")
        name = keys[0]
        if name in ("tokenId", "cycle"):
            value = _param(params, name, int)
            key = value if name == "tokenId" else ("cycle", value)
        else:
            key = _param(params, name, str)
        return {"entries": client.audit(key)}

    def _get_balance(self, params):
        return {"balance": self.chain.balance(_param(params, "address", "address"))}

    def _get_transaction(self, params):
        tx, receipt = self.chain.get_transaction(_param(params, "txId", str))
        return {"transaction": tx.to_json(), "receipt": receipt.to_json()}

    def _confirmations(self, params):
        tx_id = _param(params, "txId", str)
        return {"confirmations": self.chain.confirmations(tx_id), "final": self.chain.is_final(tx_id)}

    def _mine(self, params):
        n = _param(params, "blocks", int, required=False)
        n = 1 if n is None else n
        if n < 1 or n > 10_000:
            raise InvalidParams("blocks must be in [1, 10000]")
        return {"headers": [h.to_json() for h in self.chain.mine(n)]}

    def _owner_of(self, params):
        return {"owner": self._contract().tokens.owner_of(_param(params, "tokenId", int))}

    def _token_uri(self, params):
        return {"uri": self._contract().tokens.token_uri(_param(params, "tokenId", int)).text}

    def _token_info(self, params):
        return self._contract().tokens.token_info(_param(params, "tokenId", int)).to_json()

    def _cas_add(self, params):
        try:
            data = base64.b64decode(_param(params, "data", str), validate=True)
        except binascii.Error as exc:
            raise InvalidParams(f"data is not base64: {exc}") from None
        return {"cid": self._cas().put(data).text}

    def _cas_get(self, params):
        data = self._cas().get(self._cid(params))
        return {"data": base64.b64encode(data).decode("ascii")}


def request(method, params=None, rid=1) -> bytes:
    """Build a request body."""
    return canonical_json({"jsonrpc": "2.0", "id": rid, "method": method, "params": params or {}})


# -- transports ------------------------------------------------------------------

def serve_socket(server: RpcServer, host="127.0.0.1", port=0):
    """Newline-delimited requests over TCP. Returns the (unstarted) socketserver."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for line in self.rfile:
                if not line.strip():
                    continue
                self.wfile.write(server.dispatch(line.rstrip(b"\r\n")) + b"\n")
                self.wfile.flush()

    srv = socketserver.ThreadingTCPServer((host, port), Handler)
    srv.daemon_threads = True
    return srv


def serve_http(server: RpcServer, host="127.0.0.1", port=0):
    """One request per POST body. Returns the (unstarted) HTTP server."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            out = server.dispatch(body)
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    srv = ThreadingHTTPServer((host, port), Handler)
    srv.daemon_threads = True
    return srv
