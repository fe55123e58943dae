"""LIEN non-fungible token registry with a minimal ERC-721 surface.

The registry keeps its state in a contract storage view, so every change
follows the enclosing transaction's commit or rollback. Only the configured
minter (the payment contract) can mint or mark tokens redeemed. Tokens are
never burned.
"""

from dataclasses import dataclass

from .cas import Cid
from .errors import NotOwner, Unauthorized, UnauthorizedMinter, UnknownToken

HELD = "Held"
REDEEMED = "Redeemed"


@dataclass(frozen=True)
class LienToken:
    token_id: int
    owner: str
    uri: Cid
    value: int
    scope: tuple
    cycle_id: int
    status: str
    history: tuple   # ((from or None, to), ...), mint first

    def to_json(self):
        return {
            "tokenId": self.token_id,
            "owner": self.owner,
            "uri": self.uri.text,
            "value": self.value,
            "scope": list(self.scope),
            "cycle": self.cycle_id,
            "status": self.status,
            "history": [list(h) for h in self.history],
        }


class LienRegistry:
    def __init__(self, storage, minter):
        self._s = storage.child("lien:")
        self.minter = minter

    def _load(self, token_id):
        rec = self._s.get_json(f"token:{token_id}") if isinstance(token_id, int) else None
        if rec is None:
            raise UnknownToken(f"token {token_id}")
        return rec

    def _save(self, rec):
        self._s.set_json(f"token:{rec['id']}", rec)

    @property
    def count(self) -> int:
        return self._s.get_json("count", 0)

    def mint(self, caller, to, uri: Cid, value: int, scope, cycle: int) -> int:
        if caller != self.minter:
            raise UnauthorizedMinter(f"{caller} may not mint")
        token_id = self.count + 1
        self._s.set_json("count", token_id)
        self._save({
            "id": token_id,
            "owner": to,
            "uri": uri.text,
            "value": value,
            "scope": list(scope),
            "cycle": cycle,
            "status": HELD,
            "history": [[None, to]],
        })
        return token_id

    def transfer(self, token_id, from_, to, authority):
        rec = self._load(token_id)
        if from_ != rec["owner"]:
            raise NotOwner(f"{from_} does not own token {token_id}")
        if authority not in (rec["owner"], self.minter):
            raise Unauthorized(f"{authority} may not move token {token_id}")
        rec["owner"] = to
        rec["history"].append([from_, to])
        self._save(rec)

    def mark_redeemed(self, caller, token_id):
        if caller != self.minter:
            raise Unauthorized(f"{caller} may not redeem tokens")
        rec = self._load(token_id)
        rec["status"] = REDEEMED
        self._save(rec)

    def token_info(self, token_id) -> LienToken:
        rec = self._load(token_id)
        return LienToken(
            token_id=rec["id"],
            owner=rec["owner"],
            uri=Cid.parse(rec["uri"]),
            value=rec["value"],
            scope=tuple(rec["scope"]),
            cycle_id=rec["cycle"],
            status=rec["status"],
            history=tuple(tuple(h) for h in rec["history"]),
        )

    def owner_of(self, token_id) -> str:
        return self._load(token_id)["owner"]

    def token_uri(self, token_id) -> Cid:
        return Cid.parse(self._load(token_id)["uri"])
