# %% [markdown]
# Escrowed settlement. Funded instructions are paid and their LIEN token goes
# to the owner as a receipt; a shortfall sends the token to the contractor,
# who redeems it once the escrow is topped up.

# %%
from lienpay.cas import BlockStore
from lienpay.ledger import Chain, key_from_seed
from lienpay.paycontract import PaymentClient, deploy
from lienpay.progress import CidBundle

keys = {n: key_from_seed(f"demo:{n}") for n in ("owner", "gc", "framer", "painter")}
chain = Chain([(k, 10_000 if n == "owner" else 0) for n, k in keys.items()])
addr = {n: chain.address_of(k) for n, k in keys.items()}
contract = deploy(chain, keys["owner"], {
    "owner": addr["owner"], "publishers": [addr["gc"]], "stakeholders": [addr["gc"]],
    "payees": {"FRAMING": addr["framer"], "PAINT": addr["painter"]},
})
client = PaymentClient(chain, contract)
client.fund(keys["owner"], 1_000)
chain.mine_block()

store = BlockStore()
bundle = CidBundle(store.put(b"elements"), store.put(b"sov"), store.put(b"scan"), store.put(b"tool")).to_json()
tx = client.receive_update(keys["gc"], {"cycle": 1, "instructions": [
    {"payee": addr["framer"], "amount": 600, "scope": ["FRAMING"], "bundle": bundle},
    {"payee": addr["painter"], "amount": 500, "scope": ["PAINT"], "bundle": bundle},
]})
chain.mine_block()
for s in client.processed(tx).settlements:
    owner = client.tokens.owner_of(s.token_id)
    who = [n for n, a in addr.items() if a == owner][0]
    print(f"token {s.token_id}: {s.amount} wei funded={s.funded} held by {who}")

# %% Top up, then the painter redeems the lien.
client.fund(keys["owner"], 500)
chain.mine_block()
client.redeem_token(keys["painter"], 2)
chain.mine_block()
print("painter balance", chain.balance(addr["painter"]))
print("token 2", client.tokens.token_info(2).status, "owner is project owner:",
      client.tokens.owner_of(2) == addr["owner"])
print("escrow balanced:", client.escrow_balanced())
