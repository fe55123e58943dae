# %% [markdown]
# The JSON-RPC surface, used here in-process. `lienpay serve` exposes the same
# dispatcher over HTTP or a line-framed socket.

# %%
import json

from lienpay.harness import Project, bundled_scenario, load_scenario
from lienpay.rpc import request

project = Project(load_scenario(bundled_scenario("project_b")))
project.setup()
rpc = project.rpc

print(rpc.dispatch(request("chain.getBalance", {"address": project.contract})).decode())
print(rpc.dispatch(request("nosuch.method")).decode())
print(rpc.dispatch(b"{broken").decode())

# %% Run one cycle, then look the settlement up by payee.
project.run_cycle(project.scenario.cycles[0])
resp = json.loads(rpc.dispatch(request("pay.audit", {"payee": project.addr["hvac"]})))
entry = resp["result"]["entries"][0]
print("hvac cycle 1:", entry["amount"], "wei, token", entry["tokenId"], "uri", entry["token"]["uri"])
