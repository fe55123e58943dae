# %% [markdown]
# Every run can be journaled. Replaying the journal rebuilds the same chain,
# block for block, and therefore the same report.

# %%
import tempfile
from pathlib import Path

from lienpay.harness import CONTRACT_TYPES, bundled_scenario, cycle_report, run_scenario
from lienpay.ledger import Chain

journal = Path(tempfile.mkdtemp()) / "project_a.jsonl"
project = run_scenario(bundled_scenario("project_a"), journal=str(journal))
project.chain.close()
report = cycle_report(project.chain, project.contract)
print(report)

again = Chain.replay(str(journal), CONTRACT_TYPES)
print("same head hash:", again.head.hash == project.chain.head.hash)
print("same report bytes:", cycle_report(again, project.contract) == report)
