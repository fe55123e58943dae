# %% [markdown]
# From a progress capture to payment instructions. Cumulative paid value per
# scope is the reference point, so an over-reported cycle is absorbed by the
# next one instead of being clawed back.

# %%
from lienpay.progress import PaidLedger, ScheduleOfValues, ingest_capture, value_due

ELEC = "0x" + "e1" * 20
sov = ScheduleOfValues().add("26-0000-ELEC", 1_000, ELEC)
paid = PaidLedger()

for cycle, pct in enumerate([80, 60, 90, 100], 1):
    capture = ingest_capture(f"project: demo\ncycle: {cycle}\ngranularity: aggregate\n"
                             f"scopes:\n  - [26-0000-ELEC, {pct}]\n")
    due = value_due(capture, sov, paid)
    amount = sum(i.amount for i in due)
    for ins in due:
        paid.advance(ins, cycle)     # in the full flow this waits for finality
    print(f"cycle {cycle}: reported {pct:>3}%  due {amount:>4}  cumulative {paid.paid('26-0000-ELEC')}")

# %% Element-level captures value each GUID separately and group by payee.
capture = ingest_capture("""
project: demo
cycle: 1
granularity: element
elements:
  - [wall-1, 09-PART, 12, m2, 40, 100]
  - [wall-2, 09-PART, 8, m2, 40, 50]
""")
sov = ScheduleOfValues().add("09-PART", 800, "0x" + "0f" * 20)
for ins in value_due(capture, sov, PaidLedger()):
    print(ins.payee, ins.amount, ins.dues)
