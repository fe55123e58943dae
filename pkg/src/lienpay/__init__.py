"""Progress-payment automation on a simulated escrow chain.

Reality-capture progress is valued off-chain against a schedule of values
(:mod:`lienpay.progress`), its artifacts are content-addressed
(:mod:`lienpay.cas`), and a native escrow contract (:mod:`lienpay.paycontract`)
running on a deterministic chain (:mod:`lienpay.ledger`) settles payments and
routes LIEN tokens (:mod:`lienpay.token`).
"""

from .cas import BlockStore, Cid, DiskBlockStore
from .errors import LienpayError
from .ledger import Chain, key_from_seed
from .paycontract import PaymentClient, PaymentContract, deploy, make_payload
from .progress import (
    CidBundle,
    PaidLedger,
    ScheduleOfValues,
    ingest_capture,
    parse_schedule_of_values,
    publish_bundle,
    value_due,
)
from .token import LienRegistry

__version__ = "0.1.0"

__all__ = [
    "BlockStore",
    "Chain",
    "Cid",
    "CidBundle",
    "DiskBlockStore",
    "LienRegistry",
    "LienpayError",
    "PaidLedger",
    "PaymentClient",
    "PaymentContract",
    "ScheduleOfValues",
    "deploy",
    "ingest_capture",
    "key_from_seed",
    "make_payload",
    "parse_schedule_of_values",
    "publish_bundle",
    "value_due",
]
