"""Regenerate the bundled scenario fixtures.

Expected per-payee amounts are computed here with plain Fraction arithmetic,
independently of lienpay.progress. Run from the repo root:

    python tests/oracles/make_scenarios.py
"""
import random
import uuid
from fractions import Fraction
from math import floor
from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parents[2] / "src" / "lienpay" / "scenarios"


def earned(value, pct):
    return floor(Fraction(value) * Fraction(str(pct)) / 100)


def dump(name, doc, header):
    text = header + yaml.safe_dump(doc, sort_keys=False, width=120)
    (OUT / name).write_text(text)


def project_a():
    rng = random.Random(2020)
    trades = [
        ("09-2216-FRAMING", "framer", 40_000),
        ("09-2900-BOARD", "boarder", 35_000),
        ("09-2300-PLASTER", "plasterer", 30_000),
        ("09-9123-PAINT", "painter", 20_000),
    ]
    walls = []
    for w in range(26):
        walls.append((w, rng.randint(12, 48)))
    c1, c2 = [], []
    paid = {t[1]: [0, 0] for t in trades}
    for w, area in walls:
        for i, (code, payee, unit_value) in enumerate(trades):
            guid = str(uuid.uuid5(uuid.NAMESPACE_URL, f"project-a/wall-{w}/{code}"))
            # earlier trades are further along
            p1 = min(100, max(0, rng.choice([100, 100, 75, 50, 25, 0]) - 25 * i + 25))
            if w == i:
                p1 = max(p1, 25)   # every trade earns something in cycle 1
            p2 = min(100, p1 + rng.choice([0, 25, 50, 75, 100]))
            if w == 10 + i:
                p2 = max(p2, p1 + 25) if p1 <= 75 else p2
            v = unit_value * area
            paid[payee][0] += earned(v, p1)
            paid[payee][1] += earned(v, p2) - earned(v, p1)
            c1.append([guid, code, area, "m2", unit_value, p1])
            c2.append([guid, code, area, "m2", unit_value, p2])
    sov = [[code, sum(unit_value * a for _, a in walls), payee] for code, payee, unit_value in trades]
    accounts = {"owner": 1_000_000_000, "gc": 0, **{t[1]: 0 for t in trades}}
    for payee, (a, b) in paid.items():
        assert a > 0 and b > 0, (payee, a, b)
    escrow = sum(r[1] for r in sov)
    doc = {
        "project": "A",
        "accounts": accounts,
        "owner": "owner",
        "publishers": ["gc"],
        "stakeholders": ["owner", "gc"],
        "escrow": {"from": "owner", "amount": escrow},
        "schedule_of_values": sov,
        "cycles": [],
        "expect": {"cycles": 2, "transactions": 10, "all_funded": True},
    }
    for n, rows in ((1, c1), (2, c2)):
        doc["cycles"].append({
            "capture": {
                "cycle": n,
                "granularity": "element",
                "elements": rows,
                "artifacts": {
                    "raw_progress": f"UAV image set, floor 1, bi-weekly visit {n}",
                    "as_built_bim": f"IFC as-built model, cycle {n}",
                    "analysis_tool": "image-based partition progress classifier",
                },
            },
            "expect": {
                "transactions": 5,
                "payments": {p: v[n - 1] for p, v in paid.items()},
                "tokens": {p: "owner" for p in paid},
            },
        })
    dump("project_a.scenario", doc,
         "# Project A: 1 floor of partitions, 4 subcontractors, 2 bi-weekly cycles,\n"
         "# element-level (GUID) progress. 104 element records per capture.\n"
         "# Monetary values are synthetic.\n")


def project_b():
    trades = [
        ("23-0000-HVAC", "hvac", 2_400_000, [10, 30, 55, 80, 100]),
        ("22-0000-PLUMBING", "plumber", 1_500_000, [15, 35, 60, 85, 100]),
        ("09-2216-PARTITIONS", "partitions", 900_000, [20, 40, 65, 90, 100]),
    ]
    accounts = {"owner": 1_000_000_000, "gc": 0, **{t[1]: 0 for t in trades}}
    doc = {
        "project": "B",
        "accounts": accounts,
        "owner": "owner",
        "publishers": ["gc"],
        "stakeholders": ["owner", "gc"],
        "escrow": {"from": "owner", "amount": sum(t[2] for t in trades)},
        "schedule_of_values": [[c, v, p] for c, p, v, _ in trades],
        "cycles": [],
        "expect": {"cycles": 5, "transactions": 20, "all_funded": True},
    }
    for n in range(1, 6):
        payments = {}
        for code, payee, value, path in trades:
            prev = earned(value, path[n - 2]) if n > 1 else 0
            payments[payee] = earned(value, path[n - 1]) - prev
        doc["cycles"].append({
            "capture": {
                "cycle": n,
                "granularity": "aggregate",
                "scopes": [[c, path[n - 1]] for c, _, _, path in trades],
                "artifacts": {
                    "raw_progress": f"UGV laser scan, floors 1-4, month {n}",
                    "analysis_tool": "outside vendor point-cloud progress report",
                },
            },
            "expect": {"transactions": 4, "payments": payments,
                       "tokens": {p: "owner" for p in payments}},
        })
    dump("project_b.scenario", doc,
         "# Project B: 4 floors, HVAC / plumbing / partitions, 3 subcontractors,\n"
         "# 5 monthly cycles, aggregate progress, no as-built model.\n"
         "# Monetary values are synthetic.\n")


def small(project, escrow, cycles, expect=None, payees=("alpha", "beta")):
    accounts = {"owner": 10_000_000, "gc": 0, **{p: 0 for p in payees}}
    return {
        "project": project,
        "accounts": accounts,
        "owner": "owner",
        "publishers": ["gc"],
        "stakeholders": ["owner", "gc"],
        "escrow": {"from": "owner", "amount": escrow},
        "schedule_of_values": [["ALPHA", 1_200, payees[0]], ["BETA", 1_000, payees[1]]],
        "cycles": cycles,
        "expect": expect or {},
    }


def agg(n, a, b):
    return {"cycle": n, "granularity": "aggregate", "scopes": [["ALPHA", a], ["BETA", b]]}


def negatives():
    dump("unauthorized_publisher.scenario", small("N1", 10_000, [
        {"capture": agg(1, 50, 50), "publisher": "alpha",
         "expect": {"error": "UnauthorizedPublisher", "transactions": 0}},
        {"capture": agg(2, 50, 50), "expect": {"transactions": 3, "payments": {"alpha": 600, "beta": 500}}},
    ], {"transactions": 3}), "# A subcontractor tries to publish progress; rejected, then the GC publishes.\n")
    dump("duplicate_update.scenario", small("N2", 10_000, [
        {"capture": agg(1, 50, 50), "expect": {"transactions": 3, "payments": {"alpha": 600, "beta": 500}}},
        {"replay_previous": True, "expect": {"error": "DuplicateUpdate", "transactions": 0}},
        {"capture": agg(3, 100, 50), "expect": {"transactions": 2, "payments": {"alpha": 600}}},
    ], {"transactions": 5}), "# The cycle-1 payload is rebroadcast verbatim; no double payment.\n")
    dump("escrow_shortfall.scenario", small("N3", 1_000, [
        {"capture": agg(1, 50, 100),
         "expect": {"transactions": 2, "payments": {"alpha": 600, "beta": 0},
                    "tokens": {"alpha": "owner", "beta": "contractor"}}},
        {"capture": agg(2, 50, 100), "redeem": [{"payee": "beta", "cycle": 1}],
         "expect": {"redemptions": {"beta": "InsufficientEscrow"}}},
        {"capture": agg(3, 100, 100), "fund": 1_200, "redeem": [{"payee": "beta", "cycle": 1}],
         "expect": {"redemptions": {"beta": 1_000}, "transactions": 2, "payments": {"alpha": 600},
                    "tokens": {"alpha": "owner"}}},
    ], {"transactions": 4}), "# Escrow covers only the first instruction; the second is tokenized to the\n"
                             "# contractor, a redemption fails, then succeeds after top-up.\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    project_a()
    project_b()
    negatives()
    print("wrote", sorted(p.name for p in OUT.glob("*.scenario")))
