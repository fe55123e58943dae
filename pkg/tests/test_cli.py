import json

import pytest
import yaml

from lienpay.cas import Cid
from lienpay.cli import main
from lienpay.errors import ExpectationMismatch, ScenarioParseError
from lienpay.harness import bundled_scenario, classify_transactions, load_scenario, run_scenario


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name,total", [("project_a", 10), ("project_b", 20)])
def test_bundled_projects(capsys, name, total):
    code, out, _ = run(capsys, "run", name, "--format", "json")
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["transactions"]["payment_processing"] == total
    assert summary["funded"] == summary["settlements"] and summary["escrowBalanced"]


@pytest.mark.parametrize("name", ["unauthorized_publisher", "duplicate_update", "escrow_shortfall"])
def test_negative_scenarios_meet_expectations(capsys, name):
    assert run(capsys, "run", name)[0] == 0


def test_one_wei_off_is_a_mismatch(capsys, tmp_path):
    doc = yaml.safe_load(open(bundled_scenario("project_b")))
    doc["cycles"][0]["expect"]["payments"]["hvac"] += 1
    path = tmp_path / "off.scenario"
    path.write_text(yaml.safe_dump(doc))
    code, _, err = run(capsys, "run", str(path))
    assert code == 2
    assert "cycle 1: payee hvac expected 240001, actual 240000" in err
    with pytest.raises(ExpectationMismatch) as exc:
        run_scenario(str(path)).assert_expectations()
    assert exc.value.diffs == ["cycle 1: payee hvac expected 240001, actual 240000"]


def test_bad_inputs_exit_3(capsys, tmp_path):
    assert run(capsys, "run", "no_such_scenario")[0] == 3
    bad = tmp_path / "bad.scenario"
    bad.write_text("accounts: [1]\n")
    code, _, err = run(capsys, "run", str(bad))
    assert code == 3 and "ScenarioParseError" in err
    assert run(capsys, "report", "--journal", str(tmp_path / "none.jsonl"))[0] == 3
    with pytest.raises(ScenarioParseError):
        load_scenario("accounts: {a: 1}\nowner: b\npublishers: []\nschedule_of_values: []\ncycles: []\n")


def test_journal_report_round_trip(capsys, tmp_path):
    journal = str(tmp_path / "a.jsonl")
    code, live, _ = run(capsys, "run", "project_a", "--journal", journal)
    assert code == 0
    code, replayed, _ = run(capsys, "report", "--journal", journal)
    assert code == 0 and replayed == live
    assert run(capsys, "report", "--journal", journal)[1] == live


def test_report_by_key(capsys, tmp_path):
    journal = str(tmp_path / "b.jsonl")
    project = run_scenario(bundled_scenario("project_b"), journal=journal)
    project.chain.close()
    hvac = project.addr["hvac"]
    code, out, _ = run(capsys, "report", hvac, "--journal", journal, "--format", "json")
    entries = json.loads(out)
    assert code == 0 and [e["cycle"] for e in entries] == [1, 2, 3, 4, 5]
    assert all(e["settlementTx"] and e["tokenId"] for e in entries)
    code, out, _ = run(capsys, "report", "token:2", "--journal", journal)
    assert code == 0 and "token uri" in out and "ownership" in out
    raw = entries[2]["bundle"]["raw_progress"]
    code, out, _ = run(capsys, "report", raw, "--journal", journal, "--format", "json")
    assert {e["cycle"] for e in json.loads(out)} == {3}
    assert run(capsys, "report", "cycle:9", "--journal", journal)[0] == 3


def test_init_then_mine(capsys, tmp_path):
    journal = str(tmp_path / "c.jsonl")
    code, out, _ = run(capsys, "init", "project_b", "--journal", journal)
    assert code == 0 and out.startswith("contract 0x")
    code, out, _ = run(capsys, "mine", "-n", "3", "--journal", journal)
    assert code == 0 and len(out.splitlines()) == 3
    code, out, _ = run(capsys, "report", "--journal", journal, "--format", "json")
    assert json.loads(out)["summary"]["height"] == 5


def test_cas_cli(capsys, tmp_path):
    src = tmp_path / "f.bin"
    src.write_bytes(bytes(range(256)) * 50)
    store = str(tmp_path / "store")
    code, out, _ = run(capsys, "cas", "add", str(src), "--store", store, "--chunk-size", "1024")
    cid = out.strip()
    assert code == 0 and Cid.parse(cid)
    dst = tmp_path / "g.bin"
    assert run(capsys, "cas", "get", cid, "--store", store, "--chunk-size", "1024", "-o", str(dst))[0] == 0
    assert dst.read_bytes() == src.read_bytes()
    assert run(capsys, "cas", "get", "QmVkqaunyKCw4NKmWXbsGhkr5CotM8vCBKWyxsh8FGZyfr", "--store", store)[0] == 3


def test_transaction_classes():
    project = run_scenario(bundled_scenario("escrow_shortfall"))
    counts = classify_transactions(project.chain)
    assert counts["deploy"] == 1 and counts["update"] == 2
    assert counts["redemption"] == 2     # the redeem call and its payout
    assert counts["failed"] == 0         # the shortfall was caught by the rpc preflight
    assert counts["payment_processing"] == 4
