"""Config validation messages and the command-line round trip."""

import contextlib
import io
import json

import pytest
import yaml

from ctsim.cli import main
from ctsim.fixedpoint import ONE, fp_from
from ctsim.scenario import ConfigError, load_config

from conftest import base_cfg, four_nodes


def bad(cfg, needle):
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert needle in str(err.value), str(err.value)


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


# ---------------------------------------------------------------------------
# Validation names the offending field
# ---------------------------------------------------------------------------

def test_seed_is_mandatory_and_bounded():
    cfg = base_cfg()
    del cfg["seed"]
    bad(cfg, "seed: is mandatory")
    bad(base_cfg(seed=-1), "seed")
    bad(base_cfg(seed=2 ** 64), "seed")
    bad(base_cfg(seed=True), "seed")
    bad(base_cfg(seed="7"), "seed")


def test_stakes_must_cover_the_pie():
    nodes = four_nodes()
    nodes[0]["stake"] = 0.5
    bad(base_cfg(nodes=nodes), "stakes must sum to 1")
    cfg = base_cfg(nodes=nodes, normalize_stakes=True)
    parsed = load_config(cfg)
    assert sum(n.stake for n in parsed.nodes) == ONE


def test_normalization_puts_remainder_first():
    nodes = [{"name": c, "stake": 1} for c in ("a", "b", "c")]
    parsed = load_config(base_cfg(nodes=nodes, normalize_stakes=True))
    third = ONE // 3
    assert [n.stake for n in parsed.nodes] == [third + 1, third, third]


def test_unknown_keys_are_refused():
    bad(base_cfg(bogus=1), "bogus: unknown top-level key")
    nodes = four_nodes()
    nodes[0]["colour"] = "red"
    bad(base_cfg(nodes=nodes), "nodes[0].colour: unknown node key")
    bad(base_cfg(links={"latency": 5}), "links.latency: unknown link key")


def test_node_spec_validation():
    nodes = four_nodes()
    nodes[0]["name"] = "al:pha"
    bad(base_cfg(nodes=nodes), "nodes[0].name")
    nodes = four_nodes()
    nodes[1]["name"] = "alpha"
    bad(base_cfg(nodes=nodes), "duplicate node name")
    nodes = four_nodes()
    nodes[0]["weights"] = [1.2, 0.3]
    bad(base_cfg(nodes=nodes), "nodes[0].weights[0]: must lie in [0, 1]")
    nodes = four_nodes()
    nodes[0]["weights"] = [0, 0]
    bad(base_cfg(nodes=nodes), "must not both be zero")
    nodes = four_nodes()
    nodes[0]["behavior"] = "saboteur"
    bad(base_cfg(nodes=nodes), "nodes[0].behavior: must be one of")
    nodes = four_nodes()
    nodes[0]["trust_override"] = 0.5
    bad(base_cfg(nodes=nodes), "only 0 is supported")


def test_consensus_validation():
    bad(base_cfg(consensus={"slot_ms": 400}), "consensus.slot_ms")
    bad(base_cfg(consensus={"k_bits": 96}), "must be 64 or 128")
    bad(base_cfg(consensus={"base_target": 0}), "consensus.base_target")
    bad(base_cfg(consensus={"base_target": 1.5}), "consensus.base_target")


def test_partition_validation():
    bad(base_cfg(partitions=[{"at_ms": 0, "groups": [["alpha", "beta"]]}]),
        "need at least two groups")
    bad(base_cfg(partitions=[{"at_ms": 0,
                              "groups": [["alpha", "beta"],
                                         ["beta", "gamma"]]}]),
        "appears in two groups")
    bad(base_cfg(partitions=[{"at_ms": 0,
                              "groups": [["alpha"], ["nottheir"]]}]),
        "unknown node")
    bad(base_cfg(partitions=[{"at_ms": 500, "heal": True},
                             {"at_ms": 100, "heal": True}]),
        "must be non-decreasing")


def test_action_validation():
    bad(base_cfg(actions=[{"at_ms": 0, "action": "conjure"}]),
        "actions[0].action")
    bad(base_cfg(actions=[{"at_ms": 0, "action": "request_access",
                           "user": "u", "target": "nowhere",
                           "resource": "r"}]),
        "unknown provider")
    bad(base_cfg(actions=[{"at_ms": 0, "action": "feedback",
                           "request": "req-1", "by": "home",
                           "label": "GOOD"}]),
        "scale does not match the rating party")
    bad(base_cfg(actions=[{"at_ms": 0, "action": "feedback",
                           "request": "req-1", "by": "foreign",
                           "label": "SATISFIED"}]),
        "scale does not match the rating party")
    bad(base_cfg(actions=[{"at_ms": 0, "action": "iaas_share",
                           "borrower": "alpha", "lender": "alpha",
                           "resource": "r"}]),
        "must differ")


# ---------------------------------------------------------------------------
# Command-line round trip
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    cfg = base_cfg(
        seed=5, duration_ms=9000,
        actions=[
            {"at_ms": 500, "action": "register_user",
             "user": "wanderer", "home": "alpha"},
            {"at_ms": 1500, "action": "request_access", "user": "wanderer",
             "target": "beta", "resource": "vm-small"},
        ])
    path = tmp_path_factory.mktemp("scn") / "flow.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def run_dir(scenario_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code, stdout, _ = run_cli("run", str(scenario_file),
                              "--out-dir", str(out))
    assert code == 0, stdout
    return out


def test_run_produces_artifacts(run_dir):
    for name in ("ledger.bin", "events.jsonl", "report.json"):
        assert (run_dir / name).stat().st_size > 0
    report = json.loads((run_dir / "report.json").read_text())
    assert report["requests"]["by_state"].get("GRANTED", 0) >= 1
    assert report["chain"]["height"] > 0


def test_run_is_reproducible(scenario_file, run_dir, tmp_path):
    code, _, _ = run_cli("run", str(scenario_file),
                         "--out-dir", str(tmp_path))
    assert code == 0
    for name in ("ledger.bin", "events.jsonl", "report.json"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()


def test_seed_override_changes_the_run(scenario_file, run_dir, tmp_path):
    code, _, _ = run_cli("run", str(scenario_file), "--out-dir",
                         str(tmp_path), "--seed-override", "99")
    assert code == 0
    assert (tmp_path / "ledger.bin").read_bytes() \
        != (run_dir / "ledger.bin").read_bytes()

    code, _, err = run_cli("run", str(scenario_file), "--out-dir",
                           str(tmp_path / "x"), "--seed-override", "-1")
    assert code == 2
    assert "seed override" in err


def test_invalid_config_exits_2(tmp_path):
    nodes = four_nodes()
    nodes[0]["stake"] = 0.9
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(base_cfg(nodes=nodes)))
    code, _, err = run_cli("run", str(path), "--out-dir", str(tmp_path))
    assert code == 2
    assert "config error" in err and "stakes must sum to 1" in err

    code, _, err = run_cli("run", str(tmp_path / "absent.yaml"),
                           "--out-dir", str(tmp_path))
    assert code == 2


def test_verify_accepts_and_reports(run_dir):
    code, out, _ = run_cli("verify", str(run_dir / "ledger.bin"))
    assert code == 0
    assert out.startswith("OK height=")
    assert "tip=" in out


def test_verify_catches_a_flipped_byte(run_dir, tmp_path):
    raw = bytearray((run_dir / "ledger.bin").read_bytes())
    raw[len(raw) // 2] ^= 0x01
    mangled = tmp_path / "mangled.bin"
    mangled.write_bytes(bytes(raw))
    code, out, _ = run_cli("verify", str(mangled))
    assert code == 1
    assert out.startswith("FAIL")


def test_verify_catches_truncation(run_dir, tmp_path):
    raw = (run_dir / "ledger.bin").read_bytes()
    clipped = tmp_path / "clipped.bin"
    clipped.write_bytes(raw[:-7])
    code, out, _ = run_cli("verify", str(clipped))
    assert code == 1
    assert out.startswith("FAIL malformed ledger")

    code, _, err = run_cli("verify", str(tmp_path / "ghost.bin"))
    assert code == 2
    assert "cannot read" in err


def test_trust_report_matches_run_report(run_dir):
    code, out, _ = run_cli("trust-report", str(run_dir / "ledger.bin"),
                           "--json")
    assert code == 0
    offline = json.loads(out)
    stored = json.loads((run_dir / "report.json").read_text())
    # names and request history come from the event log, which the
    # offline replay does not see; the numbers must still agree exactly
    def anonymous(rows):
        return [{k: v for k, v in r.items() if k != "name"} for r in rows]
    assert anonymous(offline["providers"]) == anonymous(stored["providers"])
    assert anonymous(offline["users"]) == anonymous(stored["users"])
    assert offline["chain"] == stored["chain"]


def test_trust_report_table_lists_users(run_dir):
    code, out, _ = run_cli("trust-report", str(run_dir / "ledger.bin"))
    assert code == 0
    assert "provider" in out and "credibility" in out


def test_registrations_only_ledger_reports_bootstrap(tmp_path):
    cfg = base_cfg(seed=3, duration_ms=4000)
    path = tmp_path / "quiet.yaml"
    path.write_text(yaml.safe_dump(cfg))
    code, _, _ = run_cli("run", str(path), "--out-dir", str(tmp_path))
    assert code == 0
    code, out, _ = run_cli("trust-report", str(tmp_path / "ledger.bin"),
                           "--json")
    assert code == 0
    report = json.loads(out)
    assert report["users"] == []
    for row in report["providers"]:
        assert row["consensus_trust"] == 0.5
        assert row["sat"] == 0.0
        assert row["auth"] == 0.0
        assert row["trust"] == 0.0
