import json

import pytest

from builders import SERVICEABLE, UNSERVED, mini_bat_dict, mini_catalog, mini_spec_dict, popup_spec
from nfaq.cli import main
from nfaq.intent import spec_to_dict
from nfaq.sim import cookie_popup


@pytest.fixture
def files(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)
    return write


def _run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr().out


def test_validate_good_spec(files, capsys):
    code, out = _run(["validate", "--spec", files("s.json", mini_spec_dict())], capsys)
    assert code == 0 and json.loads(out) == []


def test_validate_reports_issues(files, capsys):
    doc = mini_spec_dict()
    doc["states"][2]["actions"] = [{"primitive": "WAIT"}]
    code, out = _run(["validate", "--spec", files("s.json", doc)], capsys)
    assert code == 2 and json.loads(out)[0]["rule"] == "TERMINAL_HAS_ACTIONS"


def test_schema_error_exit(files, capsys):
    doc = mini_spec_dict()
    doc["initial_state"] = "X"
    assert main(["validate", "--spec", files("s.json", doc)]) == 2
    assert main(["validate", "--spec", "/no/such/file.json"]) == 2


def test_run_complete_spec(files, capsys):
    bat = mini_bat_dict()
    bat["catalog"] = [r.to_dict() for r in mini_catalog()]
    code, out = _run(["run", "--spec", files("s.json", mini_spec_dict()), "--address", SERVICEABLE,
                      "--env", files("b.json", bat)], capsys)
    assert code == 0
    result = json.loads(out)
    assert result["outcome_label"] == "PLANS_PAGE" and len(result["plans"]) == 2


def test_run_with_class_flag(files, capsys):
    code, out = _run(["run", "--spec", files("s.json", mini_spec_dict()), "--address", UNSERVED,
                      "--env", files("b.json", mini_bat_dict()), "--class", "NO_SERVICE"], capsys)
    assert code == 0 and json.loads(out)["outcome_label"] == "NO_SERVICE"


def test_run_after_deleting_a_state(files, capsys):
    doc = mini_spec_dict()
    doc["states"] = [s for s in doc["states"] if s["id"] != "PLANS_PAGE"]
    code, _ = _run(["run", "--spec", files("s.json", doc), "--address", SERVICEABLE,
                    "--env", files("b.json", mini_bat_dict()), "--class", "SERVICEABLE_PLANS"], capsys)
    assert code == 3


def test_run_ambiguous_exit(files, capsys):
    doc = mini_spec_dict()
    doc["states"].append({"id": "DUP", "detectors": [[{"kind": "TEXT_CONTAINS", "value": "enter"}]],
                          "actions": [{"primitive": "WAIT"}]})
    code, _ = _run(["run", "--spec", files("s.json", doc), "--address", SERVICEABLE,
                    "--env", files("b.json", mini_bat_dict())], capsys)
    assert code == 4


def test_run_exhaustion_exit(files, capsys):
    bat_path = files("b.json", mini_bat_dict())
    popped = files("op.json", {"kind": "INSERT_STAGE", "params": cookie_popup("COOKIE_POPUP", "ADDRESS_BAR")})
    out_bat = bat_path.replace("b.json", "b2.json")
    assert main(["mutate", "--bat", bat_path, "--op", popped, "--out", out_bat]) == 0
    spec = files("s.json", spec_to_dict(popup_spec(complete=False, reject_budget=500)))
    code, _ = _run(["--step-budget", "16", "run", "--spec", spec, "--address", SERVICEABLE, "--env", out_bat,
                    "--class", "SERVICEABLE_PLANS"], capsys)
    assert code == 5


def test_global_flags_after_subcommand(files, capsys):
    code, out = _run(["materialize", "--spec", files("s.json", mini_spec_dict()), "--harness", "0"], capsys)
    assert code == 0 and out.splitlines()[-1] == "LLOC=24"


def test_compile_output(files, capsys, tmp_path):
    target = tmp_path / "nfa.json"
    assert main(["compile", "--spec", files("s.json", mini_spec_dict()), "--out", str(target)]) == 0
    assert len(json.loads(target.read_text())["states"]) == 4


def test_fleet_respects_out_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NFAQ_OUT_DIR", str(tmp_path / "envdir"))
    assert main(["--seed", "2", "fleet", "--n", "2"]) == 0
    assert sorted(p.name for p in (tmp_path / "envdir" / "specs").iterdir()) == ["isp000.json", "isp001.json"]
    manifest = json.loads(capsys.readouterr().out)
    assert len(manifest["isps"]) == 2


def test_fleet_infer_fidelity_metrics_campaign(tmp_path, capsys):
    out = tmp_path / "fleet"
    assert main(["--seed", "3", "fleet", "--n", "2", "--out-dir", str(out)]) == 0
    capsys.readouterr()
    bat, cat, spec = (str(out / d / "isp000.json") for d in ("bats", "catalogs", "specs"))
    inferred = str(tmp_path / "inferred.json")
    assert main(["infer", "--bat", bat, "--catalog", cat, "--out", inferred]) == 0
    code, text = _run(["fidelity", "--spec-a", spec, "--spec-b", inferred, "--bat", bat, "--catalog", cat], capsys)
    assert code == 0 and float(text) == 1.0
    code, text = _run(["metrics", "--specs", str(out / "specs"), "--csv-dir", str(tmp_path / "csv")], capsys)
    assert code == 0 and "summary" in json.loads(text)
    assert any((tmp_path / "csv").iterdir())
    camp = tmp_path / "camp"
    assert main(["campaign", "--config", str(out / "campaign.json"), "--out-dir", str(camp), "--stop-after", "2"]) == 0
    assert (camp / "rounds.jsonl").read_text().count("\n") == 2
    assert main(["campaign", "--config", str(out / "campaign.json"), "--out-dir", str(camp)]) == 0
    assert (camp / "rounds.jsonl").read_text().count("\n") == 4


def test_analyze(tmp_path, capsys):
    cbgs = tmp_path / "cbgs.csv"
    cbgs.write_text("cbg_id,income_20th_pct_disposable,bsl_count,unserved_plus_underserved\n"
                    "c1,30000,10,5\nc2,18000,4,1\n")
    plans = tmp_path / "plans.jsonl"
    rows = [{"isp_id": "A", "address": "1", "plan_name": "p", "price": 50, "down": 300, "up": 30,
             "pricing_kind": "REGULAR", "cbg_id": "c1"},
            {"isp_id": "B", "address": "2", "plan_name": "q", "price": 45, "down": 100, "up": 10,
             "pricing_kind": "REGULAR", "cbg_id": "c2"}]
    plans.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out = tmp_path / "an"
    assert main(["analyze", "--plans", str(plans), "--cbgs", str(cbgs), "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["bead_eligible"] == ["c1"]
    assert summary["frontier"]["frac_with_affordable_plan"] == 0.5
    assert (out / "frontier.csv").read_text().splitlines()[1].startswith("c1,50.00,50.00,true")


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_internal_fault_exit(files, monkeypatch):
    import nfaq.cli as cli

    def boom(spec):
        raise RuntimeError("unexpected")
    monkeypatch.setattr(cli, "compile_spec", boom)
    assert main(["compile", "--spec", files("s.json", mini_spec_dict())]) == 6
