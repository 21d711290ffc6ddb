import json

import pytest

from builders import SERVICEABLE, mini_bat, mini_catalog, mini_spec, mini_spec_dict
from nfaq.campaign import (
    Campaign, CampaignConfig, IspInputs, ScheduledEvent, detect_interface_updates, hit_rate, load_config,
    read_jsonl, record_intervention, run_campaign, updates_per_isp_round,
)
from nfaq.errors import EmptyInput, SchemaError
from nfaq.intent import parse_spec, spec_to_dict
from nfaq.runtime import QueryResult, QueryStatus
from nfaq.sim import MutationKind, MutationOp, cookie_popup, dump_json


def _result(status):
    return QueryResult("x", "a", QueryStatus(status))


def test_hit_rate_examples():
    assert hit_rate([_result("TERMINAL")] * 8 + [_result("UNDERSPECIFIED")] * 2) == 0.8
    assert hit_rate([_result("TERMINAL")] * 3) == 1.0
    assert hit_rate([_result("UNDERSPECIFIED")] * 3) == 0.0
    with pytest.raises(EmptyInput):
        hit_rate([])


def test_update_detection():
    plans = ("TERMINAL", "PLANS_PAGE")
    history = {("x", "a"): [(1, plans), (2, plans), (3, ("UNDERSPECIFIED", None))],
               ("x", "b"): [(1, plans), (2, plans), (3, plans)]}
    events = detect_interface_updates(history)
    assert [(e.isp_id, e.address, e.round) for e in events] == [("x", "a", 3)]
    assert updates_per_isp_round(events) == {("x", 3): 1}


def test_intervention_pricing():
    old = mini_spec()
    doc = mini_spec_dict()
    doc["states"].insert(0, {"id": "POPUP", "detectors": [[{"kind": "TEXT_CONTAINS", "value": "cookies"}]],
                             "actions": [{"primitive": "CLICK", "target": "accept"}]})
    rec = record_intervention(old, parse_spec(doc), "manual")
    assert (rec.delta.states_added, rec.delta.llos_delta) == (1, 2)
    assert rec.lloc_delta == 2 + 2 * 1 + 3 * 1
    doc = mini_spec_dict()
    doc["states"][1]["actions"][0]["target"] = "view_plans"
    rec = record_intervention(old, parse_spec(doc), "manual")
    assert (rec.delta.states_added, rec.delta.states_edited, rec.delta.llos_delta, rec.lloc_delta) == (0, 1, 0, 0)


def test_intervention_log_line(tmp_path):
    path = tmp_path / "i.jsonl"
    record_intervention(mini_spec(), mini_spec(), "noop", 2, log_path=str(path))
    (row,) = read_jsonl(path)
    assert row["round"] == 2 and row["states_affected"] == 0


def _inputs(tmp_path, isp_id):
    d = tmp_path / isp_id
    d.mkdir()
    spec = spec_to_dict(mini_spec())
    spec["isp_id"] = isp_id
    bat = mini_bat().to_dict()
    bat["isp_id"] = isp_id
    dump_json(spec, d / "spec.json")
    dump_json(bat, d / "bat.json")
    dump_json([r.to_dict() for r in mini_catalog()] * 1, d / "catalog.json")
    return IspInputs(str(d / "spec.json"), str(d / "bat.json"), str(d / "catalog.json"))


def test_mutation_affects_only_its_isp(tmp_path):
    isps = (_inputs(tmp_path, "a"), _inputs(tmp_path, "b"))
    op = MutationOp(MutationKind.INSERT_STAGE, cookie_popup("COOKIE", "ADDRESS_BAR"))
    config = CampaignConfig(isps, rounds=3, events=(ScheduledEvent(2, "a", op),
                                                     ScheduledEvent(3, "a", repair="scripted")))
    out = tmp_path / "out"
    assert run_campaign(config, out) == 3
    rows = read_jsonl(out / "results.jsonl")
    assert len(rows) == 3 * 2 * 2
    by = {(r["round"], r["isp_id"], r["address"]): r["status"] for r in rows}
    assert by[(2, "a", SERVICEABLE)] == "UNDERSPECIFIED"
    assert by[(2, "b", SERVICEABLE)] == "TERMINAL"
    assert by[(3, "a", SERVICEABLE)] == "TERMINAL"
    rounds = read_jsonl(out / "rounds.jsonl")
    assert [r["isps"]["a"]["hit_rate"] for r in rounds] == [1.0, 0.0, 1.0]
    assert [r["isps"]["b"]["update_event"] for r in rounds] == [False, False, False]
    (interv,) = read_jsonl(out / "interventions.jsonl")
    assert interv["states_affected"] == 1
    plans = read_jsonl(out / "plans.jsonl")
    assert {p["cbg_id"] for p in plans} == {"c1"}


def test_repeated_rounds_are_identical(tmp_path):
    config = CampaignConfig((_inputs(tmp_path, "a"),), rounds=2)
    camp = Campaign(config, tmp_path / "o")
    r1 = [r.key for r, _ in camp.run_round(1, 0.0)]
    r2 = [r.key for r, _ in camp.run_round(2, 0.0)]
    assert r1 == r2


def test_config_file_round_trip(tmp_path):
    config = CampaignConfig((_inputs(tmp_path, "a"),), rounds=2, cadence_label="daily")
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps(config.to_dict()))
    assert load_config(path) == config


@pytest.mark.parametrize("bad", [{"rounds": 0}, {"parallelism": 0}])
def test_config_rejects_bad_values(tmp_path, bad):
    kwargs = dict(isps=(_inputs(tmp_path, "a"),), rounds=1)
    kwargs.update(bad)
    with pytest.raises(SchemaError):
        CampaignConfig(**kwargs)


def test_completed_campaign_is_not_rerun(tmp_path):
    config = CampaignConfig((_inputs(tmp_path, "a"),), rounds=2)
    out = tmp_path / "o"
    run_campaign(config, out)
    before = (out / "results.jsonl").read_bytes()
    assert run_campaign(config, out) == 2
    assert (out / "results.jsonl").read_bytes() == before
