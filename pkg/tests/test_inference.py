import warnings

import pytest

from builders import mini_bat, mini_catalog, mini_spec, mini_spec_dict
from nfaq.campaign import hit_rate, run_spec
from nfaq.fleet import generate_fleet
from nfaq.inference import BudgetExceeded, ExplorationBudget, ExplorationSynthesizer, fidelity_check, infer_spec
from nfaq.intent import OutcomeLabel, parse_spec, validate_spec
from nfaq.sim import AddressClass, AddressRecord, MutationKind, MutationOp, bat_from_dict, cookie_popup, mutate


def _linear_bat():
    return bat_from_dict({
        "isp_id": "lin", "entry_page": "P0",
        "pages": [
            {"id": "P0", "visible_text": ["enter your address"], "elements": ["box"],
             "transitions": [{"primitive": "TYPEWRITE", "target": "box", "to": "P1"}]},
            {"id": "P1", "visible_text": ["confirm location"], "elements": ["ok"],
             "transitions": [{"primitive": "CLICK", "target": "ok", "to": "P2"}]},
            {"id": "P2", "visible_text": ["your plans"], "terminal_label": "PLANS_PAGE",
             "plan_payloads": {"ALL": [{"name": "Basic", "price": 40, "down": 100, "up": 10}]}},
        ]})


def test_linear_tool_gives_three_states():
    bat = _linear_bat()
    catalog = [AddressRecord("1 A St", AddressClass.SERVICEABLE_PLANS)]
    spec = infer_spec(bat, ExplorationBudget.from_catalog(catalog))
    assert len(spec.states) == 3
    assert validate_spec(spec) == []
    results = run_spec(spec, bat, catalog)
    assert hit_rate(results) == 1.0
    assert results[0].plans[0].price == 40.0


def test_cookie_cycle_is_exited_by_accept():
    bat = mutate(mini_bat(), MutationOp(MutationKind.INSERT_STAGE, cookie_popup("COOKIE", "ADDRESS_BAR")))
    spec = infer_spec(bat, ExplorationBudget.from_catalog(mini_catalog()))
    popup = spec.state(spec.initial_state_id)
    assert [(a.primitive.value, a.target) for a in popup.actions] == [("CLICK", "accept_cookies")]
    assert hit_rate(run_spec(spec, bat, mini_catalog())) == 1.0


def test_guarded_branch_gives_distinct_terminals():
    spec = infer_spec(mini_bat(), ExplorationBudget.from_catalog(mini_catalog()))
    labels = {s.outcome_label for s in spec.states if s.terminal}
    assert labels == {OutcomeLabel.PLANS_PAGE, OutcomeLabel.NO_SERVICE}


def test_fidelity_identity_and_deleted_terminal():
    bat, catalog, spec = mini_bat(), mini_catalog(), mini_spec()
    assert fidelity_check(spec, spec, bat, catalog) == 1.0
    doc = mini_spec_dict()
    doc["states"] = [s for s in doc["states"] if s["id"] != "NO_SERVICE"]
    assert fidelity_check(spec, parse_spec(doc), bat, catalog) < 1.0


def test_small_budget_warns_and_returns_partial_spec():
    entry = max(generate_fleet(1, 10), key=lambda e: len(e.bat.pages))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = infer_spec(entry.bat, ExplorationBudget.from_catalog(entry.catalog, max_pages=2))
    assert any(issubclass(w.category, BudgetExceeded) for w in caught)
    assert len(spec.states) <= 2


def test_synthesizer_protocol():
    entry = generate_fleet(3, 1)[0]
    spec = ExplorationSynthesizer().synthesize(entry.bat, ExplorationBudget.from_catalog(entry.catalog))
    assert fidelity_check(entry.spec, spec, entry.bat, entry.catalog) == 1.0


def test_inference_needs_a_probe():
    with pytest.raises(ValueError):
        infer_spec(mini_bat(), ExplorationBudget())
