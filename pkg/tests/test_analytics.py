import io

import pytest

from nfaq.analytics import (
    CbgRecord, FrontierMode, ServiceClass, affordability_threshold, analyze, bead_eligible, classify_key,
    classify_outcome, frontier, frontier_point, load_cbgs, load_plans, low_cost_plan, market_structure,
    representative_plan, write_frontier_csv,
)
from nfaq.errors import EmptyCbg, NonpositiveIncome, SchemaError, ZeroBsl
from nfaq.records import PlanRecord, PricingKind
from nfaq.runtime import QueryResult, QueryStatus
from nfaq.intent import OutcomeLabel

REG = PricingKind.REGULAR


def plan(down, price, name="p", addr="a", isp="x", kind=REG, cbg="c1"):
    return PlanRecord(isp, addr, name, float(price), float(down), float(down) / 10, kind, cbg)


def test_threshold_examples():
    assert affordability_threshold(30000) == 50.00
    assert affordability_threshold(18000) == 30.00
    assert affordability_threshold(25000) == 41.67
    with pytest.raises(NonpositiveIncome):
        affordability_threshold(0)


def test_low_cost_examples():
    assert (low_cost_plan([plan(300, 50), plan(1000, 90)]).down, low_cost_plan([plan(300, 50)]).price) == (300, 50)
    assert low_cost_plan([plan(50, 20)]) is None
    assert low_cost_plan([plan(100, 30, "b"), plan(100, 30, "a")]).plan_name == "a"
    assert low_cost_plan([plan(200, 10, kind=PricingKind.PROMOTIONAL), plan(200, 40)]).price == 40


def test_representative_examples():
    per = {"b1": [plan(200, 60)], "b2": [plan(100, 55)], "b3": [plan(300, 50)]}
    assert representative_plan(per) == (200, 60)
    assert representative_plan({"b1": [plan(100, 55)]}) == (100, 55)
    assert representative_plan({"b1": [plan(100, 40)], "b2": [plan(300, 80)]}) == (100, 40)
    with pytest.raises(EmptyCbg):
        representative_plan({"b1": [plan(100, 40, kind=PricingKind.PROMOTIONAL)]})


def test_representative_picks_closest_to_100_per_location():
    per = {"b1": [plan(1000, 90), plan(75, 30), plan(125, 45)]}
    assert representative_plan(per) == (75, 30)


@pytest.mark.parametrize("status,outcome,n,expected", [
    ("TERMINAL", "PLANS_PAGE", 2, ServiceClass.SERVICEABLE_WITH_PLANS),
    ("TERMINAL", "PLANS_PAGE", 0, ServiceClass.SERVICEABLE_NO_PLANS),
    ("TERMINAL", "SERVICE_CONFIRMED_NO_PLANS", 0, ServiceClass.SERVICEABLE_NO_PLANS),
    ("TERMINAL", "NO_SERVICE", 0, ServiceClass.NO_SERVICE),
    ("TERMINAL", "ACTIVE_SERVICE", 0, ServiceClass.UNKNOWN),
    ("TERMINAL", "UNKNOWN", 0, ServiceClass.UNKNOWN),
    ("UNDERSPECIFIED", None, 0, ServiceClass.UNKNOWN),
    ("STEP_BUDGET_EXHAUSTED", None, 0, ServiceClass.UNKNOWN),
])
def test_classification(status, outcome, n, expected):
    assert classify_key(status, outcome, n) is expected


def test_classify_result():
    r = QueryResult("x", "a", QueryStatus.TERMINAL, OutcomeLabel.NO_SERVICE)
    assert classify_outcome(r) is ServiceClass.NO_SERVICE


def test_market_structure_examples():
    ms = market_structure({"c1": {"A"}, "c2": {"A", "B"}, "c3": {"A", "B", "C"}})
    assert (ms.monopoly, ms.duopoly, ms.triopoly_plus) == (1 / 3, 1 / 3, 1 / 3)
    ms = market_structure({"c1": {"A"}, "c2": {"B"}})
    assert (ms.monopoly, ms.duopoly, ms.triopoly_plus) == (1, 0, 0)
    assert market_structure({"c1": {"A"}, "c2": {"A", "B"}, "c3": {"B"}}, "A").n_cbgs == 2


def test_bead_boundary():
    assert bead_eligible(CbgRecord("c", 1, 10, 5))
    assert not bead_eligible(CbgRecord("c", 1, 10, 4))
    with pytest.raises(ZeroBsl):
        bead_eligible(CbgRecord("c", 1, 0, 0))
    with pytest.raises(SchemaError):
        CbgRecord("c", 1, 3, 4)


def test_price_at_threshold_is_affordable():
    cbg = CbgRecord("c1", 30000, 4, 0)
    pt = frontier_point(cbg, [plan(100, 50)])
    assert pt.threshold == 50.0 and pt.affordable


def test_no_qualifying_plan_counts_as_without():
    cbgs = [CbgRecord("c1", 30000, 4, 0), CbgRecord("c2", 30000, 4, 0)]
    points, summary = frontier(cbgs, [plan(50, 10, cbg="c1"), plan(100, 40, cbg="c2")])
    assert not points[0].qualifying
    assert summary.frac_without == 0.5 and summary.frac_no_qualifying_plan == 0.5


def test_free_fast_plans_everywhere():
    cbgs = [CbgRecord(f"c{i}", 30000, 4, 2) for i in range(3)]
    plans = [plan(300, 0, cbg=c.cbg_id) for c in cbgs]
    _, summary = frontier(cbgs, plans)
    assert (summary.frac_without, summary.frac_no_qualifying_plan) == (0, 0)
    _, out = analyze(cbgs, plans)
    b = out["baseline_eligible"]
    assert (b["frac_price_above_threshold"], b["frac_speed_below_100"], b["frac_no_qualifying_plan"]) == (0, 0, 0)


def test_representative_frontier_mode():
    cbg = CbgRecord("c1", 30000, 2, 0)
    pt = frontier_point(cbg, [plan(75, 30, addr="a"), plan(75, 20, addr="b")], FrontierMode.REPRESENTATIVE)
    assert (pt.down, pt.plan_price, pt.qualifying) == (75, 25, False)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "cbgs.csv"
    path.write_text("cbg_id,income_20th_pct_disposable,bsl_count,unserved_plus_underserved\nc1,30000,10,5\n")
    (cbg,) = load_cbgs(path)
    assert cbg == CbgRecord("c1", 30000.0, 10, 5)
    bad = tmp_path / "bad.csv"
    bad.write_text("cbg_id,bsl_count\nc1,3\n")
    with pytest.raises(SchemaError):
        load_cbgs(bad)
    buf = io.StringIO()
    write_frontier_csv([frontier_point(cbg, [plan(100, 50)])], buf)
    assert buf.getvalue().splitlines()[1] == "c1,50.00,50.00,true,0.1000"


def test_plans_jsonl(tmp_path):
    import json
    path = tmp_path / "plans.jsonl"
    path.write_text(json.dumps(plan(100, 50).to_dict()) + "\n\n")
    assert load_plans(path) == [plan(100, 50)]
    path.write_text("{}\n")
    with pytest.raises(SchemaError):
        load_plans(path)
