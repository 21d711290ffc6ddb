import pytest

from builders import doc_with, mini_spec, mini_spec_dict, state_doc
from nfaq.compiler import NFACache, compile_spec, lloc, materialize_imperative
from nfaq.errors import InvalidSpec
from nfaq.intent import parse_spec


def test_distinct_detectors_stay_distinct():
    states = [state_doc(f"S{i}") for i in range(5)] + [state_doc("T", terminal=True)]
    nfa = compile_spec(doc_with(states))
    assert len(nfa.states) == 6


def test_identical_detectors_merge():
    a = state_doc("A")
    b = dict(state_doc("B"), detectors=a["detectors"])
    b["actions"] = [{"primitive": "WAIT"}]
    nfa = compile_spec(doc_with([a, b, state_doc("T", terminal=True)]))
    assert len(nfa.states) == 2
    assert nfa.concrete_for("A") == nfa.concrete_for("B")
    merged = nfa.states[nfa.concrete_for("A")]
    assert merged.abstract_ids == ("A", "B")
    assert [x.call.primitive.value for x in merged.actions] == ["CLICK", "WAIT"]


def test_same_detectors_different_labels_do_not_merge():
    t1 = state_doc("T1", terminal=True)
    t2 = dict(t1, id="T2", outcome_label="NO_SERVICE")
    nfa = compile_spec(doc_with([state_doc("A"), t1, t2]))
    assert len(nfa.states) == 3


def test_compile_is_deterministic():
    a, b = compile_spec(mini_spec()), compile_spec(mini_spec())
    assert a.cache_key == b.cache_key
    assert a.to_dict() == b.to_dict()


def test_compile_rejects_invalid_spec():
    doc = mini_spec_dict()
    doc["states"][2]["actions"] = [{"primitive": "WAIT"}]
    with pytest.raises(InvalidSpec):
        compile_spec(parse_spec(doc))


def test_cache_hit_and_miss():
    cache = NFACache()
    spec = mini_spec()
    first = cache.get_or_compile(spec)
    assert cache.get_or_compile(spec) is first
    assert (cache.compiles, cache.hits) == (1, 1)
    doc = mini_spec_dict()
    doc["version"] = 2
    doc["states"][1]["actions"][0]["target"] = "view_plans"
    cache.get_or_compile(parse_spec(doc))
    assert cache.compiles == 2


def test_whitespace_in_document_does_not_change_key():
    import json
    doc = mini_spec_dict()
    compact = json.dumps(doc, separators=(",", ":"))
    spaced = json.dumps(doc, indent=8)
    assert compile_spec(parse_spec(compact)).cache_key == compile_spec(parse_spec(spaced)).cache_key


def test_lloc_formula_examples():
    one = doc_with([state_doc("T", terminal=True)])
    assert lloc(one, harness_constant=0) == 4
    base = doc_with([state_doc("A", n_cues=2, n_actions=1), state_doc("T", terminal=True)])
    more = doc_with([state_doc("A", n_cues=2, n_actions=2), state_doc("T", terminal=True)])
    assert lloc(more) - lloc(base) == 3


def test_materialized_program_shape():
    program = materialize_imperative(mini_spec(), harness_constant=10)
    per_state = program.per_state()
    assert per_state == {"ADDRESS_BAR": 2 + 4 + 3, "CHECK": 2 + 2 + 3, "PLANS_PAGE": 4, "NO_SERVICE": 4}
    assert program.lloc == 10 + sum(per_state.values())
    assert program.to_text().splitlines()[-1] == f"LLOC={program.lloc}"
