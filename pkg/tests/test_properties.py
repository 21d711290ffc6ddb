"""Property-based checks over generated specs, observations and analytics inputs."""
from dataclasses import replace
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from nfaq.analytics import (
    CbgRecord, ServiceClass, affordability_threshold, bead_eligible, classify_key, threshold_exact,
)
from nfaq.compiler import compile_spec, lloc
from nfaq.intent import (
    AbstractState, ActionCall, CueKind, CuePredicate, IntentSpec, OutcomeLabel, Primitive, StateDetector,
    content_digest, parse_spec, serialize_spec, spec_diff, spec_to_dict, with_states,
)
from nfaq.metrics import compression_ratios, jaccard
from nfaq.observation import Observation, detector_satisfied
from nfaq.runtime import QueryStatus, match_states

WORDS = st.sampled_from(["enter", "your", "address", "check", "plans", "zip", "view", "home", "fiber", "cookies"])
phrases = st.lists(WORDS, min_size=1, max_size=3).map(" ".join)
cues = st.builds(CuePredicate, st.sampled_from(list(CueKind)), phrases)
detectors = st.builds(StateDetector, st.lists(cues, min_size=1, max_size=3).map(tuple))


@st.composite
def actions(draw):
    prim = draw(st.sampled_from(list(Primitive)))
    target = draw(WORDS) if prim in (Primitive.CLICK, Primitive.SELECT, Primitive.TYPEWRITE) else None
    arg = "{address}" if prim is Primitive.TYPEWRITE else None
    return ActionCall(prim, target, arg, draw(st.integers(1, 5)))


@st.composite
def specs(draw):
    n = draw(st.integers(1, 6))
    states = []
    for i in range(n):
        dets = tuple(draw(st.lists(detectors, min_size=1, max_size=2)))
        if i == n - 1 or draw(st.booleans()):
            label = draw(st.sampled_from(list(OutcomeLabel)))
            states.append(AbstractState(f"S{i}", dets, (), True, label))
        else:
            acts = tuple(draw(st.lists(actions(), min_size=1, max_size=3)))
            succ = tuple(draw(st.lists(st.sampled_from([f"S{j}" for j in range(n)]), max_size=2)))
            states.append(AbstractState(f"S{i}", dets, acts, expected_successors=succ or None))
    return IntentSpec("p", tuple(states), "S0", draw(st.integers(1, 9)), draw(st.integers(0, 500)))


@settings(max_examples=60, deadline=None)
@given(specs())
def test_serialization_round_trip(spec):
    assert parse_spec(serialize_spec(spec)) == spec


@settings(max_examples=60, deadline=None)
@given(specs(), specs())
def test_diff_symmetry(a, b):
    ab, ba = spec_diff(a, b), spec_diff(b, a)
    assert ab.states_added == ba.states_removed
    assert ab.states_edited == ba.states_edited
    assert ab.llos_delta == -ba.llos_delta
    assert spec_diff(a, a).states_affected == 0


@settings(max_examples=60, deadline=None)
@given(specs(), st.lists(st.sampled_from(["S0", "S1", "S9"]), max_size=3))
def test_successor_notes_do_not_change_behaviour(spec, notes):
    edited = with_states(spec, [replace(s, expected_successors=tuple(notes) or None) if s.actions else s
                                for s in spec.states])
    assert content_digest(edited) == content_digest(spec)
    assert compile_spec(edited).to_dict()["states"] == compile_spec(spec).to_dict()["states"]


@settings(max_examples=60, deadline=None)
@given(specs(), actions())
def test_adding_an_action_costs_three_statements(spec, extra):
    idx = next((i for i, s in enumerate(spec.states) if not s.terminal), None)
    if idx is None:
        return
    states = list(spec.states)
    states[idx] = replace(states[idx], actions=states[idx].actions + (extra,))
    bigger = with_states(spec, states)
    assert lloc(bigger) - lloc(spec) == 3
    assert lloc(spec) == oracles.lloc_by_counting(spec, 692)


@settings(max_examples=60, deadline=None)
@given(specs())
def test_compression_below_half(spec):
    assert all(r < 0.5 for r in compression_ratios(spec))


@settings(max_examples=100, deadline=None)
@given(detectors, st.lists(phrases, max_size=4), st.lists(WORDS, max_size=4))
def test_matching_ignores_case_and_spacing(det, texts, elements):
    plain = Observation.build(texts, elements)
    shouted = Observation.build(["  " + t.upper().replace(" ", "   ") + "  " for t in texts],
                                [e.title() for e in elements])
    assert detector_satisfied(det, plain) == detector_satisfied(det, shouted)


@settings(max_examples=60, deadline=None)
@given(specs(), st.lists(phrases, max_size=4), st.lists(WORDS, max_size=4))
def test_matching_agrees_with_oracle(spec, texts, elements):
    obs = Observation.build(texts, elements)
    nfa = compile_spec(spec)
    got = {a for c in match_states(nfa, obs) for a in nfa.states[nfa.index_of(c)].abstract_ids}
    want = {s["id"] for s in oracles.matching_states(spec_to_dict(spec), obs)}
    assert got == want


token_sets = st.frozensets(WORDS, max_size=6)


@given(token_sets, token_sets)
def test_jaccard_properties(a, b):
    if not (a | b):
        return
    j = jaccard(a, b)
    assert 0.0 <= j <= 1.0
    assert j == jaccard(b, a)
    assert (j == 1.0) == (a == b)


@given(token_sets)
def test_jaccard_identity(a):
    if a:
        assert jaccard(a, a) == 1.0


@given(st.integers(1, 10**7), st.integers(1, 50))
def test_threshold_is_linear_in_income(income, k):
    assert threshold_exact(income * k) == k * threshold_exact(income)
    assert threshold_exact(income) == Fraction(income, 600)


@given(st.integers(1, 10**7))
def test_rounded_threshold_matches_cents_oracle(income):
    assert round(affordability_threshold(income) * 100) == oracles.threshold_cents(income)


@given(st.integers(1, 500), st.data())
def test_bead_matches_fraction_rule(bsl, data):
    u = data.draw(st.integers(0, bsl))
    cbg = CbgRecord("c", 1.0, bsl, u)
    assert bead_eligible(cbg) == (Fraction(u, bsl) >= Fraction(1, 2))


@given(st.sampled_from(list(QueryStatus)), st.sampled_from(list(OutcomeLabel)), st.integers(0, 5))
def test_classification_is_total(status, outcome, n):
    out = classify_key(status, outcome if status is QueryStatus.TERMINAL else None, n)
    assert isinstance(out, ServiceClass)
    if status is not QueryStatus.TERMINAL:
        assert out is ServiceClass.UNKNOWN
