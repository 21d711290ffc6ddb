"""Abstract-to-concrete instantiation, the compiled-automaton cache, and the
imperative materializer used for LLoC accounting."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import InvalidSpec, UnboundPrimitive
from .intent import (
    AbstractState, ActionCall, ExtractionDirective, IntentSpec, OutcomeLabel,
    Primitive, StateDetector, content_digest, validate_spec,
)
from .observation import Observation, detector_satisfied

DEFAULT_HARNESS_CONSTANT = 692
STATE_COST = 2
PREDICATE_COST = 2
ACTION_COST = 3


# --------------------------------------------------------------------------
# action handlers

def _perform(env, call: ActionCall, address: str) -> None:
    env.perform(call.primitive, call.target, call.render_argument(address))


def _typewrite(env, call: ActionCall, address: str) -> None:
    env.perform(call.primitive, call.target, call.render_argument(address) or "")


HANDLERS: Dict[Primitive, Callable] = {
    Primitive.CLICK: _perform,
    Primitive.TYPEWRITE: _typewrite,
    Primitive.KEYPRESS: _perform,
    Primitive.SELECT: _perform,
    Primitive.WAIT: _perform,
    Primitive.FINALIZE: _perform,
}


@dataclass(frozen=True)
class BoundAction:
    call: ActionCall
    handler: Callable = field(compare=False, repr=False)

    def __call__(self, env, address: str) -> None:
        self.handler(env, self.call, address)


@dataclass(frozen=True)
class ConcreteState:
    id: str
    abstract_ids: Tuple[str, ...]
    detectors: Tuple[StateDetector, ...]
    actions: Tuple[BoundAction, ...]
    terminal: bool
    outcome_label: Optional[OutcomeLabel]
    extraction: Tuple[ExtractionDirective, ...] = ()
    predicates: Tuple[Callable[[Observation], bool], ...] = field(default=(), compare=False, repr=False)

    def matches(self, obs: Observation) -> bool:
        return any(p(obs) for p in self.predicates)

    def to_dict(self):
        return {
            "id": self.id,
            "abstract_ids": list(self.abstract_ids),
            "detectors": [[{"kind": c.kind.value, "value": c.value} for c in d.cues] for d in self.detectors],
            "actions": [{"primitive": a.call.primitive.value, "target": a.call.target,
                         "argument": a.call.argument, "retry_budget": a.call.retry_budget}
                        for a in self.actions],
            "terminal": self.terminal,
            "outcome_label": self.outcome_label.value if self.outcome_label else None,
            "extraction": [{"field": e.field.value, "cue_prefix": e.cue_prefix} for e in self.extraction],
        }


@dataclass(frozen=True)
class ConcreteNFA:
    isp_id: str
    spec_version: int
    states: Tuple[ConcreteState, ...]
    initial: int
    terminals: Tuple[int, ...]
    cache_key: str
    merge_map: Tuple[Tuple[str, int], ...]

    def index_of(self, state_id: str) -> int:
        for i, s in enumerate(self.states):
            if s.id == state_id:
                return i
        raise KeyError(state_id)

    def concrete_for(self, abstract_id: str) -> int:
        return dict(self.merge_map)[abstract_id]

    def to_dict(self):
        return {
            "isp_id": self.isp_id,
            "spec_version": self.spec_version,
            "cache_key": self.cache_key,
            "initial": self.initial,
            "terminals": list(self.terminals),
            "merge_map": {a: i for a, i in self.merge_map},
            "states": [s.to_dict() for s in self.states],
        }


def _bind_predicate(det: StateDetector) -> Callable[[Observation], bool]:
    def predicate(obs: Observation) -> bool:
        return detector_satisfied(det, obs)
    return predicate


def _bind_action(call: ActionCall) -> BoundAction:
    try:
        return BoundAction(call, HANDLERS[call.primitive])
    except KeyError:
        raise UnboundPrimitive(call.primitive) from None


def _identity(s: AbstractState):
    dets = frozenset(frozenset(c.key() for c in d.cues) for d in s.detectors)
    return (dets, s.outcome_label)


def compile_spec(spec: IntentSpec) -> ConcreteNFA:
    """Bind detectors and actions; merge states that observe the same condition.

    Two abstract states merge when their detector sets are identical (as sets
    of cue sets, after case folding) and they carry the same outcome label.
    The merged action list is the order-preserving deduplicated concatenation.
    """
    issues = validate_spec(spec)
    if issues:
        raise InvalidSpec(issues)

    groups: Dict[object, List[AbstractState]] = {}
    for s in spec.states:
        groups.setdefault(_identity(s), []).append(s)

    states: List[ConcreteState] = []
    merge: Dict[str, int] = {}
    for members in groups.values():
        head = members[0]
        actions: List[ActionCall] = []
        extraction: List[ExtractionDirective] = []
        for m in members:
            actions.extend(a for a in m.actions if a not in actions)
            for e in m.extraction or ():
                if all(x.field != e.field for x in extraction):
                    extraction.append(e)
        idx = len(states)
        states.append(ConcreteState(
            id=head.id,
            abstract_ids=tuple(m.id for m in members),
            detectors=head.detectors,
            actions=tuple(_bind_action(a) for a in actions),
            terminal=head.terminal,
            outcome_label=head.outcome_label,
            extraction=tuple(extraction),
            predicates=tuple(_bind_predicate(d) for d in head.detectors),
        ))
        for m in members:
            merge[m.id] = idx

    return ConcreteNFA(
        isp_id=spec.isp_id,
        spec_version=spec.version,
        states=tuple(states),
        initial=merge[spec.initial_state_id],
        terminals=tuple(i for i, s in enumerate(states) if s.terminal),
        cache_key=content_digest(spec),
        merge_map=tuple((s.id, merge[s.id]) for s in spec.states),
    )


class NFACache:
    """Process-level store of compiled automata keyed by content digest.

    Lookups are lock-free reads of a dict; compilation and insertion happen
    under a single writer lock.
    """

    def __init__(self):
        self._store: Dict[str, ConcreteNFA] = {}
        self._lock = threading.Lock()
        self.compiles = 0
        self.hits = 0

    def __len__(self):
        return len(self._store)

    def get_or_compile(self, spec: IntentSpec) -> ConcreteNFA:
        key = content_digest(spec)
        nfa = self._store.get(key)
        if nfa is not None:
            self.hits += 1
            return nfa
        with self._lock:
            nfa = self._store.get(key)
            if nfa is None:
                nfa = compile_spec(spec)
                self.compiles += 1
                self._store[key] = nfa
            else:
                self.hits += 1
        return nfa


def cache_get_or_compile(spec: IntentSpec, cache: NFACache) -> ConcreteNFA:
    return cache.get_or_compile(spec)


# --------------------------------------------------------------------------
# imperative materialization

@dataclass(frozen=True)
class Statement:
    state_id: Optional[str]
    kind: str
    item: int
    text: str

    def describe(self) -> str:
        owner = self.state_id if self.state_id is not None else "-"
        return f"{owner}\t{self.kind}\t{self.item}\t{self.text}"


@dataclass(frozen=True)
class ImperativeProgram:
    statements: Tuple[Statement, ...]
    harness_constant: int

    @property
    def lloc(self) -> int:
        return len(self.statements)

    def per_state(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for st in self.statements:
            if st.state_id is not None:
                counts[st.state_id] = counts.get(st.state_id, 0) + 1
        return counts

    def to_text(self) -> str:
        lines = [st.describe() for st in self.statements]
        lines.append(f"LLOC={self.lloc}")
        return "\n".join(lines) + "\n"


def state_lloc(state: AbstractState) -> int:
    return STATE_COST + PREDICATE_COST * state.cue_count + ACTION_COST * len(state.actions)


def _state_statements(s: AbstractState) -> List[Statement]:
    fn = f"handle_{s.id.lower()}"
    out = [Statement(s.id, "STATE", 0, f"def {fn}(page, address):"),
           Statement(s.id, "STATE", 1, f"matched = False  # {s.id}")]
    n = 0
    for d_i, det in enumerate(s.detectors):
        for c_i, cue in enumerate(det.cues):
            probe = "page.has_text" if cue.kind.value == "TEXT_CONTAINS" else "page.has_element"
            out.append(Statement(s.id, "CUE", n, f"ok_{d_i}_{c_i} = {probe}({cue.value!r})"))
            out.append(Statement(s.id, "CUE", n, f"if not ok_{d_i}_{c_i}: goto next_detector_{d_i}"))
            n += 1
    for a_i, a in enumerate(s.actions):
        target = repr(a.target) if a.target is not None else "None"
        out.append(Statement(s.id, "ACTION", a_i, f"el_{a_i} = page.locate({target})"))
        out.append(Statement(s.id, "ACTION", a_i,
                             f"page.{a.primitive.value.lower()}(el_{a_i}, {a.argument!r})"))
        out.append(Statement(s.id, "ACTION", a_i, f"if not page.changed(): retry({a.retry_budget})"))
    return out


def materialize_imperative(spec: IntentSpec, harness_constant: int = DEFAULT_HARNESS_CONSTANT) -> ImperativeProgram:
    """Expand a spec into straight-line statements: fixed harness, then per state
    two control statements, two per cue predicate, three per action call."""
    issues = validate_spec(spec)
    if issues:
        raise InvalidSpec(issues)
    stmts = [Statement(None, "HARNESS", i, f"harness_{i:04d}()") for i in range(harness_constant)]
    for s in spec.states:
        stmts.extend(_state_statements(s))
    return ImperativeProgram(tuple(stmts), harness_constant)


def lloc(spec: IntentSpec, harness_constant: int = DEFAULT_HARNESS_CONSTANT) -> int:
    return materialize_imperative(spec, harness_constant).lloc
