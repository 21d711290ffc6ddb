"""Intent specifications: the declarative automaton describing what to query.

A spec lists abstract states. Each state carries detectors (OR-ed), each
detector a conjunction of cue predicates over what the page shows, plus the
ordered actions admissible in that state. Terminal states carry an outcome
label and, for plan pages, extraction directives. Successors are never
stored; the runtime finds them by re-observing after each action.
"""
from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

from .errors import DuplicateStateId, IspMismatch, SchemaError, UnknownPrimitive

__all__ = [
    "CueKind", "Primitive", "OutcomeLabel", "PlanField",
    "CuePredicate", "StateDetector", "ActionCall", "ExtractionDirective",
    "AbstractState", "IntentSpec", "Issue", "SpecDelta",
    "tokenize", "parse_spec", "load_spec", "serialize_spec", "spec_to_dict",
    "validate_spec", "spec_diff", "llos", "content_digest",
]

DEFAULT_RETRY_BUDGET = 2
ADDRESS_PLACEHOLDER = "{address}"


class CueKind(str, Enum):
    TEXT_CONTAINS = "TEXT_CONTAINS"
    ELEMENT_PRESENT = "ELEMENT_PRESENT"


class Primitive(str, Enum):
    CLICK = "CLICK"
    TYPEWRITE = "TYPEWRITE"
    KEYPRESS = "KEYPRESS"
    SELECT = "SELECT"
    WAIT = "WAIT"
    FINALIZE = "FINALIZE"


class OutcomeLabel(str, Enum):
    PLANS_PAGE = "PLANS_PAGE"
    SERVICE_CONFIRMED_NO_PLANS = "SERVICE_CONFIRMED_NO_PLANS"
    NO_SERVICE = "NO_SERVICE"
    ACTIVE_SERVICE = "ACTIVE_SERVICE"
    UNKNOWN = "UNKNOWN"


class PlanField(str, Enum):
    PLAN_NAME = "PLAN_NAME"
    PRICE_USD_PER_MONTH = "PRICE_USD_PER_MONTH"
    DOWN_MBPS = "DOWN_MBPS"
    UP_MBPS = "UP_MBPS"
    PRICING_KIND = "PRICING_KIND"


_EDGE_PUNCT = string.punctuation


@lru_cache(maxsize=65536)
def tokenize(text: str) -> Tuple[str, ...]:
    """Case-fold, split on whitespace, strip punctuation at token edges."""
    out = []
    for raw in text.casefold().split():
        tok = raw.strip(_EDGE_PUNCT)
        if tok:
            out.append(tok)
    return tuple(out)


def normalize_element(token: str) -> str:
    return " ".join(token.casefold().split())


@dataclass(frozen=True)
class CuePredicate:
    kind: CueKind
    value: str

    @property
    def tokens(self) -> Tuple[str, ...]:
        if self.kind is CueKind.ELEMENT_PRESENT:
            norm = normalize_element(self.value)
            return (norm,) if norm else ()
        return tokenize(self.value)

    def key(self) -> Tuple[str, str]:
        """Identity under case-insensitive, whitespace-normalized matching."""
        if self.kind is CueKind.ELEMENT_PRESENT:
            return (self.kind.value, normalize_element(self.value))
        return (self.kind.value, " ".join(tokenize(self.value)))


@dataclass(frozen=True)
class StateDetector:
    cues: Tuple[CuePredicate, ...]


@dataclass(frozen=True)
class ActionCall:
    primitive: Primitive
    target: Optional[str] = None
    argument: Optional[str] = None
    retry_budget: int = DEFAULT_RETRY_BUDGET

    def signature(self) -> Tuple[str, Optional[str]]:
        """What an environment keys its transitions on."""
        return (self.primitive.value, normalize_element(self.target) if self.target else None)

    def render_argument(self, address: str) -> Optional[str]:
        if self.argument is None:
            return None
        return self.argument.replace(ADDRESS_PLACEHOLDER, address)


@dataclass(frozen=True)
class ExtractionDirective:
    field: PlanField
    cue_prefix: str


@dataclass(frozen=True)
class AbstractState:
    id: str
    detectors: Tuple[StateDetector, ...]
    actions: Tuple[ActionCall, ...] = ()
    terminal: bool = False
    outcome_label: Optional[OutcomeLabel] = None
    extraction: Optional[Tuple[ExtractionDirective, ...]] = None
    expected_successors: Optional[Tuple[str, ...]] = None

    @property
    def cue_count(self) -> int:
        return sum(len(d.cues) for d in self.detectors)


@dataclass(frozen=True)
class IntentSpec:
    isp_id: str
    states: Tuple[AbstractState, ...]
    initial_state_id: str
    version: int = 1
    authoring_input_chars: int = 0

    def state(self, state_id: str) -> AbstractState:
        for s in self.states:
            if s.id == state_id:
                return s
        raise KeyError(state_id)

    @property
    def state_ids(self) -> List[str]:
        return [s.id for s in self.states]

    @property
    def action_count(self) -> int:
        return sum(len(s.actions) for s in self.states)


@dataclass(frozen=True)
class Issue:
    state_id: Optional[str]
    rule: str
    message: str = ""


@dataclass(frozen=True)
class SpecDelta:
    states_added: int
    states_edited: int
    states_removed: int
    llos_delta: int
    edited_ids: Tuple[str, ...] = ()

    @property
    def states_affected(self) -> int:
        return self.states_added + self.states_edited

    def as_dict(self) -> Dict[str, Any]:
        return {
            "states_added": self.states_added,
            "states_edited": self.states_edited,
            "states_removed": self.states_removed,
            "llos_delta": self.llos_delta,
            "edited_ids": list(self.edited_ids),
        }


# --------------------------------------------------------------------------
# parsing

def _expect(cond, message, path):
    if not cond:
        raise SchemaError(message, path)


def _enum(cls, value, path, exc=SchemaError):
    try:
        return cls(value)
    except ValueError:
        raise exc(f"unknown {cls.__name__} {value!r}", path) from None


def _opt_str(d, key, path):
    v = d.get(key)
    _expect(v is None or isinstance(v, str), f"{key} must be a string", f"{path}.{key}")
    return v


def _parse_cue(obj, path) -> CuePredicate:
    _expect(isinstance(obj, dict), "cue must be an object", path)
    _expect("kind" in obj and "value" in obj, "cue needs kind and value", path)
    _expect(isinstance(obj["value"], str), "cue value must be a string", f"{path}.value")
    return CuePredicate(_enum(CueKind, obj["kind"], f"{path}.kind"), obj["value"])


def _parse_action(obj, path) -> ActionCall:
    _expect(isinstance(obj, dict), "action must be an object", path)
    _expect("primitive" in obj, "action needs a primitive", path)
    prim = obj["primitive"]
    _expect(isinstance(prim, str), "primitive must be a string", f"{path}.primitive")
    primitive = _enum(Primitive, prim.upper(), f"{path}.primitive", UnknownPrimitive)
    budget = obj.get("retry_budget", DEFAULT_RETRY_BUDGET)
    _expect(isinstance(budget, int) and not isinstance(budget, bool),
            "retry_budget must be an integer", f"{path}.retry_budget")
    return ActionCall(primitive, _opt_str(obj, "target", path), _opt_str(obj, "argument", path), budget)


def _parse_state(obj, path) -> AbstractState:
    _expect(isinstance(obj, dict), "state must be an object", path)
    _expect(isinstance(obj.get("id"), str) and obj["id"], "state id must be a non-empty string", f"{path}.id")
    dets = obj.get("detectors", [])
    _expect(isinstance(dets, list), "detectors must be a list", f"{path}.detectors")
    detectors = []
    for i, det in enumerate(dets):
        _expect(isinstance(det, list), "detector must be a list of cues", f"{path}.detectors[{i}]")
        detectors.append(StateDetector(tuple(
            _parse_cue(c, f"{path}.detectors[{i}][{j}]") for j, c in enumerate(det))))
    acts = obj.get("actions", [])
    _expect(isinstance(acts, list), "actions must be a list", f"{path}.actions")
    actions = tuple(_parse_action(a, f"{path}.actions[{i}]") for i, a in enumerate(acts))
    terminal = obj.get("terminal", False)
    _expect(isinstance(terminal, bool), "terminal must be a boolean", f"{path}.terminal")
    label = obj.get("outcome_label")
    label = None if label is None else _enum(OutcomeLabel, label, f"{path}.outcome_label")
    extraction = obj.get("extraction")
    if extraction is not None:
        _expect(isinstance(extraction, list), "extraction must be a list", f"{path}.extraction")
        items = []
        for i, e in enumerate(extraction):
            epath = f"{path}.extraction[{i}]"
            _expect(isinstance(e, dict) and "field" in e and isinstance(e.get("cue_prefix"), str),
                    "extraction directive needs field and cue_prefix", epath)
            items.append(ExtractionDirective(_enum(PlanField, e["field"], f"{epath}.field"), e["cue_prefix"]))
        extraction = tuple(items)
    succ = obj.get("expected_successors")
    if succ is not None:
        _expect(isinstance(succ, list) and all(isinstance(s, str) for s in succ),
                "expected_successors must be a list of state ids", f"{path}.expected_successors")
        succ = tuple(succ)
    return AbstractState(obj["id"], tuple(detectors), actions, terminal, label, extraction, succ)


def parse_spec(document) -> IntentSpec:
    """Build an IntentSpec from a JSON string/bytes or an already-decoded dict.

    Values are taken exactly as written; only structure, duplicate ids, the
    initial-state reference and the action vocabulary are checked here.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", "$") from None
    _expect(isinstance(document, dict), "spec document must be an object", "$")
    for key in ("isp_id", "initial_state", "states"):
        _expect(key in document, f"missing key {key!r}", "$")
    _expect(isinstance(document["isp_id"], str), "isp_id must be a string", "$.isp_id")
    _expect(isinstance(document["states"], list), "states must be a list", "$.states")
    version = document.get("version", 1)
    _expect(isinstance(version, int) and not isinstance(version, bool), "version must be an integer", "$.version")
    chars = document.get("authoring_input_chars", 0)
    _expect(isinstance(chars, int) and chars >= 0, "authoring_input_chars must be a nonnegative integer",
            "$.authoring_input_chars")

    states = []
    seen = set()
    for i, s in enumerate(document["states"]):
        state = _parse_state(s, f"$.states[{i}]")
        if state.id in seen:
            raise DuplicateStateId(f"duplicate state id {state.id!r}", f"$.states[{i}].id")
        seen.add(state.id)
        states.append(state)
    initial = document["initial_state"]
    _expect(initial in seen, f"initial_state {initial!r} names no state", "$.initial_state")
    return IntentSpec(document["isp_id"], tuple(states), initial, version, chars)


def load_spec(path) -> IntentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


# --------------------------------------------------------------------------
# serialization

def _action_to_dict(a: ActionCall) -> Dict[str, Any]:
    d: Dict[str, Any] = {"primitive": a.primitive.value, "retry_budget": a.retry_budget}
    if a.target is not None:
        d["target"] = a.target
    if a.argument is not None:
        d["argument"] = a.argument
    return d


def state_to_dict(s: AbstractState, with_successors: bool = True) -> Dict[str, Any]:
    d: Dict[str, Any] = {
        "id": s.id,
        "detectors": [[{"kind": c.kind.value, "value": c.value} for c in det.cues] for det in s.detectors],
        "actions": [_action_to_dict(a) for a in s.actions],
        "terminal": s.terminal,
    }
    if s.outcome_label is not None:
        d["outcome_label"] = s.outcome_label.value
    if s.extraction is not None:
        d["extraction"] = [{"field": e.field.value, "cue_prefix": e.cue_prefix} for e in s.extraction]
    if with_successors and s.expected_successors is not None:
        d["expected_successors"] = list(s.expected_successors)
    return d


def spec_to_dict(spec: IntentSpec) -> Dict[str, Any]:
    return {
        "isp_id": spec.isp_id,
        "version": spec.version,
        "initial_state": spec.initial_state_id,
        "authoring_input_chars": spec.authoring_input_chars,
        "states": [state_to_dict(s) for s in spec.states],
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def serialize_spec(spec: IntentSpec) -> str:
    """Canonical form: sorted keys, 2-space indent, LF newlines."""
    return canonical_json(spec_to_dict(spec))


def content_digest(spec: IntentSpec) -> str:
    # version, authoring size and successor notes do not affect behaviour
    body = {
        "isp_id": spec.isp_id,
        "initial_state": spec.initial_state_id,
        "states": [state_to_dict(s, with_successors=False) for s in spec.states],
    }
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# validation and diffing

def validate_spec(spec: IntentSpec) -> List[Issue]:
    issues: List[Issue] = []
    ids = [s.id for s in spec.states]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        issues.append(Issue(dup, "DUPLICATE_STATE_ID"))
    if spec.initial_state_id not in ids:
        issues.append(Issue(None, "UNKNOWN_INITIAL_STATE", spec.initial_state_id))
    if not any(s.terminal for s in spec.states):
        issues.append(Issue(None, "NO_TERMINAL_STATE"))

    for s in spec.states:
        if not s.detectors:
            issues.append(Issue(s.id, "EMPTY_DETECTORS"))
        for i, det in enumerate(s.detectors):
            if not det.cues:
                issues.append(Issue(s.id, "EMPTY_DETECTOR", f"detector {i}"))
            for c in det.cues:
                if not c.value.strip() or not c.tokens:
                    issues.append(Issue(s.id, "EMPTY_CUE_VALUE", f"detector {i}"))
        if s.terminal and s.actions:
            issues.append(Issue(s.id, "TERMINAL_HAS_ACTIONS"))
        if not s.terminal and not s.actions:
            issues.append(Issue(s.id, "NO_ACTIONS"))
        if s.terminal != (s.outcome_label is not None):
            issues.append(Issue(s.id, "TERMINAL_LABEL_MISMATCH"))
        if s.extraction is not None:
            if s.outcome_label is not OutcomeLabel.PLANS_PAGE:
                issues.append(Issue(s.id, "EXTRACTION_NOT_ON_PLANS_PAGE"))
            fields = [e.field for e in s.extraction]
            if len(fields) != len(set(fields)):
                issues.append(Issue(s.id, "DUPLICATE_EXTRACTION_FIELD"))
            if any(not e.cue_prefix.strip() for e in s.extraction):
                issues.append(Issue(s.id, "EMPTY_CUE_PREFIX"))
        for j, a in enumerate(s.actions):
            if a.primitive in (Primitive.CLICK, Primitive.SELECT, Primitive.TYPEWRITE) and not a.target:
                issues.append(Issue(s.id, "MISSING_TARGET", f"action {j}"))
            if a.primitive is Primitive.TYPEWRITE and a.argument is None:
                issues.append(Issue(s.id, "MISSING_ARGUMENT", f"action {j}"))
            if a.retry_budget < 1:
                issues.append(Issue(s.id, "NONPOSITIVE_RETRY_BUDGET", f"action {j}"))
    return issues


def llos(spec: IntentSpec) -> int:
    """One line per state identifier plus one per admissible action call."""
    return len(spec.states) + spec.action_count


def _state_body(s: AbstractState) -> str:
    return canonical_json(state_to_dict(s, with_successors=False))


def spec_diff(old: IntentSpec, new: IntentSpec) -> SpecDelta:
    if old.isp_id != new.isp_id:
        raise IspMismatch(f"{old.isp_id!r} != {new.isp_id!r}")
    old_by_id = {s.id: s for s in old.states}
    new_by_id = {s.id: s for s in new.states}
    added = [i for i in new_by_id if i not in old_by_id]
    removed = [i for i in old_by_id if i not in new_by_id]
    edited = tuple(i for i in new_by_id
                   if i in old_by_id and _state_body(old_by_id[i]) != _state_body(new_by_id[i]))
    return SpecDelta(len(added), len(edited), len(removed), llos(new) - llos(old), edited)


def with_states(spec: IntentSpec, states, bump: bool = True) -> IntentSpec:
    """New spec version with the given state tuple."""
    return replace(spec, states=tuple(states), version=spec.version + (1 if bump else 0))
