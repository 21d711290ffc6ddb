"""Observe-match-act execution of a compiled automaton against an environment.

The environment is anything with ``observe() -> Observation`` and
``perform(primitive, target, text)``. The loop never predicts successors: it
acts once, then observes again and re-matches.
"""
from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from .compiler import BoundAction, ConcreteNFA, ConcreteState
from .errors import ExtractionEmpty
from .intent import ActionCall, OutcomeLabel, PlanField, Primitive
from .observation import Observation, detector_visible
from .records import PlanRecord, PricingKind

log = logging.getLogger(__name__)

DEFAULT_STEP_BUDGET = 64


class Environment(Protocol):
    def observe(self) -> Observation: ...

    def perform(self, primitive: Primitive, target: Optional[str], text: Optional[str]) -> None: ...


class QueryStatus(str, Enum):
    TERMINAL = "TERMINAL"
    UNDERSPECIFIED = "UNDERSPECIFIED"
    AMBIGUOUS = "AMBIGUOUS"
    NO_ADMISSIBLE_ACTION = "NO_ADMISSIBLE_ACTION"
    STEP_BUDGET_EXHAUSTED = "STEP_BUDGET_EXHAUSTED"
    ENV_FAULT = "ENV_FAULT"


@dataclass(frozen=True)
class StepRecord:
    observation_digest: str
    matched_state_ids: Tuple[str, ...]
    refined_state_id: Optional[str] = None
    action: Optional[ActionCall] = None

    @property
    def conflict(self) -> bool:
        return len(self.matched_state_ids) > 1

    def to_dict(self):
        a = self.action
        return {
            "observation": self.observation_digest,
            "matched": list(self.matched_state_ids),
            "refined": self.refined_state_id,
            "conflict": self.conflict,
            "action": None if a is None else {"primitive": a.primitive.value, "target": a.target,
                                              "argument": a.argument},
        }


@dataclass(frozen=True)
class QueryResult:
    isp_id: str
    address: str
    status: QueryStatus
    outcome_label: Optional[OutcomeLabel] = None
    plans: Tuple[PlanRecord, ...] = ()
    trace: Tuple[StepRecord, ...] = ()
    snapshot: Optional[Observation] = None
    error: Optional[str] = None

    @property
    def steps_taken(self) -> int:
        return len(self.trace)

    @property
    def key(self) -> Tuple[str, Optional[str]]:
        """(status, outcome) pair used for update detection and fidelity."""
        return (self.status.value, self.outcome_label.value if self.outcome_label else None)

    def to_dict(self):
        return {
            "isp_id": self.isp_id,
            "address": self.address,
            "status": self.status.value,
            "outcome_label": self.outcome_label.value if self.outcome_label else None,
            "plans": [p.to_dict() for p in self.plans],
            "steps_taken": self.steps_taken,
            "trace": [s.to_dict() for s in self.trace],
            "snapshot": self.snapshot.to_dict() if self.snapshot else None,
            "error": self.error,
        }


# --------------------------------------------------------------------------
# matching

def match_states(nfa: ConcreteNFA, obs: Observation) -> Tuple[str, ...]:
    """Ids of every state with at least one fully satisfied detector, in
    automaton order."""
    return tuple(s.id for s in nfa.states if s.matches(obs))


def _visible_survivors(nfa: ConcreteNFA, candidates: Sequence[str], obs: Observation) -> List[str]:
    out = []
    for sid in candidates:
        state = nfa.states[nfa.index_of(sid)]
        if any(detector_visible(d, obs) for d in state.detectors):
            out.append(sid)
    return out


def refine_match(nfa: ConcreteNFA, candidates: Sequence[str], obs: Observation) -> Optional[str]:
    """Re-match conflicting candidates on visibly rendered text alone.

    Returns the single surviving state id, or ``None`` when refinement cannot
    separate the candidates (ambiguous).
    """
    survivors = _visible_survivors(nfa, candidates, obs)
    return survivors[0] if len(survivors) == 1 else None


def select_action(state: ConcreteState, history: Counter) -> Optional[BoundAction]:
    """First action in declaration order with retry budget left, or ``None``."""
    for i, action in enumerate(state.actions):
        key = (state.id, i)
        if history[key] < action.call.retry_budget:
            history[key] += 1
            return action
    return None


# --------------------------------------------------------------------------
# extraction

_NUMBER = re.compile(r"\d+(?:,\d{3})*(?:\.\d+)?")


def _strip_prefix(fragment: str, prefix: str) -> Optional[str]:
    folded = fragment.casefold()
    p = " ".join(prefix.casefold().split())
    if not p or not folded.startswith(p):
        return None
    rest = fragment[len(p):] if len(folded) == len(fragment) else folded[len(p):]
    return rest.strip()


def _number(text: str) -> Optional[float]:
    m = _NUMBER.search(text)
    return float(m.group(0).replace(",", "")) if m else None


def _value(fld: PlanField, raw: str):
    if fld is PlanField.PLAN_NAME:
        return raw or None
    if fld is PlanField.PRICING_KIND:
        head = raw.split()[0].strip(".,;:").upper() if raw.split() else ""
        return PricingKind(head) if head in PricingKind.__members__ else None
    return _number(raw)


_FIELD_ATTR = {
    PlanField.PLAN_NAME: "plan_name",
    PlanField.PRICE_USD_PER_MONTH: "price",
    PlanField.DOWN_MBPS: "down",
    PlanField.UP_MBPS: "up",
    PlanField.PRICING_KIND: "pricing_kind",
}


def extract(state: ConcreteState, obs: Observation, isp_id: str = "", address: str = "") -> List[PlanRecord]:
    """Read plan blocks off a plans page.

    Fragments are scanned in page order; a fragment starting with a
    directive's prefix fills that field. Seeing a field that the current
    block already holds starts a new block. Fields never seen stay absent.
    """
    if state.outcome_label is not OutcomeLabel.PLANS_PAGE:
        raise ValueError(f"extract called on non-plans state {state.id}")
    blocks: List[Dict[PlanField, object]] = []
    current: Dict[PlanField, object] = {}
    for frag in obs.visible_text:
        for directive in state.extraction:
            rest = _strip_prefix(frag, directive.cue_prefix)
            if rest is None:
                continue
            if directive.field in current:
                blocks.append(current)
                current = {}
            current[directive.field] = _value(directive.field, rest)
            break
    if current:
        blocks.append(current)
    if not blocks:
        raise ExtractionEmpty(f"no plan blocks found on {state.id}")
    return [PlanRecord(isp_id=isp_id, address=address,
                       **{_FIELD_ATTR[f]: v for f, v in b.items()}) for b in blocks]


# --------------------------------------------------------------------------
# the loop

def execute_query(nfa: ConcreteNFA, address: str, env: Environment,
                  step_budget: int = DEFAULT_STEP_BUDGET) -> QueryResult:
    history: Counter = Counter()
    trace: List[StepRecord] = []

    def done(status, **kw):
        return QueryResult(nfa.isp_id, address, status, trace=tuple(trace), **kw)

    for _ in range(step_budget):
        try:
            obs = env.observe()
        except Exception as exc:  # adapter failure aborts this query only
            return done(QueryStatus.ENV_FAULT, error=f"observe: {exc}")
        digest = obs.digest()
        matched = match_states(nfa, obs)

        if not matched:
            trace.append(StepRecord(digest, ()))
            return done(QueryStatus.UNDERSPECIFIED, snapshot=obs)

        refined = None
        if len(matched) == 1:
            chosen = matched[0]
        else:
            refined = refine_match(nfa, matched, obs)
            chosen = refined
            if chosen is None:
                pool = _visible_survivors(nfa, matched, obs) or list(matched)
                terminals = [s for s in pool if nfa.states[nfa.index_of(s)].terminal]
                if len(terminals) == 1:
                    chosen = refined = terminals[0]
            if chosen is None:
                trace.append(StepRecord(digest, matched))
                return done(QueryStatus.AMBIGUOUS, snapshot=obs)

        state = nfa.states[nfa.index_of(chosen)]
        if state.terminal:
            trace.append(StepRecord(digest, matched, refined))
            plans: List[PlanRecord] = []
            error = None
            if state.outcome_label is OutcomeLabel.PLANS_PAGE and state.extraction:
                try:
                    plans = extract(state, obs, nfa.isp_id, address)
                except ExtractionEmpty as exc:
                    log.warning("%s %r: %s", nfa.isp_id, address, exc)
                    error = exc.code
            return done(QueryStatus.TERMINAL, outcome_label=state.outcome_label,
                        plans=tuple(plans), error=error)

        action = select_action(state, history)
        trace.append(StepRecord(digest, matched, refined, action.call if action else None))
        if action is None:
            return done(QueryStatus.NO_ADMISSIBLE_ACTION)
        try:
            action(env, address)
        except Exception as exc:
            return done(QueryStatus.ENV_FAULT, error=f"perform: {exc}")

    return done(QueryStatus.STEP_BUDGET_EXHAUSTED)
