"""Deterministic intent-spec synthesis by exploring a simulated tool.

Exploration drives sessions through the environment interface only
(observe, perform, snapshot/restore) plus the outcome an author would read
off a final page. States are distinct rendered observations with plan data
stripped; detectors are the smallest cue subsets that no other explored
observation satisfies.
"""
from __future__ import annotations

import itertools
import re
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from .campaign import run_spec
from .intent import (
    AbstractState, ActionCall, CueKind, CuePredicate, ExtractionDirective, IntentSpec, OutcomeLabel,
    PlanField, Primitive, StateDetector, tokenize,
)
from .observation import Observation, cue_satisfied
from .runtime import DEFAULT_STEP_BUDGET
from .sim import AddressClass, AddressRecord, SimBAT

MAX_DETECTOR_CUES = 3
PROBE_KEYS = ("enter", "escape", "tab")

# "Word:" prefixes an author recognises as plan fields
PREFIX_FIELDS = {
    "plan": PlanField.PLAN_NAME,
    "price": PlanField.PRICE_USD_PER_MONTH,
    "download": PlanField.DOWN_MBPS,
    "upload": PlanField.UP_MBPS,
    "pricing": PlanField.PRICING_KIND,
}
_PREFIX = re.compile(r"^\s*([A-Za-z]+):")


class BudgetExceeded(UserWarning):
    code = "BUDGET_EXCEEDED"


@dataclass(frozen=True)
class ExplorationBudget:
    max_pages: int = 64
    probe_addresses: Tuple[Tuple[str, AddressClass], ...] = ()

    @classmethod
    def from_catalog(cls, catalog: Sequence[AddressRecord], max_pages: int = 64) -> "ExplorationBudget":
        """First catalog address of each class present, in class order."""
        probes: Dict[AddressClass, str] = {}
        for rec in catalog:
            probes.setdefault(rec.cls, rec.address)
        ordered = tuple((probes[c], c) for c in AddressClass if c in probes)
        return cls(max_pages, ordered)


class SpecSynthesizer(Protocol):
    """Anything that turns a tool into a spec; model-backed authors plug in here."""

    def synthesize(self, bat: SimBAT, budget: ExplorationBudget) -> IntentSpec: ...


def _field_prefix(fragment: str) -> Optional[Tuple[str, PlanField]]:
    m = _PREFIX.match(fragment)
    if not m:
        return None
    fld = PREFIX_FIELDS.get(m.group(1).casefold())
    return (fragment[:m.end()].strip(), fld) if fld else None


def _strip_payload(obs: Observation) -> Observation:
    kept = tuple(f for f in obs.visible_text if _field_prefix(f) is None)
    return Observation(kept, obs.elements, obs.hidden_text)


def _candidates(obs: Observation) -> List[ActionCall]:
    out = []
    for e in obs.elements:
        out.append(ActionCall(Primitive.TYPEWRITE, e, "{address}"))
        out.append(ActionCall(Primitive.CLICK, e))
        out.append(ActionCall(Primitive.SELECT, e))
    out.extend(ActionCall(Primitive.KEYPRESS, k) for k in PROBE_KEYS)
    out.append(ActionCall(Primitive.WAIT))
    out.append(ActionCall(Primitive.FINALIZE))
    return out


@dataclass
class _Node:
    order: int
    depth: int
    base: Observation
    seen: List[Observation] = field(default_factory=list)
    label: Optional[OutcomeLabel] = None
    actions: List[ActionCall] = field(default_factory=list)
    successors: List[str] = field(default_factory=list)
    prefixes: Dict[PlanField, str] = field(default_factory=dict)
    expanded: bool = False


def _cue_pool(node: _Node) -> List[CuePredicate]:
    words = sorted({t for f in node.base.visible_text for t in tokenize(f) if not any(ch.isdigit() for ch in t)})
    cues = [CuePredicate(CueKind.TEXT_CONTAINS, w) for w in words]
    cues += [CuePredicate(CueKind.ELEMENT_PRESENT, e) for e in sorted(node.base.elements)]
    return sorted(cues, key=lambda c: c.key())


def _holds(cues, obs: Observation) -> bool:
    return all(cue_satisfied(c, obs) for c in cues)


def _distinctive(node: _Node, others: Sequence[_Node]) -> Tuple[CuePredicate, ...]:
    """Smallest cue subset (at most three) that every observation of this
    state satisfies and no observation of any other state does; ties go to
    the lexicographically first subset. Falls back to every cue."""
    pool = _cue_pool(node)
    other_obs = [o for n in others for o in n.seen]
    for size in range(1, MAX_DETECTOR_CUES + 1):
        for combo in itertools.combinations(pool, size):
            if all(_holds(combo, o) for o in node.seen) and not any(_holds(combo, o) for o in other_obs):
                return combo
    return tuple(pool)


def _explore(bat: SimBAT, budget: ExplorationBudget) -> Tuple[Dict[str, _Node], Optional[str], bool]:
    nodes: Dict[str, _Node] = {}
    visited = set()
    exceeded = False
    queue = deque()
    for address, cls in budget.probe_addresses:
        sess = bat.session(address, cls)
        queue.append((sess, address, cls, sess.snapshot(), 0))
    initial = None
    while queue:
        sess, address, cls, token, depth = queue.popleft()
        sess.restore(token)
        obs = sess.observe()
        base = _strip_payload(obs)
        sig = base.digest()
        if (sig, cls) in visited:
            continue
        visited.add((sig, cls))
        if sig not in nodes:
            if len(nodes) >= budget.max_pages:
                exceeded = True
                continue
            nodes[sig] = _Node(len(nodes), depth, base)
        node = nodes[sig]
        initial = initial or sig
        if obs not in node.seen:
            node.seen.append(obs)
        label = sess.outcome_hint()
        if label is not None:
            node.label = label
            for frag in obs.visible_text:
                hit = _field_prefix(frag)
                if hit is not None:
                    node.prefixes.setdefault(hit[1], hit[0])
            continue
        node.expanded = True
        for cand in _candidates(obs):
            sess.restore(token)
            sess.perform(cand.primitive, cand.target, cand.render_argument(address))
            nsig = _strip_payload(sess.observe()).digest()
            if nsig == sig:
                continue
            if nsig in nodes and nodes[nsig].depth <= depth:
                continue  # back edge
            if cand not in node.actions:
                node.actions.append(cand)
            if nsig not in node.successors:
                node.successors.append(nsig)
            queue.append((sess, address, cls, sess.snapshot(), depth + 1))
    return nodes, initial, exceeded


def _names(nodes: Dict[str, _Node]) -> Dict[str, str]:
    names = {}
    used = set()
    step = 0
    for sig, node in sorted(nodes.items(), key=lambda kv: kv[1].order):
        if node.label is not None:
            base = node.label.value
            name, i = base, 2
            while name in used:
                name, i = f"{base}_{i}", i + 1
        else:
            step += 1
            name = f"STAGE_{step:02d}"
        used.add(name)
        names[sig] = name
    return names


def infer_spec(bat: SimBAT, budget: ExplorationBudget) -> IntentSpec:
    """Explore ``bat`` breadth-first from every probe and emit a spec.

    Warns with :class:`BudgetExceeded` and returns a partial spec when more
    than ``budget.max_pages`` distinct observations exist; unexpanded
    non-terminal states are left out of a partial spec.
    """
    if not budget.probe_addresses:
        raise ValueError("exploration needs at least one probe address")
    nodes, initial, exceeded = _explore(bat, budget)
    if exceeded:
        warnings.warn(f"{bat.isp_id}: more than {budget.max_pages} distinct pages; spec is partial",
                      BudgetExceeded, stacklevel=2)
    keep = {sig: n for sig, n in nodes.items() if n.label is not None or (n.expanded and n.actions)}
    names = _names(keep)
    states = []
    for sig, node in sorted(keep.items(), key=lambda kv: kv[1].order):
        others = [n for s, n in nodes.items() if s != sig]
        det = StateDetector(_distinctive(node, others))
        if node.label is not None:
            extraction = None
            if node.label is OutcomeLabel.PLANS_PAGE and node.prefixes:
                extraction = tuple(ExtractionDirective(f, node.prefixes[f]) for f in PlanField if f in node.prefixes)
            states.append(AbstractState(names[sig], (det,), (), True, node.label, extraction))
        else:
            succ = tuple(names[s] for s in node.successors if s in names)
            states.append(AbstractState(names[sig], (det,), tuple(node.actions), expected_successors=succ or None))
    init = names.get(initial) if initial else None
    return IntentSpec(bat.isp_id, tuple(states), init or (states[0].id if states else ""), 1, 0)


class ExplorationSynthesizer:
    def synthesize(self, bat: SimBAT, budget: ExplorationBudget) -> IntentSpec:
        return infer_spec(bat, budget)


@dataclass(frozen=True)
class FidelityRow:
    address: str
    key_a: Tuple[str, Optional[str]]
    key_b: Tuple[str, Optional[str]]

    @property
    def agree(self) -> bool:
        return self.key_a == self.key_b


def fidelity_rows(spec_a: IntentSpec, spec_b: IntentSpec, bat: SimBAT, catalog: Sequence[AddressRecord],
                  step_budget: int = DEFAULT_STEP_BUDGET) -> List[FidelityRow]:
    ra = run_spec(spec_a, bat, catalog, step_budget)
    rb = run_spec(spec_b, bat, catalog, step_budget)
    return [FidelityRow(rec.address, a.key, b.key) for rec, a, b in zip(catalog, ra, rb)]


def fidelity_check(spec_a: IntentSpec, spec_b: IntentSpec, bat: SimBAT, catalog: Sequence[AddressRecord],
                   step_budget: int = DEFAULT_STEP_BUDGET) -> float:
    """Fraction of catalog addresses where both specs end in the same
    (status, outcome) under identical runtime semantics."""
    rows = fidelity_rows(spec_a, spec_b, bat, catalog, step_budget)
    if not rows:
        return 1.0
    return sum(r.agree for r in rows) / len(rows)
