"""Scripted interface churn and the spec repairs that answer it.

Each case takes a generated tool, applies one mutation, and derives the
repair an author would make from the mutation itself: an inserted stage
gets one new state, an edited stage gets its state's action (and the element
cue that went with it) rewritten. Cosmetic relabels need no repair.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

from .fleet import FleetEntry, _fresh_token, generate_fleet
from .intent import (
    AbstractState, ActionCall, CueKind, CuePredicate, IntentSpec, Primitive, StateDetector,
    normalize_element, tokenize, with_states,
)
from .observation import Observation, detector_satisfied
from .sim import MutationKind, MutationOp, Page, SimBAT, cookie_popup, mutate

DEFAULT_MIX = (0.4, 0.4, 0.2)
STRUCTURAL_KINDS = (MutationKind.INSERT_STAGE, MutationKind.EDIT_STAGE, MutationKind.INSERT_AND_EDIT)


@dataclass(frozen=True)
class ChurnCase:
    entry: FleetEntry
    op: MutationOp
    mutated: SimBAT
    repair: IntentSpec
    # single-component repairs of a two-stage fix, for minimality checks
    partial_repairs: Tuple[IntentSpec, ...] = ()

    @property
    def kind(self) -> MutationKind:
        return self.op.kind


def _page_observation(page: Page) -> Observation:
    return Observation.build(page.visible_text, page.elements, page.hidden_text)


def state_for_page(spec: IntentSpec, page: Page) -> AbstractState:
    """The spec state whose detectors recognise ``page`` (ids win ties)."""
    obs = _page_observation(page)
    hits = [s for s in spec.states if any(detector_satisfied(d, obs) for d in s.detectors)]
    if not hits:
        raise KeyError(f"no state recognises page {page.id!r}")
    for s in hits:
        if s.id == page.id:
            return s
    return hits[0]


def _call(sig) -> ActionCall:
    prim = Primitive(sig["primitive"].upper())
    arg = "{address}" if prim is Primitive.TYPEWRITE else None
    return ActionCall(prim, sig.get("target"), arg)


def _repair_insert(spec: IntentSpec, params) -> IntentSpec:
    page = params["page"]
    exit_call = _call(params["exit"])
    cues = [CuePredicate(CueKind.TEXT_CONTAINS, page["visible_text"][0])]
    if exit_call.target:
        cues.append(CuePredicate(CueKind.ELEMENT_PRESENT, exit_call.target))
    new = AbstractState(page["id"], (StateDetector(tuple(cues)),), (exit_call,))
    states = list(spec.states)
    first_terminal = next((i for i, s in enumerate(states) if s.terminal), len(states))
    states.insert(first_terminal, new)
    out = with_states(spec, states)
    return out


def _repair_edit(spec: IntentSpec, bat_after: SimBAT, params, bat_before: SimBAT) -> IntentSpec:
    old_page = bat_before.page(params["page"])
    target_state = state_for_page(spec, old_page)
    old_sig = _call(params["old"]).signature()
    new_call = _call(params["new"])
    new_elements = {normalize_element(e) for e in bat_after.page(params["page"]).elements}

    actions = tuple(new_call if a.signature() == old_sig else a for a in target_state.actions)
    detectors = []
    for det in target_state.detectors:
        cues = []
        for c in det.cues:
            if c.kind is CueKind.ELEMENT_PRESENT and normalize_element(c.value) not in new_elements:
                if new_call.target:
                    cues.append(CuePredicate(CueKind.ELEMENT_PRESENT, new_call.target))
                continue
            cues.append(c)
        detectors.append(StateDetector(tuple(cues)))
    edited = replace(target_state, actions=actions, detectors=tuple(detectors))
    return with_states(spec, [edited if s.id == target_state.id else s for s in spec.states])


def scripted_repair(spec: IntentSpec, bat_before: SimBAT, op: MutationOp) -> IntentSpec:
    """Minimal spec change answering ``op`` applied to ``bat_before``."""
    if op.kind is MutationKind.RELABEL_COSMETIC:
        return spec
    if op.kind is MutationKind.INSERT_STAGE:
        out = _repair_insert(spec, op.params)
        if op.params.get("at", {}).get("before") == bat_before.entry_page_id:
            out = replace(out, initial_state_id=op.params["page"]["id"])
        return out
    if op.kind is MutationKind.EDIT_STAGE:
        return _repair_edit(spec, mutate(bat_before, op), op.params, bat_before)
    if op.kind is MutationKind.INSERT_AND_EDIT:
        ins = MutationOp(MutationKind.INSERT_STAGE, op.params["insert"])
        mid_bat = mutate(bat_before, ins)
        mid_spec = scripted_repair(spec, bat_before, ins)
        return _repair_edit(mid_spec, mutate(mid_bat, MutationOp(MutationKind.EDIT_STAGE, op.params["edit"])),
                            op.params["edit"], mid_bat)
    raise ValueError(op.kind)


def partial_repairs(spec: IntentSpec, bat_before: SimBAT, op: MutationOp) -> Tuple[IntentSpec, ...]:
    """For a two-stage mutation, each half of the scripted repair on its own."""
    if op.kind is not MutationKind.INSERT_AND_EDIT:
        return ()
    ins = MutationOp(MutationKind.INSERT_STAGE, op.params["insert"])
    insert_only = scripted_repair(spec, bat_before, ins)
    mid_bat = mutate(bat_before, ins)
    full_bat = mutate(mid_bat, MutationOp(MutationKind.EDIT_STAGE, op.params["edit"]))
    edit_only = _repair_edit(spec, full_bat, op.params["edit"], mid_bat)
    return (insert_only, edit_only)


# --------------------------------------------------------------------------
# mutation generation

def _bat_tokens(bat: SimBAT) -> set:
    out = set()
    for p in bat.pages:
        for frag in p.visible_text + p.hidden_text:
            out.update(tokenize(frag))
        out.update(normalize_element(e) for e in p.elements)
    return out


def _insert_params(rng: random.Random, bat: SimBAT, taken: set, serial: int) -> dict:
    dest = rng.choice([p.id for p in bat.pages])
    page_id = f"INSERTED_{serial}"
    words = [_fresh_token(rng, taken) for _ in range(3)]
    accept = _fresh_token(rng, taken)
    if rng.random() < 0.4:
        # consent popup whose reject loops back onto itself
        return cookie_popup(page_id, dest, " ".join(words), accept, f"{accept}_reject")
    return {"at": {"before": dest},
            "page": {"id": page_id, "visible_text": [" ".join(words)], "elements": [accept]},
            "exit": {"primitive": "CLICK", "target": accept}}


def _edit_params(rng: random.Random, bat: SimBAT, taken: set, exclude: Sequence[str] = ()) -> dict:
    candidates = [p for p in bat.pages if p.transitions and p.id not in exclude]
    page = rng.choice(candidates)
    t = page.transitions[0]
    old = {"primitive": t.primitive.value}
    if t.target is not None:
        old["target"] = t.target
    return {"page": page.id, "old": old, "new": {"primitive": "CLICK", "target": _fresh_token(rng, taken)}}


def _cosmetic_params(rng: random.Random, bat: SimBAT) -> dict:
    page = rng.choice([p for p in bat.pages if p.visible_text])
    tok = rng.choice(tokenize(page.visible_text[0]))
    styled = tok.upper() if rng.random() < 0.5 else tok.title()
    return {"tokens": {tok: styled}, "pages": [page.id]}


def make_mutation(rng: random.Random, kind: MutationKind, bat: SimBAT, serial: int = 0) -> MutationOp:
    taken = _bat_tokens(bat)
    if kind is MutationKind.INSERT_STAGE:
        return MutationOp(kind, _insert_params(rng, bat, taken, serial))
    if kind is MutationKind.EDIT_STAGE:
        return MutationOp(kind, _edit_params(rng, bat, taken))
    if kind is MutationKind.INSERT_AND_EDIT:
        ins = _insert_params(rng, bat, taken, serial)
        mid = mutate(bat, MutationOp(MutationKind.INSERT_STAGE, ins))
        return MutationOp(kind, {"insert": ins, "edit": _edit_params(rng, mid, taken, (ins["page"]["id"],))})
    return MutationOp(kind, _cosmetic_params(rng, bat))


def _apportion(total: int, mix: Sequence[float]) -> List[int]:
    """Largest-remainder split of ``total`` cases across the mix."""
    s = sum(mix)
    if s <= 0 or any(m < 0 for m in mix):
        raise ValueError("mix must be nonnegative with a positive sum")
    raw = [total * m / s for m in mix]
    counts = [math.floor(r) for r in raw]
    order = sorted(range(len(mix)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:total - sum(counts)]:
        counts[i] += 1
    return counts


def churn_suite(seed: int = 1, n_structural: int = 56, mix: Sequence[float] = DEFAULT_MIX,
                n_cosmetic: int = 8, fleet_size: int = 8,
                fleet: Optional[List[FleetEntry]] = None) -> List[ChurnCase]:
    """Build the scripted churn cases.

    ``mix`` splits the structural cases across insert / edit / insert+edit.
    Every case starts from an unmodified fleet tool.
    """
    fleet = fleet if fleet is not None else generate_fleet(seed, fleet_size)
    rng = random.Random(seed)
    kinds: List[MutationKind] = []
    for kind, count in zip(STRUCTURAL_KINDS, _apportion(n_structural, mix)):
        kinds.extend([kind] * count)
    kinds.extend([MutationKind.RELABEL_COSMETIC] * n_cosmetic)
    cases = []
    for i, kind in enumerate(kinds):
        entry = fleet[i % len(fleet)]
        op = make_mutation(rng, kind, entry.bat, i)
        cases.append(ChurnCase(entry, op, mutate(entry.bat, op), scripted_repair(entry.spec, entry.bat, op),
                               partial_repairs(entry.spec, entry.bat, op)))
    return cases
