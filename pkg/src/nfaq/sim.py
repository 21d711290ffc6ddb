"""Deterministic simulator of provider availability tools.

A SimBAT is a page graph. Each page shows text fragments and element tokens;
transitions fire on an action signature (primitive, target) and may be
guarded by the session's address class. Actions with no matching transition
do nothing, like a click on a stale selector.
"""
from __future__ import annotations

import json
import string
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .errors import InvalidInsertionPoint, SchemaError, UnknownPage
from .intent import ActionCall, OutcomeLabel, Primitive, normalize_element
from .observation import Observation
from .records import PricingKind

ALL = "ALL"


class AddressClass(str, Enum):
    SERVICEABLE_PLANS = "SERVICEABLE_PLANS"
    SERVICEABLE_NO_PLANS = "SERVICEABLE_NO_PLANS"
    NO_SERVICE = "NO_SERVICE"
    UNKNOWN = "UNKNOWN"
    ACTIVE_SERVICE = "ACTIVE_SERVICE"


class MutationKind(str, Enum):
    INSERT_STAGE = "INSERT_STAGE"
    EDIT_STAGE = "EDIT_STAGE"
    INSERT_AND_EDIT = "INSERT_AND_EDIT"
    RELABEL_COSMETIC = "RELABEL_COSMETIC"


STAGE_COUNT = {
    MutationKind.INSERT_STAGE: 1,
    MutationKind.EDIT_STAGE: 1,
    MutationKind.INSERT_AND_EDIT: 2,
    MutationKind.RELABEL_COSMETIC: 0,
}

# how plan payload fields are rendered on a plans page
PLAN_PREFIXES = {
    "name": "Plan:",
    "price": "Price:",
    "down": "Download:",
    "up": "Upload:",
    "pricing_kind": "Pricing:",
}


@dataclass(frozen=True)
class Transition:
    primitive: Primitive
    target: Optional[str]
    to: str
    guard: str = ALL

    @property
    def signature(self) -> Tuple[str, Optional[str]]:
        return (self.primitive.value, normalize_element(self.target) if self.target else None)

    def to_dict(self):
        return {"primitive": self.primitive.value, "target": self.target, "guard": self.guard, "to": self.to}


@dataclass(frozen=True)
class PlanBlock:
    name: str
    price: float
    down: float
    up: float
    pricing_kind: PricingKind = PricingKind.REGULAR

    def render(self) -> List[str]:
        p = PLAN_PREFIXES
        return [f"{p['name']} {self.name}",
                f"{p['price']} ${self.price:.2f}/mo",
                f"{p['down']} {self.down:g} Mbps",
                f"{p['up']} {self.up:g} Mbps",
                f"{p['pricing_kind']} {self.pricing_kind.value.lower()}"]

    def to_dict(self):
        return {"name": self.name, "price": self.price, "down": self.down, "up": self.up,
                "pricing_kind": self.pricing_kind.value}


@dataclass(frozen=True)
class Page:
    id: str
    visible_text: Tuple[str, ...] = ()
    elements: Tuple[str, ...] = ()
    transitions: Tuple[Transition, ...] = ()
    terminal_label: Optional[OutcomeLabel] = None
    plan_payloads: Tuple[Tuple[str, Tuple[PlanBlock, ...]], ...] = ()
    hidden_text: Tuple[str, ...] = ()

    @property
    def terminal(self) -> bool:
        return self.terminal_label is not None

    def payload_for(self, cls: str) -> Tuple[PlanBlock, ...]:
        fallback: Tuple[PlanBlock, ...] = ()
        for key, blocks in self.plan_payloads:
            if key == cls:
                return blocks
            if key == ALL:
                fallback = blocks
        return fallback

    def to_dict(self):
        d = {"id": self.id, "visible_text": list(self.visible_text), "elements": list(self.elements),
             "transitions": [t.to_dict() for t in self.transitions]}
        if self.hidden_text:
            d["hidden_text"] = list(self.hidden_text)
        if self.terminal_label is not None:
            d["terminal_label"] = self.terminal_label.value
        if self.plan_payloads:
            d["plan_payloads"] = {k: [b.to_dict() for b in v] for k, v in self.plan_payloads}
        return d


@dataclass(frozen=True)
class SimBAT:
    isp_id: str
    pages: Tuple[Page, ...]
    entry_page_id: str
    revision: int = 0
    _index: Dict[str, Page] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {p.id: p for p in self.pages})

    def page(self, page_id: str) -> Page:
        try:
            return self._index[page_id]
        except KeyError:
            raise UnknownPage(page_id) from None

    def has_page(self, page_id: str) -> bool:
        return page_id in self._index

    def session(self, address: str, cls) -> "Session":
        return Session(self, address, AddressClass(cls).value)

    def to_dict(self):
        return {"isp_id": self.isp_id, "entry_page": self.entry_page_id, "revision": self.revision,
                "pages": [p.to_dict() for p in self.pages]}


@dataclass(frozen=True)
class AddressRecord:
    address: str
    cls: AddressClass
    cbg_id: Optional[str] = None

    def to_dict(self):
        d = {"address": self.address, "class": self.cls.value}
        if self.cbg_id is not None:
            d["cbg_id"] = self.cbg_id
        return d


@dataclass(frozen=True)
class MutationOp:
    kind: MutationKind
    params: Mapping

    @property
    def stage_count(self) -> int:
        return STAGE_COUNT[self.kind]

    def to_dict(self):
        return {"kind": self.kind.value, "params": _plain(self.params)}

    @classmethod
    def from_dict(cls, d) -> "MutationOp":
        return cls(MutationKind(d["kind"]), d.get("params", {}))


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# sessions: render / act

def render(bat: SimBAT, session: "Session") -> Observation:
    page = bat.page(session.page_id)
    text = list(page.visible_text)
    if page.terminal_label is OutcomeLabel.PLANS_PAGE:
        for block in page.payload_for(session.cls):
            text.extend(block.render())
    return Observation.build(text, page.elements, page.hidden_text)


def _transition_for(page: Page, primitive: Primitive, target: Optional[str], cls: str) -> Optional[Transition]:
    sig = (primitive.value, normalize_element(target) if target else None)
    fallback = None
    for t in page.transitions:
        if t.signature != sig:
            continue
        if t.guard == cls:
            return t
        if t.guard == ALL and fallback is None:
            fallback = t
    return fallback


def apply_action(bat: SimBAT, session: "Session", action: ActionCall) -> None:
    session.perform(action.primitive, action.target, action.render_argument(session.address))


class Session:
    """Per-query mutable position in a SimBAT. Never shared between queries."""

    def __init__(self, bat: SimBAT, address: str, cls: str):
        self.bat = bat
        self.address = address
        self.cls = cls
        self.page_id = bat.entry_page_id
        self.actions_performed = 0

    def observe(self) -> Observation:
        return render(self.bat, self)

    def perform(self, primitive, target=None, text=None) -> None:
        self.actions_performed += 1
        page = self.bat.page(self.page_id)
        if page.terminal:
            return
        t = _transition_for(page, Primitive(primitive), target, self.cls)
        if t is not None:
            self.page_id = t.to

    # exploration support: opaque checkpoints, and the outcome a human
    # author would read off a final page
    def snapshot(self):
        return self.page_id

    def restore(self, token) -> None:
        self.page_id = token

    def outcome_hint(self) -> Optional[OutcomeLabel]:
        return self.bat.page(self.page_id).terminal_label


# --------------------------------------------------------------------------
# structure checks

def reachable_pages(bat: SimBAT, cls: str) -> Set[str]:
    cls = AddressClass(cls).value
    seen = {bat.entry_page_id}
    queue = deque([bat.entry_page_id])
    while queue:
        page = bat.page(queue.popleft())
        for t in page.transitions:
            if t.guard not in (ALL, cls):
                continue
            # a guarded sibling with the same signature shadows the ALL branch
            if t.guard == ALL and _transition_for(page, t.primitive, t.target, cls) is not t:
                continue
            if t.to not in seen:
                seen.add(t.to)
                queue.append(t.to)
    return seen


def validate_bat(bat: SimBAT) -> List[str]:
    problems = []
    ids = [p.id for p in bat.pages]
    if len(ids) != len(set(ids)):
        problems.append("duplicate page ids")
    if not bat.has_page(bat.entry_page_id):
        problems.append(f"entry page {bat.entry_page_id!r} missing")
        return problems
    for p in bat.pages:
        for t in p.transitions:
            if not bat.has_page(t.to):
                problems.append(f"{p.id}: transition to unknown page {t.to!r}")
            if t.guard != ALL and t.guard not in AddressClass.__members__:
                problems.append(f"{p.id}: unknown guard {t.guard!r}")
        if p.terminal and p.transitions:
            problems.append(f"{p.id}: terminal page has transitions")
        if p.plan_payloads and p.terminal_label is not OutcomeLabel.PLANS_PAGE:
            problems.append(f"{p.id}: plan payloads on a non-plans page")
    if problems:
        return problems
    for cls in AddressClass:
        if not any(bat.page(pid).terminal for pid in reachable_pages(bat, cls)):
            problems.append(f"class {cls.value} cannot reach a terminal page")
    return problems


# --------------------------------------------------------------------------
# mutation

def _sig(obj) -> Tuple[Primitive, Optional[str]]:
    return Primitive(obj["primitive"].upper()), obj.get("target")


def _page_from(obj) -> Page:
    return Page(obj["id"], tuple(obj.get("visible_text", ())), tuple(obj.get("elements", ())),
                hidden_text=tuple(obj.get("hidden_text", ())))


def _insert_stage(bat: SimBAT, params) -> SimBAT:
    new = _page_from(params["page"])
    if bat.has_page(new.id):
        raise InvalidInsertionPoint(f"page id {new.id!r} already exists")
    at = params.get("at", {})
    exit_prim, exit_target = _sig(params["exit"])

    if "before" in at:
        dest = at["before"]
        if not bat.has_page(dest):
            raise UnknownPage(dest)
        redirect = lambda src, i, t: t.to == dest  # noqa: E731
    elif "edge" in at:
        src_id, idx = at["edge"]
        if not bat.has_page(src_id):
            raise UnknownPage(src_id)
        src = bat.page(src_id)
        if src.terminal or not 0 <= idx < len(src.transitions):
            raise InvalidInsertionPoint(f"no transition {idx} on {src_id!r}")
        dest = src.transitions[idx].to
        redirect = lambda s, i, t: s == src_id and i == idx  # noqa: E731
    else:
        raise InvalidInsertionPoint("insertion needs 'before' or 'edge'")
    if bat.page(dest).id == new.id:
        raise InvalidInsertionPoint("cannot insert before itself")

    transitions = [Transition(exit_prim, exit_target, dest)]
    if params.get("cycle"):
        cyc_prim, cyc_target = _sig(params["cycle"])
        transitions.append(Transition(cyc_prim, cyc_target, new.id))
    new = replace(new, transitions=tuple(transitions))

    pages = []
    for p in bat.pages:
        ts = tuple(replace(t, to=new.id) if redirect(p.id, i, t) else t for i, t in enumerate(p.transitions))
        pages.append(replace(p, transitions=ts))
    pages.append(new)
    entry = new.id if "before" in at and at["before"] == bat.entry_page_id else bat.entry_page_id
    return SimBAT(bat.isp_id, tuple(pages), entry, bat.revision + 1)


def _edit_stage(bat: SimBAT, params) -> SimBAT:
    pid = params["page"]
    page = bat.page(pid)
    old_prim, old_target = _sig(params["old"])
    new_prim, new_target = _sig(params["new"])
    old_sig = (old_prim.value, normalize_element(old_target) if old_target else None)
    hits = [t for t in page.transitions if t.signature == old_sig]
    if page.terminal or not hits:
        raise InvalidInsertionPoint(f"{pid!r} has no transition on {old_sig}")
    ts = tuple(replace(t, primitive=new_prim, target=new_target) if t.signature == old_sig else t
               for t in page.transitions)
    elements = list(page.elements)
    still_used = any(t.target and normalize_element(t.target) == old_sig[1] for t in ts)
    if old_target and not still_used:
        elements = [e for e in elements if normalize_element(e) != old_sig[1]]
    if new_target and all(normalize_element(e) != normalize_element(new_target) for e in elements):
        elements.append(new_target)
    new_page = replace(page, transitions=ts, elements=tuple(elements))
    pages = tuple(new_page if p.id == pid else p for p in bat.pages)
    return SimBAT(bat.isp_id, pages, bat.entry_page_id, bat.revision + 1)


_PUNCT = string.punctuation


def _rewrite_fragment(fragment: str, mapping: Dict[str, str]) -> str:
    words = []
    for word in fragment.split():
        core = word.strip(_PUNCT)
        if core and core.casefold() in mapping:
            lead = word[:len(word) - len(word.lstrip(_PUNCT))]
            trail = word[len(word.rstrip(_PUNCT)):]
            word = lead + mapping[core.casefold()] + trail
        words.append(word)
    return " ".join(words)


def _relabel(bat: SimBAT, params) -> SimBAT:
    mapping = {k.casefold(): v for k, v in params["tokens"].items()}
    only = set(params.get("pages") or [p.id for p in bat.pages])
    for pid in only:
        bat.page(pid)
    pages = tuple(
        replace(p, visible_text=tuple(_rewrite_fragment(f, mapping) for f in p.visible_text))
        if p.id in only else p
        for p in bat.pages)
    return SimBAT(bat.isp_id, pages, bat.entry_page_id, bat.revision + 1)


def mutate(bat: SimBAT, op: MutationOp) -> SimBAT:
    """Return a new revision of ``bat`` with one churn operator applied."""
    if op.kind is MutationKind.INSERT_STAGE:
        return _insert_stage(bat, op.params)
    if op.kind is MutationKind.EDIT_STAGE:
        return _edit_stage(bat, op.params)
    if op.kind is MutationKind.INSERT_AND_EDIT:
        mid = _insert_stage(bat, op.params["insert"])
        out = _edit_stage(mid, op.params["edit"])
        return replace(out, revision=bat.revision + 1)
    if op.kind is MutationKind.RELABEL_COSMETIC:
        return _relabel(bat, op.params)
    raise ValueError(op.kind)


def cookie_popup(page_id: str, before: str, phrase: str = "we value your privacy",
                 accept: str = "accept_cookies", reject: str = "reject_cookies") -> Dict:
    """INSERT_STAGE parameters for a consent popup whose reject loops back."""
    return {
        "at": {"before": before},
        "page": {"id": page_id, "visible_text": [phrase, "accept all cookies or reject"],
                 "elements": [accept, reject]},
        "exit": {"primitive": "CLICK", "target": accept},
        "cycle": {"primitive": "CLICK", "target": reject},
    }


# --------------------------------------------------------------------------
# files

def _need(d, key, path):
    if key not in d:
        raise SchemaError(f"missing key {key!r}", path)
    return d[key]


def bat_from_dict(d) -> SimBAT:
    pages = []
    for i, p in enumerate(_need(d, "pages", "$")):
        path = f"$.pages[{i}]"
        ts = tuple(Transition(Primitive(t["primitive"].upper()), t.get("target"), t["to"], t.get("guard", ALL))
                   for t in p.get("transitions", ()))
        label = p.get("terminal_label")
        payloads = tuple(
            (k, tuple(PlanBlock(b["name"], float(b["price"]), float(b["down"]), float(b["up"]),
                                PricingKind(b.get("pricing_kind", "REGULAR"))) for b in v))
            for k, v in (p.get("plan_payloads") or {}).items())
        pages.append(Page(_need(p, "id", path), tuple(p.get("visible_text", ())), tuple(p.get("elements", ())),
                          ts, OutcomeLabel(label) if label else None, payloads,
                          tuple(p.get("hidden_text", ()))))
    return SimBAT(_need(d, "isp_id", "$"), tuple(pages), _need(d, "entry_page", "$"), d.get("revision", 0))


def catalog_from_list(items) -> List[AddressRecord]:
    return [AddressRecord(i["address"], AddressClass(i["class"]), i.get("cbg_id")) for i in items]


def load_bat(path) -> SimBAT:
    with open(path, encoding="utf-8") as fh:
        return bat_from_dict(json.load(fh))


def load_catalog(path) -> List[AddressRecord]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("addresses", [])
    return catalog_from_list(data)


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def class_of(catalog: Iterable[AddressRecord], address: str) -> AddressClass:
    """Addresses missing from the catalog behave like unlisted dropdown entries."""
    for rec in catalog:
        if rec.address == address:
            return rec.cls
    return AddressClass.UNKNOWN
