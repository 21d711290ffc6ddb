"""Seeded generation of simulated provider fleets with matching hand specs.

Each generated tool is an address page, a shared chain of intermediate
stages, a class-guarded branch, per-outcome tails and terminal pages. Every
page is recognized by a three-word heading plus one element; those cue tokens
come from a per-tool vocabulary of k tokens, ceil(share_ratio * k) of which
are drawn from the shared pool and the rest invented. The few most common
pool tokens appear on every tool, and headings favor popular tokens, so
detectors overlap across tools while the pool itself is covered early.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .intent import (
    AbstractState, ActionCall, CueKind, CuePredicate, ExtractionDirective, IntentSpec,
    OutcomeLabel, PlanField, Primitive, StateDetector, serialize_spec,
)
from .records import PricingKind
from .sim import ALL, PLAN_PREFIXES, AddressClass, AddressRecord, Page, PlanBlock, SimBAT, Transition

MIN_PAGES = 3
HEADING_WORDS = 3
NOVELTY_BONUS = 0.5
SLOT_ZIPF = 2.0
CORE_SIZE = 4
VOCAB_RANGE = (8, 16)
MAX_PAGES = 28
CATALOG_SIZE = 10

DEFAULT_POOL = (
    "address", "check", "availability", "enter", "service", "plans", "your", "continue",
    "home", "internet", "find", "search", "street", "select", "confirm", "location",
    "offers", "available", "view", "submit", "start", "order", "shop", "zip", "apartment",
    "unit", "welcome", "business", "residential", "speed", "fiber", "wireless", "account",
    "sign", "customer", "existing", "new", "options", "best", "deals", "today", "area",
    "coverage", "map", "results", "details", "next", "back", "cookies", "privacy",
)

EXTRACTION_DIRECTIVES = (
    ExtractionDirective(PlanField.PLAN_NAME, PLAN_PREFIXES["name"]),
    ExtractionDirective(PlanField.PRICE_USD_PER_MONTH, PLAN_PREFIXES["price"]),
    ExtractionDirective(PlanField.DOWN_MBPS, PLAN_PREFIXES["down"]),
    ExtractionDirective(PlanField.UP_MBPS, PLAN_PREFIXES["up"]),
    ExtractionDirective(PlanField.PRICING_KIND, PLAN_PREFIXES["pricing_kind"]),
)

# words that appear in rendered plan blocks; kept out of invented tokens
RESERVED = frozenset({"plan", "price", "download", "upload", "pricing", "mbps", "regular",
                      "promotional", "mo", "gigabit", "essentials", "ultra", "basic", "plus",
                      "turbo", "max"})

# intermediate stage roles: (id stem, primitive, weight)
ROLES = (
    ("CONFIRM", Primitive.CLICK, 45),
    ("POPUP", Primitive.CLICK, 12),
    ("DROPDOWN", Primitive.SELECT, 13),
    ("KEYCONFIRM", Primitive.KEYPRESS, 12),
    ("LOADING", Primitive.WAIT, 6),
    ("REVIEW", Primitive.FINALIZE, 12),
)

TERMINALS = {
    AddressClass.SERVICEABLE_PLANS: ("PLANS_PAGE", OutcomeLabel.PLANS_PAGE),
    AddressClass.NO_SERVICE: ("NO_SERVICE", OutcomeLabel.NO_SERVICE),
    AddressClass.SERVICEABLE_NO_PLANS: ("NO_PLANS", OutcomeLabel.SERVICE_CONFIRMED_NO_PLANS),
    AddressClass.UNKNOWN: ("UNKNOWN_ADDRESS", OutcomeLabel.UNKNOWN),
    AddressClass.ACTIVE_SERVICE: ("ACTIVE_SERVICE", OutcomeLabel.ACTIVE_SERVICE),
}

PLAN_NAMES = ("Gigabit", "Essentials", "Ultra", "Basic", "Plus", "Turbo", "Max")
SPEEDS = (25, 50, 75, 100, 200, 300, 500, 1000)
STREETS = ("Main", "Oak", "Maple", "Cedar", "Elm", "Pine", "Lake", "Hill", "Park", "Washington",
           "Lincoln", "Jefferson", "Church", "Mill", "River", "Spring", "Ridge", "Walnut")
SUFFIXES = ("St", "Ave", "Rd", "Ln", "Dr", "Ct", "Way", "Blvd")


@dataclass(frozen=True)
class FleetEntry:
    bat: SimBAT
    spec: IntentSpec
    catalog: Tuple[AddressRecord, ...]


def _zipf_weights(n: int, s: float = 1.1) -> List[float]:
    return [1.0 / (r + 1) ** s for r in range(n)]


def _weighted_sample(rng: random.Random, items: Sequence[str], weights: Sequence[float], k: int) -> List[str]:
    items, weights = list(items), list(weights)
    out = []
    for _ in range(min(k, len(items))):
        i = rng.choices(range(len(items)), weights=weights)[0]
        out.append(items.pop(i))
        weights.pop(i)
    return out


def _draw_weights(tokens: Sequence[str], usage: Dict[str, int], offset: int = 0) -> List[float]:
    """Popular phrasing dominates, but pool tokens no earlier tool used get a
    flat bonus so the shared pool is covered early in the fleet."""
    zipf = _zipf_weights(len(tokens) + offset)[offset:]
    return [w + NOVELTY_BONUS * (usage.get(t, 0) == 0) for t, w in zip(tokens, zipf)]


def _fresh_token(rng: random.Random, taken: set) -> str:
    cons, vows = "bcdfgklmnprstvz", "aeiou"
    while True:
        tok = "".join(rng.choice(cons) + rng.choice(vows) for _ in range(3))
        if tok not in taken and tok not in RESERVED:
            taken.add(tok)
            return tok


def _page_count(rng: random.Random, needed: int) -> int:
    extra = int(rng.expovariate(1 / 3.0))
    return max(MIN_PAGES, min(MAX_PAGES, needed + extra))


def _assign_cues(rng: random.Random, n: int, vocab: List[str], weight: Dict[str, float],
                 words: int = HEADING_WORDS) -> List[Tuple[Tuple[str, ...], str]]:
    """Give each page a heading of ``words`` tokens and one element token.

    Every vocabulary token is used at least once; heading word sets are
    unique within the tool and the element never repeats a heading word.
    """
    width = words + 1
    slots: List[List[Optional[str]]] = [[None] * width for _ in range(n)]
    positions = [(p, j) for p in range(n) for j in range(width)]
    rng.shuffle(positions)
    forced = list(vocab)
    rng.shuffle(forced)
    for tok, (p, j) in zip(forced, positions):
        slots[p][j] = tok
    weights = [weight[t] for t in vocab]
    # headings made entirely of forced tokens are fixed; keep them free for their pages
    used = {frozenset(row[:words]) for row in slots if all(row[:words])}
    out = []
    for p in range(n):
        for attempt in range(2000):
            # popular tokens first; uniform once the popular combinations run out
            w = weights if attempt < 200 else None
            picked = [slots[p][j] or rng.choices(vocab, weights=w)[0] for j in range(width)]
            head, elem = picked[:words], picked[words]
            key = frozenset(head)
            fixed = all(slots[p][:words])
            if len(key) == words and elem not in key and (fixed or key not in used):
                break
        else:
            raise RuntimeError("could not assign unique cues")
        used.add(key)
        out.append((tuple(head), elem))
    return out


def _plans(rng: random.Random) -> Tuple[PlanBlock, ...]:
    blocks = []
    speeds = sorted(rng.sample(SPEEDS, rng.randint(1, 4)))
    for down in speeds:
        name = f"{rng.choice(PLAN_NAMES)} {down}"
        price = float(rng.choice(range(20, 131, 5)))
        up = float(down if rng.random() < 0.4 else max(5, down // 10))
        kind = PricingKind.PROMOTIONAL if rng.random() < 0.2 else PricingKind.REGULAR
        blocks.append(PlanBlock(name, price, float(down), up, kind))
    return tuple(blocks)


def _addresses(rng: random.Random, classes: List[AddressClass], isp_index: int) -> Tuple[AddressRecord, ...]:
    seen = set()
    recs = []
    order = list(classes) + [rng.choice(classes) for _ in range(CATALOG_SIZE - len(classes))]
    rng.shuffle(order)
    for cls in order:
        while True:
            addr = f"{rng.randint(1, 9999)} {rng.choice(STREETS)} {rng.choice(SUFFIXES)}"
            if addr not in seen:
                seen.add(addr)
                break
        recs.append(AddressRecord(addr, cls, f"cbg{isp_index:03d}-{rng.randint(0, 2)}"))
    return tuple(recs)


def _build_one(rng: random.Random, index: int, pool: Sequence[str], share_ratio: float,
               taken: set, usage: Dict[str, int]) -> FleetEntry:
    isp_id = f"isp{index:03d}"
    # UNKNOWN addresses without a dedicated page fall through to the no-service branch
    extra_classes = rng.sample([AddressClass.SERVICEABLE_NO_PLANS, AddressClass.UNKNOWN,
                                AddressClass.ACTIVE_SERVICE], rng.randint(0, 3))
    classes = [AddressClass.SERVICEABLE_PLANS, AddressClass.NO_SERVICE] + sorted(extra_classes, key=lambda c: c.value)
    n = _page_count(rng, 1 + len(classes))
    n_mid = n - 1 - len(classes)

    # cue vocabulary
    k = min(rng.randint(*VOCAB_RANGE), (HEADING_WORDS + 1) * n)
    n_pool = min(len(pool), math.ceil(share_ratio * k))
    # the most common phrasing appears on every tool; the rest of the pool share is drawn
    core = list(pool[:min(CORE_SIZE, n_pool)])
    rest = list(pool[len(core):])
    drawn = core + _weighted_sample(rng, rest, _draw_weights(rest, usage, len(core)), n_pool - len(core))
    for t in drawn:
        usage[t] = usage.get(t, 0) + 1
    taken.update(pool)
    fresh = [_fresh_token(rng, taken) for _ in range(k - len(drawn))]
    vocab = drawn + fresh
    rank = {t: i for i, t in enumerate(pool)}
    slot_w = _zipf_weights(len(pool), SLOT_ZIPF)
    weight = {t: slot_w[rank[t]] if t in rank else slot_w[-1] for t in vocab}
    cues = _assign_cues(rng, n, vocab, weight)

    # stage layout: shared pre-branch chain, then per-class tails
    tails: Dict[AddressClass, List[str]] = {c: [] for c in classes}
    pre: List[str] = []
    mids: List[Tuple[str, Primitive]] = []
    role_w = [r[2] for r in ROLES]
    for j in range(n_mid):
        stem, prim, _ = rng.choices(ROLES, weights=role_w)[0]
        pid = f"{stem}_{j + 1}"
        mids.append((pid, prim))
        u = rng.random()
        if u < 0.5:
            pre.append(pid)
        elif u < 0.85:
            tails[AddressClass.SERVICEABLE_PLANS].append(pid)
        else:
            tails[rng.choice(classes)].append(pid)
    prim_of = dict(mids)

    page_ids = ["ADDRESS_BAR"] + [m[0] for m in mids] + [TERMINALS[c][0] for c in classes]
    cue_of = dict(zip(page_ids, cues))
    prim_of["ADDRESS_BAR"] = Primitive.TYPEWRITE

    def action_target(pid):
        prim = prim_of[pid]
        if prim is Primitive.KEYPRESS:
            return "enter"
        if prim in (Primitive.WAIT, Primitive.FINALIZE):
            return None
        return cue_of[pid][1]

    def head_of(chain, terminal_id):
        return chain[0] if chain else terminal_id

    transitions: Dict[str, List[Transition]] = {pid: [] for pid in page_ids}
    chain = ["ADDRESS_BAR"] + pre
    for a, b in zip(chain, chain[1:]):
        transitions[a].append(Transition(prim_of[a], action_target(a), b))
    branch = chain[-1]
    for c in classes:
        tail = tails[c]
        term = TERMINALS[c][0]
        transitions[branch].append(Transition(prim_of[branch], action_target(branch), head_of(tail, term), c.value))
        seq = tail + [term]
        for a, b in zip(seq, seq[1:]):
            transitions[a].append(Transition(prim_of[a], action_target(a), b))
    fallback = head_of(tails[AddressClass.NO_SERVICE], TERMINALS[AddressClass.NO_SERVICE][0])
    transitions[branch].append(Transition(prim_of[branch], action_target(branch), fallback, ALL))

    plans = _plans(rng)
    label_of = {TERMINALS[c][0]: TERMINALS[c][1] for c in classes}
    pages = []
    states = []
    for pid in page_ids:
        words, e = cue_of[pid]
        heading = " ".join(words)
        elements = [e]
        ts = list(transitions[pid])
        if pid.startswith("POPUP"):
            reject = f"{e}_reject"
            elements.append(reject)
            ts.append(Transition(Primitive.CLICK, reject, pid))
        label = label_of.get(pid)
        payload = ((AddressClass.SERVICEABLE_PLANS.value, plans),) if label is OutcomeLabel.PLANS_PAGE else ()
        pages.append(Page(pid, (heading,), tuple(elements), tuple(ts), label, payload))

        detector = StateDetector((CuePredicate(CueKind.TEXT_CONTAINS, heading),
                                  CuePredicate(CueKind.ELEMENT_PRESENT, e)))
        if label is not None:
            states.append(AbstractState(pid, (detector,), (), True, label,
                                        EXTRACTION_DIRECTIVES if label is OutcomeLabel.PLANS_PAGE else None))
        else:
            prim = prim_of[pid]
            arg = "{address}" if prim is Primitive.TYPEWRITE else None
            succ = tuple(sorted({t.to for t in transitions[pid]}))
            states.append(AbstractState(pid, (detector,), (ActionCall(prim, action_target(pid), arg),),
                                        expected_successors=succ))

    bat = SimBAT(isp_id, tuple(pages), "ADDRESS_BAR", 0)
    spec = IntentSpec(isp_id, tuple(states), "ADDRESS_BAR", 1, 0)
    spec = IntentSpec(isp_id, spec.states, "ADDRESS_BAR", 1, len(serialize_spec(spec)))
    catalog_classes = classes if AddressClass.UNKNOWN in classes else classes + [AddressClass.UNKNOWN]
    return FleetEntry(bat, spec, _addresses(rng, catalog_classes, index))


def generate_fleet(seed: int, n: int, shared_vocab: Sequence[str] = DEFAULT_POOL,
                   share_ratio: float = 0.8) -> List[FleetEntry]:
    """Generate ``n`` simulated tools with complete hand specs and catalogs.

    Deterministic in ``seed``; tool ``i`` depends only on (seed, i) and the
    tokens already invented for earlier tools.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= share_ratio <= 1.0:
        raise ValueError("share_ratio must be in [0, 1]")
    pool = list(dict.fromkeys(t.casefold() for t in shared_vocab))
    if not pool:
        raise ValueError("shared vocabulary is empty")
    taken: set = set()
    usage: Dict[str, int] = {}
    fleet = []
    for i in range(n):
        rng = random.Random(seed * 1_000_003 + i)
        fleet.append(_build_one(rng, i, pool, share_ratio, taken, usage))
    return fleet
