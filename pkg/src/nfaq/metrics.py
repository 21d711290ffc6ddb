"""Specification-size, compression and detector-reuse measures.

All functions are pure over immutable specs. Token sets use the shared
tokenizer: case-fold, split on whitespace, strip edge punctuation.
"""
from __future__ import annotations

import itertools
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .compiler import ACTION_COST, DEFAULT_HARNESS_CONSTANT, PREDICATE_COST, STATE_COST, lloc
from .errors import Degenerate, EmptyInput
from .intent import AbstractState, IntentSpec, Primitive, llos, serialize_spec, tokenize

__all__ = [
    "llos", "lloc", "lsc", "state_ratio", "compression_ratios", "api_usage", "cue_tokens",
    "detector_token_sets", "token_growth", "growth_increments", "second_half_ratio", "jaccard",
    "jaccard_pairs", "cdf_points", "MetricReport", "build_report",
]


def lsc(authoring_input: str) -> int:
    """Characters the author typed, whitespace and punctuation included."""
    return len(authoring_input)


def spec_lsc(spec: IntentSpec) -> int:
    """Recorded authoring size, or the canonical serialization's length when
    none was recorded (manual authoring writes the whole document)."""
    return spec.authoring_input_chars or lsc(serialize_spec(spec))


def state_ratio(state: AbstractState) -> float:
    a, p = len(state.actions), state.cue_count
    return (1 + a) / (STATE_COST + PREDICATE_COST * p + ACTION_COST * a)


def compression_ratios(spec: IntentSpec) -> List[float]:
    """Per state: specification lines over attributed generated statements."""
    return [state_ratio(s) for s in spec.states]


def api_usage(specs: Iterable[IntentSpec]) -> Dict[str, int]:
    counts: Counter = Counter()
    for spec in specs:
        for s in spec.states:
            for a in s.actions:
                counts[a.primitive.value] += 1
    return {p.value: counts[p.value] for p in Primitive if counts[p.value]}


def cue_tokens(spec: IntentSpec) -> FrozenSet[str]:
    return frozenset(t for s in spec.states for d in s.detectors for c in d.cues for t in tokenize(c.value))


def detector_token_sets(specs: Iterable[IntentSpec]) -> List[FrozenSet[str]]:
    """One token set per detector, in spec and state order."""
    return [frozenset(t for c in d.cues for t in tokenize(c.value))
            for spec in specs for s in spec.states for d in s.detectors]


def token_growth(specs: Sequence[IntentSpec]) -> List[int]:
    """Cumulative distinct cue tokens after onboarding each spec in turn."""
    seen: set = set()
    curve = []
    for spec in specs:
        seen |= cue_tokens(spec)
        curve.append(len(seen))
    return curve


def growth_increments(curve: Sequence[int]) -> List[int]:
    return [b - a for a, b in zip([0] + list(curve), curve)]


def second_half_ratio(curve: Sequence[int]) -> float:
    """Sum of second-half increments over sum of first-half increments."""
    inc = growth_increments(curve)
    half = len(inc) // 2
    first = sum(inc[:half])
    if first == 0:
        raise Degenerate("first half of the growth curve adds no tokens")
    return sum(inc[half:]) / first


def jaccard(a: FrozenSet[str], b: FrozenSet[str]) -> float:
    union = a | b
    if not union:
        raise Degenerate("jaccard of two empty sets")
    return len(a & b) / len(union)


def jaccard_pairs(detectors: Sequence[FrozenSet[str]]) -> List[float]:
    """Similarity of every unordered pair, in (i, j) lexicographic order."""
    if len(detectors) < 2:
        raise EmptyInput("need at least two detectors")
    return [jaccard(a, b) for a, b in itertools.combinations(detectors, 2)]


def cdf_points(values: Sequence[float]) -> List[Tuple[float, float]]:
    """Empirical CDF as (value, fraction <= value) at each distinct value."""
    xs = sorted(values)
    n = len(xs)
    out = []
    for i, x in enumerate(xs):
        if i + 1 == n or xs[i + 1] != x:
            out.append((x, (i + 1) / n))
    return out


def _spread(values: Sequence[float]) -> Dict[str, float]:
    if not values:
        return {}
    return {"min": min(values), "median": statistics.median(values), "max": max(values)}


@dataclass
class MetricReport:
    per_isp: List[Dict] = field(default_factory=list)
    interventions: List[Dict] = field(default_factory=list)
    compression_ratios: List[float] = field(default_factory=list)
    api_usage: Dict[str, int] = field(default_factory=dict)
    token_curve: List[int] = field(default_factory=list)
    jaccard: List[float] = field(default_factory=list)
    harness_constant: int = DEFAULT_HARNESS_CONSTANT

    def summary(self) -> Dict:
        out = {key: _spread([row[key] for row in self.per_isp]) for key in ("states", "llos", "lloc", "lsc")}
        if self.interventions:
            out["intervention_states"] = _spread([i["states_affected"] for i in self.interventions])
            out["intervention_llos"] = _spread([i["llos_delta"] for i in self.interventions])
            out["intervention_lloc"] = _spread([i["lloc_delta"] for i in self.interventions])
        if len(self.token_curve) >= 2:
            try:
                out["token_second_half_ratio"] = second_half_ratio(self.token_curve)
            except Degenerate:
                pass
        if self.jaccard:
            out["jaccard_above_0_2"] = sum(j > 0.2 for j in self.jaccard) / len(self.jaccard)
        total = sum(self.api_usage.values())
        if total:
            out["api_share"] = {k: v / total for k, v in self.api_usage.items()}
        return out

    def to_dict(self) -> Dict:
        return {
            "harness_constant": self.harness_constant,
            "per_isp": self.per_isp,
            "interventions": self.interventions,
            "compression_ratios": self.compression_ratios,
            "api_usage": self.api_usage,
            "token_curve": self.token_curve,
            "jaccard": self.jaccard,
            "summary": self.summary(),
        }


def build_report(specs: Sequence[IntentSpec], interventions: Optional[Sequence[Dict]] = None,
                 harness_constant: int = DEFAULT_HARNESS_CONSTANT) -> MetricReport:
    """Aggregate every measure over ``specs`` (in onboarding order).

    ``interventions`` are intervention-log rows as written by a campaign.
    """
    per_isp = [{"isp_id": s.isp_id, "states": len(s.states), "llos": llos(s),
                "lloc": lloc(s, harness_constant), "lsc": spec_lsc(s)} for s in specs]
    rows = []
    for rec in interventions or ():
        delta = rec["delta"]
        rows.append({"isp_id": rec["isp_id"], "round": rec.get("round"),
                     "states_affected": delta["states_added"] + delta["states_edited"],
                     "llos_delta": delta["llos_delta"], "lloc_delta": rec["lloc_delta"]})
    dets = detector_token_sets(specs)
    return MetricReport(
        per_isp=per_isp,
        interventions=rows,
        compression_ratios=[r for s in specs for r in compression_ratios(s)],
        api_usage=api_usage(specs),
        token_curve=token_growth(specs),
        jaccard=jaccard_pairs(dets) if len(dets) >= 2 else [],
        harness_constant=harness_constant,
    )
