"""What the runtime is allowed to see of an interface.

An observation has no page identity. ``visible_text`` holds text fragments
as rendered (one per text node, in page order); ``hidden_text`` holds text
present in the document but not visibly rendered; ``elements`` holds
structural element tokens. Primary matching reads both text channels;
refinement reads only the visible one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Tuple

from .intent import CueKind, CuePredicate, StateDetector, normalize_element, tokenize


def _dedupe(items: Iterable[str]) -> Tuple[str, ...]:
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class Observation:
    visible_text: Tuple[str, ...] = ()
    elements: Tuple[str, ...] = ()
    hidden_text: Tuple[str, ...] = ()

    @classmethod
    def build(cls, visible_text=(), elements=(), hidden_text=()) -> "Observation":
        """Normalize whitespace, dedupe elements; text keeps order and repeats."""
        vis = tuple(" ".join(t.split()) for t in visible_text if t and t.strip())
        hid = tuple(" ".join(t.split()) for t in hidden_text if t and t.strip())
        els = _dedupe(normalize_element(e) for e in elements if e and e.strip())
        return cls(vis, els, _dedupe(hid))

    @property
    def element_set(self) -> FrozenSet[str]:
        return frozenset(self.elements)

    def to_dict(self):
        return {"visible_text": list(self.visible_text),
                "elements": list(self.elements),
                "hidden_text": list(self.hidden_text)}

    @classmethod
    def from_dict(cls, d) -> "Observation":
        return cls(tuple(d.get("visible_text", ())), tuple(d.get("elements", ())),
                   tuple(d.get("hidden_text", ())))

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def text_tokens(self, visible_only: bool = False) -> FrozenSet[str]:
        frags = self.visible_text if visible_only else self.visible_text + self.hidden_text
        return frozenset(t for f in frags for t in tokenize(f))


def _contains_run(haystack: Tuple[str, ...], needle: Tuple[str, ...]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and haystack[i:i + n] == needle:
            return True
    return False


def text_present(obs: Observation, value: str, visible_only: bool = False) -> bool:
    """True when the cue's tokens occur contiguously inside one text fragment."""
    needle = tokenize(value)
    frags = obs.visible_text if visible_only else obs.visible_text + obs.hidden_text
    return any(_contains_run(tokenize(f), needle) for f in frags)


def cue_satisfied(cue: CuePredicate, obs: Observation, visible_only: bool = False) -> bool:
    if cue.kind is CueKind.TEXT_CONTAINS:
        return text_present(obs, cue.value, visible_only)
    return normalize_element(cue.value) in obs.element_set


def detector_satisfied(det: StateDetector, obs: Observation) -> bool:
    return bool(det.cues) and all(cue_satisfied(c, obs) for c in det.cues)


def detector_visible(det: StateDetector, obs: Observation) -> bool:
    """Refinement view: only text cues count, and only against rendered text."""
    text_cues = [c for c in det.cues if c.kind is CueKind.TEXT_CONTAINS]
    return bool(text_cues) and all(cue_satisfied(c, obs, visible_only=True) for c in text_cues)
