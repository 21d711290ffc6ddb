"""Declarative automaton-based querying of broadband availability tools.

Specs describe what a query must achieve as an abstract automaton; the
compiler binds them to observable cues, and the runtime drives a (simulated)
interface by repeatedly observing, matching and acting.
"""
from .compiler import NFACache, compile_spec, lloc, materialize_imperative
from .intent import IntentSpec, llos, load_spec, parse_spec, serialize_spec, spec_diff, validate_spec
from .runtime import QueryResult, QueryStatus, execute_query

__version__ = "0.1.0"

__all__ = [
    "IntentSpec", "NFACache", "QueryResult", "QueryStatus", "compile_spec", "execute_query", "lloc",
    "llos", "load_spec", "materialize_imperative", "parse_spec", "serialize_spec", "spec_diff",
    "validate_spec", "__version__",
]
