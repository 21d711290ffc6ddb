"""Longitudinal measurement rounds over fixed address sets.

A campaign runs every (provider, address) pair once per round, detects
interface updates from changes in (status, outcome) between rounds, applies
scheduled interface mutations and spec interventions between rounds, and
appends everything to JSONL logs. A round is only considered complete once
its marker line is written to ``rounds.jsonl``; resuming discards anything
after the last complete round and replays the schedule up to it.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .compiler import DEFAULT_HARNESS_CONSTANT, NFACache, lloc
from .errors import EmptyInput, IspMismatch, SchemaError
from .intent import IntentSpec, SpecDelta, load_spec, spec_diff
from .runtime import DEFAULT_STEP_BUDGET, QueryResult, QueryStatus, execute_query
from .sim import AddressRecord, MutationOp, SimBAT, load_bat, load_catalog, mutate

log = logging.getLogger(__name__)

RESULTS_LOG = "results.jsonl"
PLANS_LOG = "plans.jsonl"
INTERVENTIONS_LOG = "interventions.jsonl"
UPDATES_LOG = "updates.jsonl"
ROUNDS_LOG = "rounds.jsonl"
LOGS = (RESULTS_LOG, PLANS_LOG, INTERVENTIONS_LOG, UPDATES_LOG)
WALL_CLOCK_FIELDS = ("timestamp",)


@dataclass(frozen=True)
class IspInputs:
    spec: str
    bat: str
    catalog: str


@dataclass(frozen=True)
class ScheduledEvent:
    """Something that happens to one provider before a round runs.

    ``mutation`` changes the interface; ``spec`` (a file path) or
    ``repair="scripted"`` replaces the spec and is logged as an intervention.
    """

    round: int
    isp_id: str
    mutation: Optional[MutationOp] = None
    spec: Optional[str] = None
    repair: Optional[str] = None


@dataclass(frozen=True)
class CampaignConfig:
    isps: Tuple[IspInputs, ...]
    rounds: int
    cadence_label: str = "weekly"
    step_budget: int = DEFAULT_STEP_BUDGET
    parallelism: int = 4
    harness_constant: int = DEFAULT_HARNESS_CONSTANT
    events: Tuple[ScheduledEvent, ...] = ()

    def __post_init__(self):
        if self.rounds < 1:
            raise SchemaError("rounds must be >= 1", "$.rounds")
        if self.parallelism < 1:
            raise SchemaError("parallelism must be >= 1", "$.parallelism")
        if not self.isps:
            raise SchemaError("at least one isp required", "$.isps")

    def to_dict(self):
        return {
            "isps": [{"spec": i.spec, "bat": i.bat, "catalog": i.catalog} for i in self.isps],
            "rounds": self.rounds,
            "cadence_label": self.cadence_label,
            "step_budget": self.step_budget,
            "parallelism": self.parallelism,
            "harness_constant": self.harness_constant,
            "events": [_event_to_dict(e) for e in self.events],
        }


def _event_to_dict(e: ScheduledEvent):
    d = {"round": e.round, "isp_id": e.isp_id}
    if e.mutation is not None:
        d["mutation"] = e.mutation.to_dict()
    if e.spec is not None:
        d["spec"] = e.spec
    if e.repair is not None:
        d["repair"] = e.repair
    return d


def config_from_dict(d, base_dir: Optional[str] = None) -> CampaignConfig:
    """Build a config; relative file paths resolve against ``base_dir``."""
    def resolve(p):
        return p if base_dir is None or os.path.isabs(p) else os.path.join(base_dir, p)

    try:
        isps = tuple(IspInputs(resolve(i["spec"]), resolve(i["bat"]), resolve(i["catalog"]))
                     for i in d["isps"])
        events = []
        for e in d.get("events", ()):
            mut = MutationOp.from_dict(e["mutation"]) if "mutation" in e else None
            events.append(ScheduledEvent(int(e["round"]), e["isp_id"], mut,
                                         resolve(e["spec"]) if "spec" in e else None, e.get("repair")))
        return CampaignConfig(isps, int(d["rounds"]), d.get("cadence_label", "weekly"),
                              int(d.get("step_budget", DEFAULT_STEP_BUDGET)), int(d.get("parallelism", 4)),
                              int(d.get("harness_constant", DEFAULT_HARNESS_CONSTANT)), tuple(events))
    except KeyError as exc:
        raise SchemaError(f"missing key {exc.args[0]!r}", "$") from None


def load_config(path) -> CampaignConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))


# --------------------------------------------------------------------------
# measures

def hit_rate(results: Sequence[QueryResult]) -> float:
    """Fraction of queries that reached a terminal outcome state."""
    if not results:
        raise EmptyInput("hit rate of no results")
    return sum(r.status is QueryStatus.TERMINAL for r in results) / len(results)


def run_spec(spec: IntentSpec, bat: SimBAT, catalog: Sequence[AddressRecord],
             step_budget: int = DEFAULT_STEP_BUDGET, cache: Optional[NFACache] = None) -> List[QueryResult]:
    """Execute one spec on every catalog address, each in a fresh session."""
    nfa = (cache or NFACache()).get_or_compile(spec)
    return [execute_query(nfa, rec.address, bat.session(rec.address, rec.cls), step_budget) for rec in catalog]


@dataclass(frozen=True)
class UpdateEvent:
    isp_id: str
    address: str
    round: int
    before: Tuple[str, Optional[str]]
    after: Tuple[str, Optional[str]]

    def to_dict(self):
        return {"isp_id": self.isp_id, "address": self.address, "round": self.round,
                "before": list(self.before), "after": list(self.after)}


def detect_interface_updates(history: Dict[Tuple[str, str], Sequence[Tuple[int, Tuple[str, Optional[str]]]]]
                             ) -> List[UpdateEvent]:
    """One event per (isp, address, round) whose (status, outcome) differs
    from the same pair's previous round.

    ``history`` maps (isp_id, address) to (round, key) pairs; rounds need not
    be pre-sorted.
    """
    events = []
    for (isp, addr), seq in sorted(history.items()):
        ordered = sorted(seq, key=lambda x: x[0])
        for (_, prev), (rnd, cur) in zip(ordered, ordered[1:]):
            if tuple(prev) != tuple(cur):
                events.append(UpdateEvent(isp, addr, rnd, tuple(prev), tuple(cur)))
    events.sort(key=lambda e: (e.round, e.isp_id, e.address))
    return events


def updates_per_isp_round(events: Sequence[UpdateEvent]) -> Dict[Tuple[str, int], int]:
    """ISP-level tally: how many addresses changed, keyed by (isp, round)."""
    out: Dict[Tuple[str, int], int] = {}
    for e in events:
        out[(e.isp_id, e.round)] = out.get((e.isp_id, e.round), 0) + 1
    return out


@dataclass(frozen=True)
class InterventionRecord:
    isp_id: str
    round: int
    delta: SpecDelta
    lloc_delta: int
    trigger: str
    old_version: int = 0
    new_version: int = 0

    def to_dict(self):
        return {"isp_id": self.isp_id, "round": self.round, "delta": self.delta.as_dict(),
                "states_affected": self.delta.states_affected, "lloc_delta": self.lloc_delta,
                "trigger": self.trigger, "old_version": self.old_version, "new_version": self.new_version}

    @classmethod
    def from_dict(cls, d) -> "InterventionRecord":
        dd = d["delta"]
        delta = SpecDelta(dd["states_added"], dd["states_edited"], dd["states_removed"], dd["llos_delta"],
                          tuple(dd.get("edited_ids", ())))
        return cls(d["isp_id"], d["round"], delta, d["lloc_delta"], d["trigger"],
                   d.get("old_version", 0), d.get("new_version", 0))


def record_intervention(old_spec: IntentSpec, new_spec: IntentSpec, trigger: str, round_index: int = 0,
                        harness_constant: int = DEFAULT_HARNESS_CONSTANT,
                        log_path: Optional[str] = None) -> InterventionRecord:
    """Diff two spec versions and price the change in both metrics.

    When ``log_path`` is given the record is appended there as one JSON line.
    """
    if old_spec.isp_id != new_spec.isp_id:
        raise IspMismatch(f"{old_spec.isp_id!r} != {new_spec.isp_id!r}")
    delta = spec_diff(old_spec, new_spec)
    rec = InterventionRecord(old_spec.isp_id, round_index, delta,
                             lloc(new_spec, harness_constant) - lloc(old_spec, harness_constant),
                             trigger, old_spec.version, new_spec.version)
    if log_path is not None:
        with open(log_path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(_line(rec.to_dict()))
    return rec


# --------------------------------------------------------------------------
# persistence

def _line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def result_summary(r: QueryResult, round_index: int, timestamp: float, spec_version: int,
                   bat_revision: int) -> Dict:
    return {"isp_id": r.isp_id, "address": r.address, "round": round_index, "status": r.status.value,
            "outcome": r.outcome_label.value if r.outcome_label else None, "plan_count": len(r.plans),
            "steps": r.steps_taken, "error": r.error, "spec_version": spec_version,
            "bat_revision": bat_revision, "timestamp": timestamp}


def read_jsonl(path) -> List[Dict]:
    if not os.path.exists(path):
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def strip_wall_clock(rows: Sequence[Dict]) -> List[Dict]:
    return [{k: v for k, v in r.items() if k not in WALL_CLOCK_FIELDS} for r in rows]


def _truncate_after(path: Path, last_round: int) -> None:
    """Drop trailing lines from rounds that never completed."""
    if not path.exists():
        return
    keep = 0
    with open(path, "rb") as fh:
        for raw in fh:
            try:
                row = json.loads(raw)
            except ValueError:
                break
            if row.get("round", 0) > last_round:
                break
            keep += len(raw)
    if keep < path.stat().st_size:
        log.warning("truncating %s to last complete round %d", path.name, last_round)
        with open(path, "r+b") as fh:
            fh.truncate(keep)


def completed_rounds(out_dir) -> int:
    rows = read_jsonl(Path(out_dir) / ROUNDS_LOG)
    return max((r["round"] for r in rows), default=0)


# --------------------------------------------------------------------------
# orchestration

@dataclass
class _IspState:
    spec: IntentSpec
    bat: SimBAT
    catalog: List[AddressRecord]
    last_mutation: Optional[Tuple[SimBAT, MutationOp]] = None
    last_keys: Dict[str, Tuple[str, Optional[str]]] = field(default_factory=dict)


class Campaign:
    """Mutable campaign state; one instance per output directory."""

    def __init__(self, config: CampaignConfig, out_dir, cache: Optional[NFACache] = None,
                 clock=time.time):
        self.config = config
        self.out = Path(out_dir)
        self.cache = cache or NFACache()
        self.clock = clock
        self.state: Dict[str, _IspState] = {}
        for inp in config.isps:
            spec = load_spec(inp.spec)
            self.state[spec.isp_id] = _IspState(spec, load_bat(inp.bat), load_catalog(inp.catalog))

    # -- schedule

    def _apply_events(self, round_index: int) -> List[InterventionRecord]:
        interventions = []
        for ev in self.config.events:
            if ev.round != round_index:
                continue
            st = self.state[ev.isp_id]
            if ev.mutation is not None:
                st.last_mutation = (st.bat, ev.mutation)
                st.bat = mutate(st.bat, ev.mutation)
            new_spec = None
            if ev.spec is not None:
                new_spec = load_spec(ev.spec)
            elif ev.repair == "scripted":
                from .churn import scripted_repair
                if st.last_mutation is None:
                    raise SchemaError(f"no mutation to repair for {ev.isp_id}", "$.events")
                before, op = st.last_mutation
                new_spec = scripted_repair(st.spec, before, op)
            if new_spec is not None:
                trigger = f"{ev.isp_id}@round{round_index}"
                interventions.append(record_intervention(st.spec, new_spec, trigger, round_index,
                                                         self.config.harness_constant))
                st.spec = new_spec
        return interventions

    # -- rounds

    def run_round(self, round_index: int, timestamp: Optional[float] = None) -> List[Tuple[QueryResult, Dict]]:
        """Execute every (isp, address) pair once; never aborts wholesale."""
        ts = self.clock() if timestamp is None else timestamp
        jobs = []
        for isp_id, st in self.state.items():
            nfa = self.cache.get_or_compile(st.spec)
            for rec in st.catalog:
                jobs.append((isp_id, st, nfa, rec))

        def one(job):
            isp_id, st, nfa, rec = job
            try:
                return execute_query(nfa, rec.address, st.bat.session(rec.address, rec.cls), self.config.step_budget)
            except Exception as exc:  # a broken pair is recorded, not fatal
                return QueryResult(isp_id, rec.address, QueryStatus.ENV_FAULT, error=str(exc))

        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            results = list(pool.map(one, jobs))
        out = []
        for (isp_id, st, _, rec), r in zip(jobs, results):
            out.append((r, result_summary(r, round_index, ts, st.spec.version, st.bat.revision)))
        return out

    def _plan_rows(self, results, round_index: int, ts: float) -> List[Dict]:
        rows = []
        for r, _ in results:
            cbg = next((a.cbg_id for a in self.state[r.isp_id].catalog if a.address == r.address), None)
            for p in r.plans:
                d = p.to_dict()
                d.update(cbg_id=cbg, round=round_index, timestamp=ts)
                rows.append(d)
        return rows

    def _append(self, name: str, rows: Sequence[Dict]) -> None:
        with open(self.out / name, "a", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(_line(row))
            fh.flush()

    def _resume(self) -> int:
        _truncate_after(self.out / ROUNDS_LOG, float("inf"))
        done = completed_rounds(self.out)
        for name in LOGS:
            _truncate_after(self.out / name, done)
        # replay the schedule and the last complete round's outcomes
        for k in range(1, done + 1):
            self._apply_events(k)
        for row in read_jsonl(self.out / RESULTS_LOG):
            if row["round"] == done:
                self.state[row["isp_id"]].last_keys[row["address"]] = (row["status"], row["outcome"])
        return done

    def run(self, stop_after: Optional[int] = None) -> int:
        """Run (or resume) up to ``stop_after`` rounds; returns the last complete round."""
        self.out.mkdir(parents=True, exist_ok=True)
        config_path = self.out / "config.json"
        if not config_path.exists():
            config_path.write_text(json.dumps(self.config.to_dict(), sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")
        done = self._resume()
        last = self.config.rounds if stop_after is None else min(stop_after, self.config.rounds)
        for k in range(done + 1, last + 1):
            interventions = self._apply_events(k)
            ts = self.clock()
            results = self.run_round(k, ts)
            updates = []
            for r, summary in results:
                st = self.state[r.isp_id]
                prev = st.last_keys.get(r.address)
                if prev is not None and prev != r.key:
                    updates.append(UpdateEvent(r.isp_id, r.address, k, prev, r.key))
                st.last_keys[r.address] = r.key
            self._append(RESULTS_LOG, [s for _, s in results])
            self._append(PLANS_LOG, self._plan_rows(results, k, ts))
            self._append(INTERVENTIONS_LOG, [i.to_dict() for i in interventions])
            self._append(UPDATES_LOG, [u.to_dict() for u in updates])
            per_isp = {}
            for isp_id in self.state:
                mine = [r for r, _ in results if r.isp_id == isp_id]
                per_isp[isp_id] = {"hit_rate": hit_rate(mine) if mine else None,
                                   "updates": sum(u.isp_id == isp_id for u in updates),
                                   "update_event": any(u.isp_id == isp_id for u in updates)}
            self._append(ROUNDS_LOG, [{"round": k, "queries": len(results), "isps": per_isp,
                                       "cadence_label": self.config.cadence_label}])
            log.info("round %d complete: %d queries", k, len(results))
        return max(done, last)


def run_campaign(config: CampaignConfig, out_dir, stop_after: Optional[int] = None,
                 cache: Optional[NFACache] = None) -> int:
    return Campaign(config, out_dir, cache).run(stop_after)
