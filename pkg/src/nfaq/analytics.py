"""Affordability and market analytics over extracted plan records.

Money is rounded with ``decimal`` (half-up to the cent); comparisons with a
threshold are inclusive, so a plan priced exactly at the threshold is
affordable and a block group with exactly half its locations unserved is
eligible.
"""
from __future__ import annotations

import csv
import json
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import EmptyCbg, EmptyInput, NonpositiveIncome, SchemaError, ZeroBsl
from .intent import OutcomeLabel
from .records import PlanRecord, PricingKind
from .runtime import QueryResult, QueryStatus

MIN_DOWN_MBPS = 100.0
TARGET_DOWN_MBPS = 100.0
INCOME_SHARE = Decimal("0.02")
DEFAULT_BENCHMARK = 30.0
CENT = Decimal("0.01")


@dataclass(frozen=True)
class CbgRecord:
    cbg_id: str
    income_20th_pct_disposable: float
    bsl_count: int
    unserved_plus_underserved: int
    population_weight: float = 1.0
    queried_addresses: Optional[int] = None

    def __post_init__(self):
        if self.unserved_plus_underserved > self.bsl_count:
            raise SchemaError(f"{self.cbg_id}: more unserved locations than locations", "unserved_plus_underserved")


class ServiceClass(str, Enum):
    SERVICEABLE_WITH_PLANS = "SERVICEABLE_WITH_PLANS"
    SERVICEABLE_NO_PLANS = "SERVICEABLE_NO_PLANS"
    NO_SERVICE = "NO_SERVICE"
    UNKNOWN = "UNKNOWN"


class FrontierMode(str, Enum):
    LOW_COST = "low_cost"
    REPRESENTATIVE = "representative"


@dataclass(frozen=True)
class FrontierPoint:
    cbg_id: str
    plan_price: Optional[float]
    threshold: float
    qualifying: bool
    coverage_quality: float
    down: Optional[float] = None
    curated: bool = False

    @property
    def affordable(self) -> bool:
        return self.qualifying and self.plan_price is not None and self.plan_price <= self.threshold


@dataclass(frozen=True)
class FrontierSummary:
    n_cbgs: int
    frac_with_affordable_plan: float
    frac_without: float
    frac_no_qualifying_plan: float
    population_share_affordable: float


@dataclass(frozen=True)
class MarketShares:
    monopoly: float
    duopoly: float
    triopoly_plus: float
    n_cbgs: int


@dataclass(frozen=True)
class BaselineStats:
    frac_price_above_threshold: float
    frac_speed_below_100: float
    frac_no_qualifying_plan: float
    n_cbgs: int


# --------------------------------------------------------------------------
# thresholds

def _income(cbg_or_income) -> Decimal:
    income = cbg_or_income.income_20th_pct_disposable if isinstance(cbg_or_income, CbgRecord) else cbg_or_income
    value = Decimal(str(income))
    if value <= 0:
        raise NonpositiveIncome(f"income must be positive, got {income}")
    return value


def threshold_exact(cbg_or_income) -> Fraction:
    """Unrounded monthly threshold: 2% of annual income over twelve months."""
    return Fraction(_income(cbg_or_income)) * Fraction(INCOME_SHARE) / 12


def affordability_threshold(cbg_or_income) -> float:
    """Monthly affordability threshold in USD, rounded half-up to the cent."""
    monthly = _income(cbg_or_income) * INCOME_SHARE / Decimal(12)
    return float(monthly.quantize(CENT, rounding=ROUND_HALF_UP))


# --------------------------------------------------------------------------
# plan selection

def _regular(plans: Iterable[PlanRecord]) -> List[PlanRecord]:
    return [p for p in plans if p.pricing_kind is PricingKind.REGULAR and p.price is not None and p.down is not None]


def low_cost_plan(plans: Iterable[PlanRecord]) -> Optional[PlanRecord]:
    """Cheapest regular-priced plan with at least 100 Mbps down.

    Ties prefer the faster plan, then the lexicographically first name.
    """
    qualifying = [p for p in _regular(plans) if p.down >= MIN_DOWN_MBPS]
    if not qualifying:
        return None
    return min(qualifying, key=lambda p: (p.price, -p.down, p.plan_name or ""))


def _closest_to_target(plans: Sequence[PlanRecord]) -> PlanRecord:
    return min(plans, key=lambda p: (abs(p.down - TARGET_DOWN_MBPS), p.price, p.plan_name or ""))


def representative_plan(per_bsl_plans: Mapping[str, Iterable[PlanRecord]]) -> Tuple[float, float]:
    """Block-group summary (speed, price) from per-location plans.

    Each location contributes its regular plan closest to 100 Mbps (cheaper
    wins ties). The speed is the lower median of those selections, so it is
    always one actually offered; the price is the median over locations
    whose selection has that speed. Locations without a regular plan are
    skipped.
    """
    picks = []
    for bsl in sorted(per_bsl_plans):
        regular = _regular(per_bsl_plans[bsl])
        if regular:
            picks.append(_closest_to_target(regular))
    if not picks:
        raise EmptyCbg("no location has a regular-priced plan")
    speeds = sorted(p.down for p in picks)
    speed = speeds[(len(speeds) - 1) // 2]
    price = statistics.median(p.price for p in picks if p.down == speed)
    return speed, price


# --------------------------------------------------------------------------
# outcomes and markets

def classify_outcome(result: QueryResult) -> ServiceClass:
    return classify_key(result.status, result.outcome_label, len(result.plans))


def classify_key(status, outcome, plan_count: int) -> ServiceClass:
    """Classification from (status, outcome, plan count); works on log rows."""
    status = QueryStatus(status)
    if status is not QueryStatus.TERMINAL:
        return ServiceClass.UNKNOWN
    outcome = OutcomeLabel(outcome)
    if outcome is OutcomeLabel.PLANS_PAGE:
        return ServiceClass.SERVICEABLE_WITH_PLANS if plan_count else ServiceClass.SERVICEABLE_NO_PLANS
    if outcome is OutcomeLabel.SERVICE_CONFIRMED_NO_PLANS:
        return ServiceClass.SERVICEABLE_NO_PLANS
    if outcome is OutcomeLabel.NO_SERVICE:
        return ServiceClass.NO_SERVICE
    if outcome in (OutcomeLabel.UNKNOWN, OutcomeLabel.ACTIVE_SERVICE):
        return ServiceClass.UNKNOWN
    raise ValueError(f"unhandled outcome {outcome!r}")


def _shares(sizes: Sequence[int]) -> MarketShares:
    sizes = [s for s in sizes if s > 0]
    if not sizes:
        raise EmptyInput("no covered block groups")
    n = len(sizes)
    return MarketShares(sum(s == 1 for s in sizes) / n, sum(s == 2 for s in sizes) / n,
                        sum(s >= 3 for s in sizes) / n, n)


def market_structure(coverage: Mapping[str, Set[str]], isp_id: Optional[str] = None) -> MarketShares:
    """Monopoly / duopoly / triopoly+ shares over block groups.

    With ``isp_id``, shares are over that provider's covered block groups.
    Block groups with no provider are not classified.
    """
    if not coverage:
        raise EmptyInput("coverage is empty")
    sets = coverage.values() if isp_id is None else [s for s in coverage.values() if isp_id in s]
    return _shares([len(s) for s in sets])


def coverage_from_plans(plans: Iterable[PlanRecord]) -> Dict[str, Set[str]]:
    cov: Dict[str, Set[str]] = defaultdict(set)
    for p in plans:
        if p.cbg_id is not None:
            cov[p.cbg_id].add(p.isp_id)
    return dict(cov)


def bead_eligible(cbg: CbgRecord) -> bool:
    """At least half of the block group's locations unserved or underserved."""
    if cbg.bsl_count <= 0:
        raise ZeroBsl(f"{cbg.cbg_id} has no serviceable locations")
    return 2 * cbg.unserved_plus_underserved >= cbg.bsl_count


# --------------------------------------------------------------------------
# frontier and baseline

def _by_cbg(plans: Iterable[PlanRecord]) -> Dict[str, List[PlanRecord]]:
    out: Dict[str, List[PlanRecord]] = defaultdict(list)
    for p in plans:
        if p.cbg_id is not None:
            out[p.cbg_id].append(p)
    return out


def coverage_quality(cbg: CbgRecord, plans: Sequence[PlanRecord]) -> float:
    """Share of queried addresses that produced curated plans."""
    denom = cbg.queried_addresses if cbg.queried_addresses else cbg.bsl_count
    if denom <= 0:
        return 0.0
    return min(1.0, len({p.address for p in plans}) / denom)


def frontier_point(cbg: CbgRecord, plans: Sequence[PlanRecord],
                   mode: FrontierMode = FrontierMode.LOW_COST) -> FrontierPoint:
    threshold = affordability_threshold(cbg)
    quality = coverage_quality(cbg, plans)
    curated = bool(plans)
    mode = FrontierMode(mode)
    if mode is FrontierMode.LOW_COST:
        by_isp: Dict[str, List[PlanRecord]] = defaultdict(list)
        for p in plans:
            by_isp[p.isp_id].append(p)
        best = [lc for lc in (low_cost_plan(v) for _, v in sorted(by_isp.items())) if lc is not None]
        if not best:
            return FrontierPoint(cbg.cbg_id, None, threshold, False, quality, None, curated)
        pick = min(best, key=lambda p: (p.price, -p.down, p.isp_id, p.plan_name or ""))
        return FrontierPoint(cbg.cbg_id, pick.price, threshold, True, quality, pick.down, curated)
    per_bsl: Dict[str, List[PlanRecord]] = defaultdict(list)
    for p in plans:
        per_bsl[p.address].append(p)
    try:
        speed, price = representative_plan(per_bsl)
    except EmptyCbg:
        return FrontierPoint(cbg.cbg_id, None, threshold, False, quality, None, curated)
    return FrontierPoint(cbg.cbg_id, price, threshold, speed >= MIN_DOWN_MBPS, quality, speed, curated)


def frontier(cbgs: Sequence[CbgRecord], plans: Iterable[PlanRecord],
             mode: FrontierMode = FrontierMode.LOW_COST) -> Tuple[List[FrontierPoint], FrontierSummary]:
    """One point per block group plus affordability shares over all of them."""
    if not cbgs:
        raise EmptyInput("no block groups")
    grouped = _by_cbg(plans)
    points = [frontier_point(c, grouped.get(c.cbg_id, []), mode) for c in cbgs]
    n = len(points)
    affordable = [p.affordable for p in points]
    weights = [c.population_weight for c in cbgs]
    total_w = sum(weights)
    summary = FrontierSummary(
        n_cbgs=n,
        frac_with_affordable_plan=sum(affordable) / n,
        frac_without=(n - sum(affordable)) / n,
        frac_no_qualifying_plan=sum(not p.qualifying for p in points) / n,
        population_share_affordable=(sum(w for w, a in zip(weights, affordable) if a) / total_w) if total_w else 0.0,
    )
    return points, summary


def benchmark_share(points: Sequence[FrontierPoint], cbgs: Sequence[CbgRecord],
                    benchmark: float = DEFAULT_BENCHMARK) -> float:
    """Population-weighted share of block groups with a qualifying plan at or
    below a flat monthly benchmark."""
    weight = {c.cbg_id: c.population_weight for c in cbgs}
    total = sum(weight[p.cbg_id] for p in points)
    if not total:
        return 0.0
    hit = sum(weight[p.cbg_id] for p in points
              if p.qualifying and p.plan_price is not None and p.plan_price <= benchmark)
    return hit / total


def baseline_stats(cbgs: Sequence[CbgRecord], representative_points: Sequence[FrontierPoint],
                   low_cost_points: Sequence[FrontierPoint]) -> BaselineStats:
    """Service conditions over block groups with at least one curated plan.

    Price and speed shares use the representative plan; the no-qualifying
    share uses the low-cost selection across all providers.
    """
    ids = {c.cbg_id for c in cbgs}
    rep = {p.cbg_id: p for p in representative_points}
    low = {p.cbg_id: p for p in low_cost_points}
    missing = (set(rep) | set(low)) - ids
    if missing:
        raise SchemaError(f"frontier points for unknown block groups: {sorted(missing)}", "cbg_id")
    base = [c.cbg_id for c in cbgs if c.cbg_id in rep and rep[c.cbg_id].curated]
    n = len(base)
    if n == 0:
        return BaselineStats(0.0, 0.0, 0.0, 0)
    above = sum(1 for c in base if rep[c].plan_price is not None and rep[c].plan_price > rep[c].threshold)
    slow = sum(1 for c in base if rep[c].down is not None and rep[c].down < MIN_DOWN_MBPS)
    none = sum(1 for c in base if c not in low or not low[c].qualifying)
    return BaselineStats(above / n, slow / n, none / n, n)


# --------------------------------------------------------------------------
# files

CBG_COLUMNS = ("cbg_id", "income_20th_pct_disposable", "bsl_count", "unserved_plus_underserved", "population_weight")
FRONTIER_COLUMNS = ("cbg_id", "plan_price", "threshold", "qualifying", "coverage_quality")


def load_cbgs(path) -> List[CbgRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CBG_COLUMNS[:4] if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"missing columns {missing}", str(path))
        out = []
        for i, row in enumerate(reader, start=2):
            try:
                q = row.get("queried_addresses")
                out.append(CbgRecord(row["cbg_id"], float(row["income_20th_pct_disposable"]), int(row["bsl_count"]),
                                     int(row["unserved_plus_underserved"]),
                                     float(row.get("population_weight") or 1.0), int(q) if q else None))
            except ValueError as exc:
                raise SchemaError(str(exc), f"{path}:{i}") from None
        return out


def load_plans(path) -> List[PlanRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(PlanRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError) as exc:
                    raise SchemaError(str(exc), f"{path}:{i}") from None
    return out


def write_frontier_csv(points: Sequence[FrontierPoint], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FRONTIER_COLUMNS)
    for p in points:
        w.writerow([p.cbg_id, "" if p.plan_price is None else f"{p.plan_price:.2f}", f"{p.threshold:.2f}",
                    str(p.qualifying).lower(), f"{p.coverage_quality:.4f}"])


def analyze(cbgs: Sequence[CbgRecord], plans: Sequence[PlanRecord]) -> Tuple[List[FrontierPoint], Dict]:
    """Everything the analysis command reports: low-cost frontier points and a
    summary with representative baselines over eligible block groups."""
    low_points, low_summary = frontier(cbgs, plans, FrontierMode.LOW_COST)
    rep_points, rep_summary = frontier(cbgs, plans, FrontierMode.REPRESENTATIVE)
    eligible = [c for c in cbgs if c.bsl_count > 0 and bead_eligible(c)]
    elig_ids = {c.cbg_id for c in eligible}
    coverage = coverage_from_plans(plans)
    summary = {
        "frontier": asdict(low_summary),
        "representative_frontier": asdict(rep_summary),
        "benchmark_share": benchmark_share(low_points, cbgs),
        "bead_eligible": sorted(elig_ids),
        "baseline_eligible": asdict(baseline_stats(
            eligible, [p for p in rep_points if p.cbg_id in elig_ids],
            [p for p in low_points if p.cbg_id in elig_ids])),
        "market_structure": asdict(market_structure(coverage)) if any(coverage.values()) else None,
        "market_structure_by_isp": {isp: asdict(market_structure(coverage, isp))
                                    for isp in sorted({i for s in coverage.values() for i in s})},
    }
    return low_points, summary
