"""Plan records shared by extraction, campaign persistence and analytics."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional


class PricingKind(str, Enum):
    REGULAR = "REGULAR"
    PROMOTIONAL = "PROMOTIONAL"


@dataclass(frozen=True)
class PlanRecord:
    """One advertised plan. Fields the page did not show stay ``None``."""

    isp_id: str
    address: str
    plan_name: Optional[str] = None
    price: Optional[float] = None
    down: Optional[float] = None
    up: Optional[float] = None
    pricing_kind: Optional[PricingKind] = None
    cbg_id: Optional[str] = None
    round: Optional[int] = None
    timestamp: Optional[float] = None
    access_type: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["pricing_kind"] = self.pricing_kind.value if self.pricing_kind else None
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "PlanRecord":
        kind = d.get("pricing_kind")
        return cls(
            isp_id=d["isp_id"],
            address=d.get("address", ""),
            plan_name=d.get("plan_name"),
            price=d.get("price"),
            down=d.get("down"),
            up=d.get("up"),
            pricing_kind=PricingKind(kind) if kind else None,
            cbg_id=d.get("cbg_id"),
            round=d.get("round"),
            timestamp=d.get("timestamp"),
            access_type=d.get("access_type"),
        )
