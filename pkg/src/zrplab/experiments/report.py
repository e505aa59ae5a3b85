"""
Per-experiment reports: one row per target with estimate, SE and verdict.

Gates follow one convention throughout.  Equality targets pass when the
estimate is within four standard errors (or a stated relative tolerance,
whichever is wider).  Exponent bounds pass when the bound holds within
three standard errors.  Trend and ratio conditions are judged on the point
estimates, with their standard errors reported alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Optional

__all__ = [
    "Row",
    "ExperimentReport",
    "equality_row",
    "lower_bound_row",
    "condition_row",
    "info_row",
    "report_schema",
    "EQUALITY_Z",
    "EXPONENT_Z",
]

EQUALITY_Z = 4.0
EXPONENT_Z = 3.0


def _clean(x: Any) -> Any:
    """JSON-safe floats: non-finite values become ``None``."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and callable(x.item):  # numpy scalar
        return _clean(x.item())
    return x


@dataclass
class Row:
    target: str
    kind: str  # equality | bound | condition | info
    estimate: Optional[float]
    se: Optional[float]
    target_value: Optional[float]
    rule: str
    z: Optional[float]
    verdict: str  # pass | fail | info
    detail: dict = field(default_factory=dict)

    @property
    def gating(self) -> bool:
        return self.verdict != "info"

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "info")


def _z(est: float, se: float, target: float) -> Optional[float]:
    if se and se > 0:
        return (est - target) / se
    return None if est != target else 0.0


def equality_row(target: str, est: float, se: float, value: float, rel_tol: float = 0.0,
                 detail: dict | None = None) -> Row:
    """Pass iff ``|est - value| <= max(4 se, rel_tol |value|)``."""
    tol = max(EQUALITY_Z * se, rel_tol * abs(value))
    rule = f"|est - target| <= max(4 SE, {rel_tol:g} |target|)" if rel_tol else "|est - target| <= 4 SE"
    ok = abs(est - value) <= tol
    return Row(target, "equality", est, se, value, rule, _z(est, se, value), "pass" if ok else "fail",
               detail or {})


def lower_bound_row(target: str, est: float, se: float, bound: float, k: float = EXPONENT_Z,
                    detail: dict | None = None) -> Row:
    """Pass iff ``est >= bound - k se``."""
    ok = est >= bound - k * se
    return Row(target, "bound", est, se, bound, f"est >= target - {k:g} SE", _z(est, se, bound),
               "pass" if ok else "fail", detail or {})


def condition_row(target: str, est: Optional[float], ok: bool, rule: str, se: Optional[float] = None,
                  value: Optional[float] = None, detail: dict | None = None) -> Row:
    return Row(target, "condition", est, se, value, rule, None, "pass" if ok else "fail", detail or {})


def info_row(target: str, est: Optional[float], se: Optional[float] = None, value: Optional[float] = None,
             rule: str = "informational", detail: dict | None = None) -> Row:
    return Row(target, "info", est, se, value, rule, None, "info", detail or {})


@dataclass
class ExperimentReport:
    name: str
    scenario: str
    config: dict
    seeds: dict
    rows: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    status: str = "ok"  # ok | errored
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(r.passed for r in self.rows)

    def row(self, target: str) -> Row:
        for r in self.rows:
            if r.target == target:
                return r
        raise KeyError(target)

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "scenario": self.scenario,
            "status": self.status,
            "error": self.error,
            "passed": self.passed,
            "config": self.config,
            "seeds": self.seeds,
            "params": self.params,
            "rows": [asdict(r) for r in self.rows],
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def lines(self) -> list[str]:
        """One human-readable line per row."""
        out = []
        for r in self.rows:
            est = "n/a" if r.estimate is None else f"{r.estimate:.6g}"
            se = "" if r.se is None else f" +/- {r.se:.3g}"
            tv = "" if r.target_value is None else f" (target {r.target_value:.6g})"
            out.append(f"[{r.verdict.upper():4s}] {self.name}: {r.target} = {est}{se}{tv}")
        if self.status != "ok":
            out.append(f"[ERR ] {self.name}: {self.error}")
        return out


def report_schema() -> dict:
    """The JSON schema every ``report.json`` conforms to."""
    text = resources.files("zrplab.schemas").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
