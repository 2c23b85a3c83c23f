"""Fleet session ingestion, SOC usage histograms and acquisition probability.

A session succeeds for an HI if its SOC span permits extraction under the HI's
acquisition rule. Probabilities use the sessions of the matching scenario as
denominator (charging sessions for charge HIs, driving sessions for discharge
HIs); fusion across scenarios multiplies the per-scenario probabilities.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, FormatError, InsufficientDataError

SESSION_COLUMNS = ("start_soc", "end_soc", "category")
CATEGORY_CODES = {"10": "driving", "30": "charging", "50": "charging"}


class SessionCategory(str, enum.Enum):
    DRIVING = "driving"
    CHARGING = "charging"


class Scenario(str, enum.Enum):
    CHARGE = "charge"
    DISCHARGE = "discharge"

    @property
    def category(self) -> SessionCategory:
        return SessionCategory.CHARGING if self is Scenario.CHARGE else SessionCategory.DRIVING


@dataclass(frozen=True)
class DrivingSession:
    start_soc: float
    end_soc: float
    category: SessionCategory
    start_time: float | None = None
    end_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "category", SessionCategory(self.category))
        problem = session_problem(self.start_soc, self.end_soc, self.category)
        if problem:
            raise ArgumentError(problem)

    @property
    def span(self) -> tuple[float, float]:
        return min(self.start_soc, self.end_soc), max(self.start_soc, self.end_soc)


def session_problem(start, end, category) -> str | None:
    if not (0.0 <= start <= 100.0 and 0.0 <= end <= 100.0):
        return "SOC outside [0, 100]"
    if category == SessionCategory.CHARGING and end < start:
        return "charging session loses SOC"
    if category == SessionCategory.DRIVING and end > start:
        return "driving session gains SOC"
    return None


class RuleKind(str, enum.Enum):
    FULL_INTERVAL = "full_interval"
    ANY_SUBWINDOW = "any_subwindow"


@dataclass(frozen=True)
class AcquisitionRule:
    kind: RuleKind = RuleKind.FULL_INTERVAL
    width: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.ANY_SUBWINDOW and not (self.width is not None and self.width > 0):
            raise ArgumentError("ANY_SUBWINDOW needs a positive width")

    @classmethod
    def full(cls) -> "AcquisitionRule":
        return cls(RuleKind.FULL_INTERVAL)

    @classmethod
    def any_subwindow(cls, width: float) -> "AcquisitionRule":
        return cls(RuleKind.ANY_SUBWINDOW, float(width))

    def label(self) -> str:
        return "full" if self.kind is RuleKind.FULL_INTERVAL else f"any {self.width:g}%"


@dataclass(frozen=True)
class SocRequirement:
    scenario: Scenario
    lo: float
    hi: float
    rule: AcquisitionRule = field(default_factory=AcquisitionRule.full)

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not self.lo < self.hi:
            raise ArgumentError(f"SOC window [{self.lo}, {self.hi}] has no width")
        if self.rule.kind is RuleKind.ANY_SUBWINDOW and self.rule.width > self.hi - self.lo:
            raise ArgumentError("sub-window width exceeds the SOC window")

    def satisfied_by(self, session: DrivingSession) -> bool:
        lo, hi = session.span
        if self.rule.kind is RuleKind.FULL_INTERVAL:
            return lo <= self.lo and hi >= self.hi
        overlap = min(hi, self.hi) - max(lo, self.lo)
        return overlap >= self.rule.width


# --------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class QuarantinedRow:
    line: int
    row: tuple[str, ...]
    reason: str


def _parse_category(raw: str) -> SessionCategory | None:
    key = raw.strip().lower()
    key = CATEGORY_CODES.get(key, key)
    try:
        return SessionCategory(key)
    except ValueError:
        return None


def load_sessions(path) -> tuple[list[DrivingSession], list[QuarantinedRow]]:
    """Parse a sessions CSV into valid sessions and quarantined rows."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        missing = [c for c in SESSION_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{path}: missing columns {', '.join(missing)}")
        cols = [header.index(c) for c in SESSION_COLUMNS]
        extra = {c: header.index(c) for c in ("start_time", "end_time") if c in header}
        sessions, quarantined = [], []
        for line, row in enumerate(reader, start=2):
            if not row or not any(x.strip() for x in row):
                continue
            try:
                start, end = float(row[cols[0]]), float(row[cols[1]])
                cat_raw = row[cols[2]]
            except (ValueError, IndexError):
                quarantined.append(QuarantinedRow(line, tuple(row), "unparseable row"))
                continue
            cat = _parse_category(cat_raw)
            if cat is None:
                quarantined.append(QuarantinedRow(line, tuple(row), f"unsupported category {cat_raw!r}"))
                continue
            problem = session_problem(start, end, cat)
            if problem:
                quarantined.append(QuarantinedRow(line, tuple(row), problem))
                continue
            times = {k: float(row[i]) if row[i].strip() else None for k, i in extra.items()}
            sessions.append(DrivingSession(start, end, cat, times.get("start_time"), times.get("end_time")))
    return sessions, quarantined


def ingest_sessions(path, quarantine_path=None) -> list[DrivingSession]:
    """Valid sessions from ``path``; rejected rows go to ``quarantine_path`` if given."""
    sessions, quarantined = load_sessions(path)
    if quarantine_path is not None:
        write_quarantine(quarantined, quarantine_path)
    return sessions


def write_quarantine(rows: Sequence[QuarantinedRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "reason", "row"])
        for q in rows:
            w.writerow([q.line, q.reason, ",".join(q.row)])


def write_sessions(sessions: Iterable[DrivingSession], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SESSION_COLUMNS)
        for s in sessions:
            w.writerow([repr(float(s.start_soc)), repr(float(s.end_soc)), s.category.value])


# --------------------------------------------------------------------------
# usage statistics


@dataclass(frozen=True, eq=False)
class UsageHistogram:
    """Per-category counts of 1% SOC bins; bin k covers [k, k + 1)."""

    counts: dict[SessionCategory, np.ndarray]

    @property
    def total(self) -> np.ndarray:
        return sum(self.counts.values(), np.zeros(100, dtype=np.int64))

    def share(self, lo: int, hi: int, category: SessionCategory | None = None) -> float:
        c = self.total if category is None else self.counts[category]
        mass = int(c.sum())
        return float(c[lo:hi].sum()) / mass if mass else 0.0


def soc_usage_histogram(sessions: Sequence[DrivingSession]) -> UsageHistogram:
    if len(sessions) == 0:
        raise InsufficientDataError("no sessions")
    counts = {cat: np.zeros(100, dtype=np.int64) for cat in SessionCategory}
    for s in sessions:
        lo, hi = s.span
        a, b = int(math.floor(lo)), min(int(math.ceil(hi)), 100)
        if b > a:
            counts[s.category][a:b] += 1
    return UsageHistogram(counts)


# --------------------------------------------------------------------------
# acquisition probability


@dataclass(frozen=True)
class ScenarioCount:
    scenario: Scenario
    numerator: int
    denominator: int

    @property
    def probability(self) -> float:
        return self.numerator / self.denominator


def _scenario_sessions(sessions, scenario: Scenario) -> list[DrivingSession]:
    pool = [s for s in sessions if s.category == scenario.category]
    if not pool:
        raise InsufficientDataError(f"no {scenario.category.value} sessions for a {scenario.value} requirement")
    return pool


def scenario_count(sessions, requirements: Sequence[SocRequirement]) -> ScenarioCount:
    """Sessions that meet every requirement of one scenario simultaneously."""
    scenarios = {r.scenario for r in requirements}
    if len(scenarios) != 1:
        raise ArgumentError("requirements must share one scenario")
    scenario = scenarios.pop()
    pool = _scenario_sessions(sessions, scenario)
    hits = sum(1 for s in pool if all(r.satisfied_by(s) for r in requirements))
    return ScenarioCount(scenario, hits, len(pool))


def acquisition_probability(sessions, requirement: SocRequirement) -> float:
    return scenario_count(sessions, [requirement]).probability


def fusion_breakdown(sessions, requirements: Sequence[SocRequirement]) -> list[ScenarioCount]:
    if len(requirements) == 0:
        raise ArgumentError("fusion needs at least one requirement")
    out = []
    for scenario in Scenario:
        group = [r for r in requirements if r.scenario is scenario]
        if group:
            out.append(scenario_count(sessions, group))
    return out


def combine_scenarios(probabilities: Iterable[float]) -> float:
    """Independence product of per-scenario probabilities."""
    return float(math.prod(probabilities))


def fusion_probability(sessions, requirements: Sequence[SocRequirement]) -> float:
    return combine_scenarios(c.probability for c in fusion_breakdown(sessions, requirements))
