"""HI scoring by correlation and regression error, interval search, heatmaps
and the multi-step screening workflow."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import CellHistory
from .errors import (
    ConfigError,
    ConversionError,
    DegenerateInputError,
    EvaluationError,
    InsufficientDataError,
    SearchError,
)
from .kernels import IntervalSpec, Reference
from .regression import DEFAULT_HIDDEN, DEFAULT_RIDGE, WoaConfig, rmse, split_train_test, train_elm, train_woa_elm
from .registry import (
    Category,
    ExtractionSettings,
    HIDescriptor,
    Registry,
    builtin_registry,
    extract,
    extract_many,
    to_soc_based,
)

MIN_CYCLES = 5


def pcc(x, y) -> float:
    """Pearson r after pairwise-dropping NaN."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InsufficientDataError(f"length mismatch {x.shape} vs {y.shape}")
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise InsufficientDataError(f"only {x.size} complete pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class EngineConfig:
    hidden: int = DEFAULT_HIDDEN
    ridge: float = DEFAULT_RIDGE
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.6
    woa: WoaConfig = field(default_factory=WoaConfig)
    woa_fitness: str = "train"


@dataclass(frozen=True)
class CellResult:
    pcc: float | None
    rmse_elm: float
    rmse_woa_elm: float
    n_cycles: int


@dataclass(frozen=True)
class EvaluationRecord:
    hi_id: str
    per_cell_pcc: dict[str, float]
    mean_abs_pcc: float | None
    rmse_elm: float | None
    rmse_woa_elm: float | None
    interval: IntervalSpec | None = None
    n_cycles_used: dict[str, int] = field(default_factory=dict)
    excluded: dict[str, str] = field(default_factory=dict)
    per_cell_rmse: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "hi_id": self.hi_id,
            "mean_abs_pcc": self.mean_abs_pcc,
            "rmse_elm": self.rmse_elm,
            "rmse_woa_elm": self.rmse_woa_elm,
            "interval": self.interval.to_list() if self.interval else None,
            "per_cell_pcc": dict(sorted(self.per_cell_pcc.items())),
            "per_cell_rmse": {k: list(v) for k, v in sorted(self.per_cell_rmse.items())},
            "n_cycles_used": dict(sorted(self.n_cycles_used.items())),
            "excluded": dict(sorted(self.excluded.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvaluationRecord":
        iv = d.get("interval")
        return cls(
            hi_id=d["hi_id"],
            per_cell_pcc=dict(d.get("per_cell_pcc", {})),
            mean_abs_pcc=d.get("mean_abs_pcc"),
            rmse_elm=d.get("rmse_elm"),
            rmse_woa_elm=d.get("rmse_woa_elm"),
            interval=IntervalSpec(Reference(iv[0]), iv[1], iv[2]) if iv else None,
            n_cycles_used=dict(d.get("n_cycles_used", {})),
            excluded=dict(d.get("excluded", {})),
            per_cell_rmse={k: tuple(v) for k, v in d.get("per_cell_rmse", {}).items()},
        )


def _features(history: CellHistory, descriptor: HIDescriptor, interval, settings, registry):
    vals = extract(history, descriptor, interval, settings, registry)
    X = vals if vals.ndim == 2 else vals[:, None]
    ok = ~np.isnan(X).any(axis=1)
    return X[ok], history.soh[ok]


def regression_errors(X: np.ndarray, y: np.ndarray, engine: EngineConfig) -> tuple[float, float]:
    """Median-over-seeds test RMSE of ELM and WOA-ELM on the chronological split."""
    train, test = split_train_test(len(y), engine.train_fraction)
    e_elm, e_woa = [], []
    for seed in engine.seeds:
        m = train_elm(X[train], y[train], engine.hidden, engine.ridge, seed)
        e_elm.append(rmse(y[test], m.predict(X[test])))
        woa = WoaConfig(engine.woa.population_size, engine.woa.max_iterations, engine.woa.spiral_constant,
                        engine.woa.lower, engine.woa.upper, seed)
        w = train_woa_elm(X[train], y[train], engine.hidden, woa, engine.ridge, seed, engine.woa_fitness)
        e_woa.append(rmse(y[test], w.predict(X[test])))
    return float(np.median(e_elm)), float(np.median(e_woa))


def evaluate_hi(histories: Sequence[CellHistory], descriptor: HIDescriptor, interval=None,
                engine: EngineConfig | None = None, settings: ExtractionSettings | None = None,
                registry: Registry | None = None, regression: bool = True) -> EvaluationRecord:
    """Per-cell PCC and regression error, averaged over non-degenerate cells."""
    if not histories:
        raise EvaluationError("no cell histories")
    engine = engine or EngineConfig()
    vector = descriptor.category is Category.FUSION
    per_pcc, per_rmse, used, excluded = {}, {}, {}, {}
    for h in histories:
        X, y = _features(h, descriptor, interval, settings, registry)
        used[h.cell_id] = len(y)
        if len(y) < MIN_CYCLES:
            excluded[h.cell_id] = f"only {len(y)} cycles with defined values"
            continue
        try:
            if not vector:
                per_pcc[h.cell_id] = pcc(X[:, 0], y)
            elif np.all(np.ptp(X, axis=0) == 0):
                raise DegenerateInputError("constant feature vector")
        except (DegenerateInputError, InsufficientDataError) as exc:
            excluded[h.cell_id] = str(exc)
            continue
        if regression:
            per_rmse[h.cell_id] = regression_errors(X, y, engine)
    valid = [c for c in used if c not in excluded]
    if not valid:
        raise EvaluationError(f"{descriptor.id}: every cell is degenerate or lacks data ({excluded})")
    mean_pcc = None if vector else float(np.mean([abs(per_pcc[c]) for c in valid]))
    r_elm = float(np.mean([per_rmse[c][0] for c in valid])) if regression else None
    r_woa = float(np.mean([per_rmse[c][1] for c in valid])) if regression else None
    iv = interval if isinstance(interval, IntervalSpec) else None
    if iv is None and descriptor.partial and not vector:
        iv = descriptor.default_interval
    return EvaluationRecord(descriptor.id, per_pcc, mean_pcc, r_elm, r_woa, iv, used, excluded, per_rmse)


def _mean_abs_pcc(columns: Iterable[tuple[np.ndarray, np.ndarray]]) -> tuple[float | None, str]:
    """Mean |PCC| over cells; status is ok, missing (no coverage anywhere) or degenerate."""
    vals, covered = [], False
    for x, soh in columns:
        if np.any(~np.isnan(x)):
            covered = True
        try:
            vals.append(abs(pcc(x, soh)))
        except (DegenerateInputError, InsufficientDataError):
            pass
    if vals:
        return float(np.mean(vals)), "ok"
    return None, "degenerate" if covered else "missing"


def _score_intervals(histories, descriptor, intervals, settings):
    per_cell = [extract_many(h, descriptor, intervals, settings) for h in histories]
    return [
        _mean_abs_pcc((per_cell[c][k], h.soh) for c, h in enumerate(histories))
        for k in range(len(intervals))
    ]


# --------------------------------------------------------------------------
# interval search


@dataclass(frozen=True)
class GridSearchResult:
    best: IntervalSpec
    best_score: float
    candidates: tuple[tuple[IntervalSpec, float | None], ...]
    refined: bool


def grid_candidates(bounds: IntervalSpec, n_points: int) -> tuple[np.ndarray, list[IntervalSpec]]:
    grid = np.linspace(bounds.lower, bounds.upper, n_points)
    return grid, [IntervalSpec(bounds.reference, float(grid[i]), float(grid[j]))
                  for i, j in itertools.combinations(range(n_points), 2)]


def grid_search_interval(histories: Sequence[CellHistory], descriptor: HIDescriptor, search_bounds: IntervalSpec,
                         n_points: int = 10, refine: bool = False, settings: ExtractionSettings | None = None,
                         refine_below: float = 0.95) -> GridSearchResult:
    """Exhaustive search over breakpoint pairs maximizing mean |PCC|."""
    if n_points < 3:
        raise SearchError("n_points must be >= 3")
    if not descriptor.partial or descriptor.category is Category.FUSION:
        raise SearchError(f"{descriptor.id} has no interval to search")
    grid, cands = grid_candidates(search_bounds, n_points)
    scores = [s for s, _ in _score_intervals(histories, descriptor, cands, settings)]
    evaluated = list(zip(cands, scores))

    def argmax(items):
        best = None
        for iv, s in items:
            if s is not None and (best is None or s > best[1]):
                best = (iv, s)
        return best

    best = argmax(evaluated)
    if best is None:
        raise SearchError(f"{descriptor.id}: no candidate interval gave a defined PCC")
    refined = False
    if refine and best[1] < refine_below:
        i = int(np.argmin(np.abs(grid - best[0].lower)))
        j = int(np.argmin(np.abs(grid - best[0].upper)))
        lo, hi = grid[max(i - 1, 0)], grid[min(j + 1, n_points - 1)]
        _, more = grid_candidates(IntervalSpec(search_bounds.reference, float(lo), float(hi)), n_points)
        more_scores = [s for s, _ in _score_intervals(histories, descriptor, more, settings)]
        evaluated += list(zip(more, more_scores))
        best = argmax(evaluated)
        refined = True
    return GridSearchResult(best[0], best[1], tuple(evaluated), refined)


# --------------------------------------------------------------------------
# heatmaps


@dataclass(frozen=True)
class HeatmapTable:
    hi_id: str
    grid: tuple[float, ...]
    values: dict[tuple[float, float], float | None]
    status: dict[tuple[float, float], str]

    def degenerate(self) -> list[tuple[float, float]]:
        return [k for k, s in self.status.items() if s == "degenerate"]

    def missing(self) -> list[tuple[float, float]]:
        return [k for k, s in self.status.items() if s == "missing"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["start\\end", *[f"{g:g}" for g in self.grid]])
            for s in self.grid:
                row = [f"{s:g}"]
                for e in self.grid:
                    v = self.values.get((s, e))
                    row.append("" if v is None else repr(float(v)))
                w.writerow(row)


def soc_heatmap(histories: Sequence[CellHistory], descriptor: HIDescriptor, step: float = 5.0,
                soc_range: tuple[float, float] = (0.0, 100.0),
                settings: ExtractionSettings | None = None) -> HeatmapTable:
    if descriptor.category is not Category.SOC_BASED:
        raise ConversionError(f"{descriptor.id} is not SOC-referenced")
    lo, hi = soc_range
    n = (hi - lo) / step
    if step <= 0 or abs(n - round(n)) > 1e-9 or n < 1:
        raise ConfigError(f"step {step} does not divide [{lo}, {hi}]")
    grid = tuple(float(lo + k * step) for k in range(int(round(n)) + 1))
    pairs = list(itertools.combinations(grid, 2))
    ivs = [IntervalSpec(Reference.SOC_PCT, a, b) for a, b in pairs]
    scored = _score_intervals(histories, descriptor, ivs, settings)
    values = {p: s for p, (s, _) in zip(pairs, scored)}
    status = {p: st for p, (_, st) in zip(pairs, scored)}
    return HeatmapTable(descriptor.id, grid, values, status)


# --------------------------------------------------------------------------
# screening

DEFAULT_GROUPS = (
    ("VDET", ("TEVD", "VDET", "SDV")),
    ("VRET", ("TEVR", "VRET", "SCV")),
    ("CDET", ("TECD", "CDET", "SCC")),
    ("TRET", ("TETR", "TRET", "SDT")),
    ("ICP", ("ICP", "ICPL")),
)


@dataclass(frozen=True)
class ScreeningConfig:
    pcc_threshold: float = 0.9
    redundancy_groups: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_GROUPS
    probability_floor: float = 0.05
    rmse_ceiling: float = 2.5

    def __post_init__(self):
        if not 0.0 < self.pcc_threshold < 1.0:
            raise ConfigError("pcc_threshold must lie in (0, 1)")
        for keeper, members in self.redundancy_groups:
            if keeper not in members:
                raise ConfigError(f"keeper {keeper} is not in its group {members}")


@dataclass(frozen=True)
class ScreeningReport:
    steps: tuple[tuple[str, tuple[str, ...]], ...]
    dropped: dict[str, str]
    probabilities: dict[str, float]

    @property
    def final(self) -> tuple[str, ...]:
        return self.steps[-1][1]

    def survivors(self, step: int) -> tuple[str, ...]:
        return self.steps[step - 1][1]

    def to_dict(self) -> dict:
        return {
            "steps": [{"name": n, "survivors": list(s), "count": len(s)} for n, s in self.steps],
            "dropped": dict(sorted(self.dropped.items())),
            "probabilities": dict(sorted(self.probabilities.items())),
            "final": list(self.final),
        }


def screen(records: Sequence[EvaluationRecord], registry: Registry | None = None,
           probabilities: Mapping[str, float] | None = None, config: ScreeningConfig | None = None,
           soc_records: Sequence[EvaluationRecord] = ()) -> ScreeningReport:
    """Four-step screening: correlation, partial curves, redundancy, practicality.

    Step 4 checks ``probability_floor`` against the SOC-form probability and
    ``rmse_ceiling`` against the SOC-form WOA-ELM RMSE when a record for it is
    given, else against the source HI's record.
    """
    registry = registry or builtin_registry()
    config = config or ScreeningConfig()
    probabilities = dict(probabilities or {})
    by_id = {r.hi_id: r for r in records}
    soc_by_id = {r.hi_id: r for r in soc_records}
    for hid in by_id:
        if hid not in registry:
            raise ConfigError(f"record for unknown HI {hid!r}")
    for keeper, members in config.redundancy_groups:
        for m in members:
            if m not in registry:
                raise ConfigError(f"redundancy group names unknown HI {m!r}")
    dropped: dict[str, str] = {}

    step1 = []
    for hid, r in by_id.items():
        if r.mean_abs_pcc is not None and r.mean_abs_pcc >= config.pcc_threshold:
            step1.append(hid)
        else:
            dropped[hid] = f"step 1: |PCC| {r.mean_abs_pcc} below {config.pcc_threshold}"

    step2 = []
    for hid in step1:
        if registry[hid].partial:
            step2.append(hid)
        else:
            dropped[hid] = "step 2: needs the full curve"

    step3 = list(step2)
    for keeper, members in config.redundancy_groups:
        if keeper not in step3:
            continue
        for m in members:
            if m != keeper and m in step3:
                step3.remove(m)
                dropped[m] = f"step 3: redundant with {keeper} (keeper has an SOC-convertible reference)"

    step4 = []
    for hid in step3:
        try:
            soc = to_soc_based(registry[hid], registry)
        except ConversionError:
            dropped[hid] = "step 4: no SOC-referenced form, acquisition probability undefined"
            continue
        p = probabilities.get(soc.id)
        if p is None:
            dropped[hid] = f"step 4: no acquisition probability for {soc.id}"
            continue
        rec = soc_by_id.get(soc.id, by_id[hid])
        err = rec.rmse_woa_elm
        if p < config.probability_floor:
            dropped[hid] = f"step 4: {soc.id} probability {p:.4f} below {config.probability_floor}"
        elif err is not None and err > config.rmse_ceiling:
            dropped[hid] = f"step 4: {soc.id} RMSE {err:.3f} above {config.rmse_ceiling}"
        else:
            step4.append(soc.id)

    steps = (
        ("correlation", tuple(step1)),
        ("partial_curve", tuple(step2)),
        ("redundancy", tuple(step3)),
        ("practicality", tuple(step4)),
    )
    return ScreeningReport(steps, dropped, probabilities)


# --------------------------------------------------------------------------
# box summaries


def box_summary(values: Sequence[float]) -> dict:
    """Quartiles by linear interpolation, whiskers at the furthest points within 1.5 IQR."""
    v = np.sort(np.asarray([x for x in values if x is not None and not np.isnan(x)], dtype=float))
    if v.size == 0:
        raise InsufficientDataError("no values to summarize")
    q1, med, q3 = (float(np.quantile(v, q, method="linear")) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "median": med,
        "q1": q1,
        "q3": q3,
        "iqr": iqr,
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(x) for x in v[(v < lo_fence) | (v > hi_fence)]],
    }
