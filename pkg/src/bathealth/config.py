"""Pipeline configuration loaded from JSON, with environment overrides."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .evaluation import DEFAULT_GROUPS, EngineConfig, ScreeningConfig
from .kernels import IntervalSpec, Reference, SampleEntropyParams
from .regression import WoaConfig
from .registry import CANONICAL_FUSIONS, ExtractionSettings
from .synth import FadeModel, NoiseModel, SynthCellParams, SynthFleetParams

CONFIG_SCHEMA = "bathealth.config/1"
REPORT_SCHEMA = "bathealth.report/1"
ENV_OUT = "BATHEALTH_OUT"
ENV_JOBS = "BATHEALTH_JOBS"


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    format: str = "generic-cycles"
    nominal_capacity: float | None = None
    capacity_path: str | None = None
    cell_id: str | None = None
    current_sign: str = "charge-positive"
    upper_cutoff: float | None = None
    lower_cutoff: float | None = None
    cc_charge_current: float | None = None


@dataclass(frozen=True)
class SyntheticSpec:
    n_cells: int = 4
    cycles: int = 200
    fade_rate: float = 0.1
    resistance_growth: float = 2e-4
    noise_scale: float = 1.0
    jitter: float = 0.15
    n_sessions: int = 20000
    charging_fraction: float = 0.35

    def cell_base(self) -> SynthCellParams:
        n = NoiseModel()
        noise = NoiseModel(n.voltage * self.noise_scale, n.current * self.noise_scale,
                           n.temperature * self.noise_scale)
        return SynthCellParams(cycles=self.cycles, fade=FadeModel(rate=self.fade_rate),
                               resistance_growth=self.resistance_growth, noise=noise)

    def fleet(self, seed: int) -> SynthFleetParams:
        return SynthFleetParams(n_sessions=self.n_sessions, charging_fraction=self.charging_fraction, seed=seed)


@dataclass(frozen=True)
class GridSpec:
    n_points: int = 10
    refine: bool = True
    bounds: dict[str, list] = field(default_factory=dict)


@dataclass(frozen=True)
class HeatmapSpec:
    his: tuple[str, ...] = ("VRE_SOC", "CDE_SOC", "TRE_SOC", "VDE_SOC")
    step: float = 5.0
    soc_range: tuple[float, float] = (0.0, 100.0)


@dataclass(frozen=True)
class ScreeningSpec:
    pcc_threshold: float = 0.9
    probability_floor: float = 0.05
    rmse_ceiling: float = 2.5
    redundancy_groups: tuple = DEFAULT_GROUPS
    records: str | None = None
    probabilities: str | None = None

    def config(self) -> ScreeningConfig:
        groups = tuple((k, tuple(m)) for k, m in self.redundancy_groups)
        return ScreeningConfig(self.pcc_threshold, groups, self.probability_floor, self.rmse_ceiling)


@dataclass(frozen=True)
class EngineSpec:
    hidden: int = 20
    ridge: float = 1e-8
    n_seeds: int = 10
    train_fraction: float = 0.6
    population_size: int = 20
    max_iterations: int = 30
    woa_fitness: str = "train"

    def config(self, seed: int) -> EngineConfig:
        return EngineConfig(self.hidden, self.ridge, tuple(seed + k for k in range(self.n_seeds)),
                            self.train_fraction, WoaConfig(self.population_size, self.max_iterations),
                            self.woa_fitness)


@dataclass(frozen=True)
class ExtractionSpec:
    smooth_window: int = 5
    ic_bin_width: float = 0.01
    dt_bin_width: float = 0.01
    dv_bin_fraction: float = 0.01
    entropy_m: int = 1
    entropy_r: float = 0.15

    def settings(self) -> ExtractionSettings:
        return ExtractionSettings(self.smooth_window, self.ic_bin_width, self.dt_bin_width, self.dv_bin_fraction,
                                  self.smooth_window, SampleEntropyParams(self.entropy_m, self.entropy_r))


@dataclass(frozen=True)
class PipelineConfig:
    datasets: tuple[DatasetSpec, ...] = ()
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    sessions: str | None = None
    his: tuple[str, ...] | None = None
    intervals: dict[str, list] = field(default_factory=dict)
    extraction: ExtractionSpec = field(default_factory=ExtractionSpec)
    engine: EngineSpec = field(default_factory=EngineSpec)
    grid_search: GridSpec = field(default_factory=GridSpec)
    heatmap: HeatmapSpec = field(default_factory=HeatmapSpec)
    screening: ScreeningSpec = field(default_factory=ScreeningSpec)
    fusions: dict[str, list] = field(default_factory=lambda: {k: list(v) for k, v in CANONICAL_FUSIONS.items()})
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    base_dir: str = "."

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def interval_specs(self) -> dict[str, IntervalSpec]:
        return {k: parse_interval(v) for k, v in self.intervals.items()}

    def canonical(self) -> dict:
        """Settings that determine outputs; excludes out dir, jobs and base dir."""
        d = _plain(self)
        for k in ("out", "jobs", "base_dir"):
            d.pop(k)
        return d

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def parse_interval(v) -> IntervalSpec:
    if isinstance(v, IntervalSpec):
        return v
    if isinstance(v, dict):
        v = [v["reference"], v["lower"], v["upper"]]
    try:
        ref, lo, hi = v
        return IntervalSpec(Reference(ref), float(lo), float(hi))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad interval {v!r}: expected [reference, lower, upper]") from exc


def _plain(obj):
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if isinstance(v, list) and k not in ("redundancy_groups",) and cls is not GridSpec:
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: dict, base_dir: str = ".") -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    d = dict(d)
    d.pop("schema", None)
    names = {f.name for f in fields(PipelineConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw: dict[str, Any] = {"base_dir": base_dir}
    if "datasets" in d:
        kw["datasets"] = tuple(_build(DatasetSpec, x, "datasets[]") for x in d["datasets"])
    for key, cls in (("synthetic", SyntheticSpec), ("extraction", ExtractionSpec), ("engine", EngineSpec),
                     ("grid_search", GridSpec), ("heatmap", HeatmapSpec), ("screening", ScreeningSpec)):
        if key in d:
            kw[key] = _build(cls, d[key], key)
    if d.get("his") is not None:
        kw["his"] = tuple(d["his"])
    for key in ("sessions", "intervals", "fusions", "seed", "out", "jobs"):
        if key in d:
            kw[key] = d[key]
    cfg = PipelineConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.engine.n_seeds < 1 or cfg.engine.hidden < 1:
        raise ConfigError("engine needs n_seeds >= 1 and hidden >= 1")
    if cfg.engine.ridge < 0:
        raise ConfigError("ridge must be >= 0")
    if cfg.grid_search.n_points < 3:
        raise ConfigError("grid_search.n_points must be >= 3")
    if cfg.synthetic.n_cells < 1 or cfg.synthetic.cycles < 1:
        raise ConfigError("synthetic needs n_cells >= 1 and cycles >= 1")
    cfg.interval_specs()
    cfg.screening.config()


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {p} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    return config_from_dict(data, str(p.parent))


def apply_overrides(cfg: PipelineConfig, out: str | None = None, seed: int | None = None,
                    jobs: int | None = None, environ=os.environ) -> PipelineConfig:
    """Precedence: command-line flag, then environment variable, then config file."""
    changes: dict[str, Any] = {}
    if environ.get(ENV_OUT):
        changes["out"] = environ[ENV_OUT]
    if environ.get(ENV_JOBS):
        try:
            changes["jobs"] = int(environ[ENV_JOBS])
        except ValueError:
            raise ConfigError(f"{ENV_JOBS} must be an integer") from None
    if out is not None:
        changes["out"] = out
    if jobs is not None:
        changes["jobs"] = jobs
    if seed is not None:
        changes["seed"] = seed
    cfg = replace(cfg, **changes)
    validate(cfg)
    return cfg


def config_json_schema() -> dict:
    """Top-level keys and their defaults, as published documentation."""
    return {"schema": CONFIG_SCHEMA, "defaults": _plain(PipelineConfig())}
