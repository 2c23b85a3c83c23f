"""Deterministic synthetic cells and fleet sessions with known ground truth.

Each cell cycles rest, CC charge, CV charge, rest, CC discharge, rest. The
open-circuit voltage is a tabulated monotone map between terminal voltage and
the lithiation fraction theta, built from a power-law baseline plus two
sigmoid steps so IC curves show two peaks. The usable charge Q_th is chosen
per cycle so that the charge delivered on discharge equals the fade-model
capacity exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import CellHistory, Cycle, SampleSeries, segment_phases
from .errors import ArgumentError
from .fleet import DrivingSession, SessionCategory

# --------------------------------------------------------------------------
# cell model


class FadeKind(str, enum.Enum):
    LINEAR = "linear"
    POWER = "power"


@dataclass(frozen=True)
class FadeModel:
    """SOH_k = 100 - rate * k (LINEAR) or 100 - alpha * k**exponent (POWER), k from 0."""

    kind: FadeKind = FadeKind.LINEAR
    rate: float = 0.1
    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FadeKind(self.kind))
        if self.rate < 0 or self.exponent <= 0:
            raise ArgumentError("fade rate must be >= 0 and exponent > 0")

    def soh(self, k: int) -> float:
        if self.kind is FadeKind.LINEAR:
            return 100.0 - self.rate * k
        return 100.0 - self.rate * float(k) ** self.exponent


@dataclass(frozen=True)
class OcvModel:
    v_min: float = 2.5
    v_max: float = 4.35
    base_weight: float = 0.35
    base_power: float = 1.6
    steps: tuple[tuple[float, float, float], ...] = ((0.40, 3.55, 0.035), (0.25, 3.95, 0.05))  # (amp, center, width)

    def theta_of_v(self, v):
        v = np.asarray(v, dtype=float)
        u = np.clip((v - self.v_min) / (self.v_max - self.v_min), 0.0, 1.0)
        out = self.base_weight * u**self.base_power
        for amp, c, w in self.steps:
            out = out + amp / (1.0 + np.exp(-(v - c) / w))
        return out

    def table(self, n: int = 4001) -> tuple[np.ndarray, np.ndarray]:
        v = np.linspace(self.v_min, self.v_max, n)
        th = self.theta_of_v(v)
        th = (th - th[0]) / (th[-1] - th[0])
        return v, th


@dataclass(frozen=True)
class ThermalModel:
    ambient: float = 24.0
    heat_coefficient: float = 0.03  # K per J of joule heat
    time_constant: float = 1500.0  # s
    entropic_amplitude: float = 0.015  # V, reversible heat term I * eta(theta)


@dataclass(frozen=True)
class NoiseModel:
    voltage: float = 1e-3
    current: float = 2e-3
    temperature: float = 0.02

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SynthCellParams:
    cell_id: str = "SYN01"
    nominal_capacity: float = 2.0
    cycles: int = 200
    fade: FadeModel = field(default_factory=FadeModel)
    resistance: float = 0.08
    resistance_growth: float = 2e-4
    cc_charge_current: float = 1.5
    cc_discharge_current: float = 2.0
    cv_cutoff_current: float = 0.02
    upper_cutoff_voltage: float = 4.2
    lower_cutoff_voltage: float = 2.7
    sample_period: float = 10.0
    rest_period: float = 600.0
    ocv: OcvModel = field(default_factory=OcvModel)
    thermal: ThermalModel = field(default_factory=ThermalModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        for name in ("nominal_capacity", "cc_charge_current", "cc_discharge_current", "cv_cutoff_current",
                     "sample_period"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        for name in ("resistance", "resistance_growth", "rest_period"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be >= 0")
        if self.cycles < 1:
            raise ArgumentError("cycles must be >= 1")
        if not self.ocv.v_min < self.lower_cutoff_voltage < self.upper_cutoff_voltage < self.ocv.v_max:
            raise ArgumentError("cutoff voltages must lie inside the OCV table range")
        if self.cv_cutoff_current >= self.cc_charge_current:
            raise ArgumentError("CV cutoff current must be below the CC charge current")
        last = self.fade.soh(self.cycles - 1)
        if not 0.0 < last <= 100.0:
            raise ArgumentError(f"fade model drives SOH to {last:.3f} within {self.cycles} cycles")


class _Ocv:
    def __init__(self, model: OcvModel):
        self.v, self.theta = model.table()

    def voltage(self, theta):
        return np.interp(theta, self.theta, self.v)

    def theta_at(self, v):
        return float(np.interp(v, self.v, self.theta))


def _times(duration: float, dt: float) -> np.ndarray:
    """Sample times 0, dt, 2dt, ... with an exact final sample at ``duration``."""
    n = int(math.floor(duration / dt + 1e-9))
    t = np.arange(n + 1) * dt
    if duration - t[-1] > 1e-6 * dt:
        t = np.append(t, duration)
    else:
        t[-1] = duration
    return t


class _CycleBuilder:
    def __init__(self, p: SynthCellParams, ocv: _Ocv):
        self.p = p
        self.ocv = ocv
        self.t, self.i, self.v, self.theta = [], [], [], []
        self.clock = 0.0

    def add(self, t_rel, i, v, theta):
        self.t.append(self.clock + t_rel)
        self.i.append(np.broadcast_to(i, t_rel.shape).astype(float))
        self.v.append(np.broadcast_to(v, t_rel.shape).astype(float))
        self.theta.append(np.broadcast_to(theta, t_rel.shape).astype(float))
        self.clock = self.t[-1][-1]

    def rest(self, duration, theta):
        if duration <= 0:
            return
        t = _times(duration, max(self.p.sample_period, duration / 10.0))[1:]
        self.add(t, 0.0, float(self.ocv.voltage(theta)), theta)

    def build(self, k: int):
        p, ocv = self.p, self.ocv
        soh = p.fade.soh(k)
        capacity = p.nominal_capacity * soh / 100.0
        R = p.resistance + p.resistance_growth * k
        th_end = ocv.theta_at(p.lower_cutoff_voltage + p.cc_discharge_current * R)
        th_cc = ocv.theta_at(p.upper_cutoff_voltage - p.cc_charge_current * R)
        th_top = ocv.theta_at(p.upper_cutoff_voltage - p.cv_cutoff_current * R)
        if not th_end < th_cc < th_top:
            raise ArgumentError(f"cycle {k}: resistance too high for the voltage window")
        q_th = capacity / (th_top - th_end)
        dt = p.sample_period

        self.t.append(np.array([0.0]))
        self.i.append(np.array([0.0]))
        self.v.append(np.array([float(ocv.voltage(th_end))]))
        self.theta.append(np.array([th_end]))
        self.rest(p.rest_period / 2, th_end)

        # CC charge
        t_cc = 3600.0 * q_th * (th_cc - th_end) / p.cc_charge_current
        t = _times(t_cc, dt)
        self.clock += 1.0
        th = th_end + p.cc_charge_current * t / (3600.0 * q_th)
        th[-1] = th_cc
        self.add(t, p.cc_charge_current, ocv.voltage(th) + p.cc_charge_current * R, th)

        # CV charge: t(theta) from the integral of 3600 q R / (V_up - OCV)
        grid = np.linspace(th_cc, th_top, 2001)
        rate = (p.upper_cutoff_voltage - ocv.voltage(grid)) / (R * 3600.0 * q_th)
        tg = np.concatenate([[0.0], np.cumsum(0.5 * (1 / rate[1:] + 1 / rate[:-1]) * np.diff(grid))])
        t = _times(tg[-1], dt)[1:]
        th = np.interp(t, tg, grid)
        th[-1] = th_top
        cur = (p.upper_cutoff_voltage - ocv.voltage(th)) / R
        cur[-1] = p.cv_cutoff_current
        self.add(t, cur, p.upper_cutoff_voltage, th)

        self.rest(p.rest_period, th_top)

        # CC discharge, ends exactly at the lower cutoff
        t_dis = 3600.0 * capacity / p.cc_discharge_current
        t = _times(t_dis, dt)
        th = th_top - p.cc_discharge_current * t / (3600.0 * q_th)
        th[-1] = th_end
        v = ocv.voltage(th) - p.cc_discharge_current * R
        v[-1] = p.lower_cutoff_voltage
        self.clock += 1.0
        self.add(t, -p.cc_discharge_current, v, th)

        self.rest(p.rest_period / 2, th_end)

        time = np.concatenate(self.t)
        current = np.concatenate(self.i)
        voltage = np.concatenate(self.v)
        theta = np.concatenate(self.theta)
        temperature = self.temperature(time, current, theta, R)
        return time, current, voltage, temperature, capacity, soh

    def temperature(self, time, current, theta, R):
        th = self.p.thermal
        T = np.empty_like(time)
        T[0] = th.ambient
        dts = np.diff(time)
        for n, step in enumerate(dts):
            i = current[n + 1]
            eta = th.entropic_amplitude * math.sin(2.0 * math.pi * theta[n + 1])
            power = i * i * R + i * eta
            target = th.ambient + th.time_constant * th.heat_coefficient * power
            T[n + 1] = target + (T[n] - target) * math.exp(-step / th.time_constant)
        return T


def gen_cell(params: SynthCellParams) -> CellHistory:
    """Simulate every cycle; capacity labels are exact and noise-free."""
    p = params
    ocv = _Ocv(p.ocv)
    rng = np.random.default_rng(p.seed)
    cycles = []
    for k in range(p.cycles):
        time, current, voltage, temperature, capacity, soh = _CycleBuilder(p, ocv).build(k)
        n = len(time)
        if p.noise.voltage > 0:
            voltage = voltage + rng.normal(0.0, p.noise.voltage, n)
        if p.noise.current > 0:
            active = current != 0
            current = current + np.where(active, rng.normal(0.0, p.noise.current, n), 0.0)
        if p.noise.temperature > 0:
            temperature = temperature + rng.normal(0.0, p.noise.temperature, n)
        series = SampleSeries(time, current, voltage, temperature)
        phases = segment_phases(series, p.cc_charge_current, p.upper_cutoff_voltage)
        cycles.append(Cycle(k + 1, series, tuple(phases), capacity, 100.0 * capacity / p.nominal_capacity))
    return CellHistory(p.cell_id, p.nominal_capacity, p.upper_cutoff_voltage, p.lower_cutoff_voltage,
                       p.cc_charge_current, tuple(cycles))


def unit_seed(seed: int, index: int) -> int:
    """Independent per-unit seed derived from (seed, index)."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def dataset_params(n_cells: int = 4, base: SynthCellParams | None = None, seed: int = 0,
                   spread: float = 0.15) -> list[SynthCellParams]:
    """Per-cell parameter sets with fade rate and resistance jittered by +-``spread``."""
    base = base or SynthCellParams()
    out = []
    for k in range(n_cells):
        s = unit_seed(seed, k)
        jitter = np.random.default_rng(s).uniform(1.0 - spread, 1.0 + spread, 2)
        fade = replace(base.fade, rate=base.fade.rate * jitter[0])
        out.append(replace(base, cell_id=f"{base.cell_id[:3]}{k + 1:02d}", fade=fade,
                           resistance=base.resistance * jitter[1], seed=s))
    return out


def gen_dataset(n_cells: int = 4, base: SynthCellParams | None = None, seed: int = 0,
                spread: float = 0.15) -> list[CellHistory]:
    return [gen_cell(p) for p in dataset_params(n_cells, base, seed, spread)]


# --------------------------------------------------------------------------
# fleet sessions


@dataclass(frozen=True)
class Distribution:
    """Named parametric family: uniform(lo, hi), normal(mu, sd), beta(a, b, scale),
    lognormal(mu, sigma) or constant(value)."""

    family: str
    params: tuple[float, ...]

    _ARITY = {"uniform": 2, "normal": 2, "beta": 3, "lognormal": 2, "constant": 1}

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        if self.family not in self._ARITY:
            raise ArgumentError(f"unknown distribution family {self.family!r}")
        if len(self.params) != self._ARITY[self.family]:
            raise ArgumentError(f"{self.family} takes {self._ARITY[self.family]} parameters")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a = self.params
        if self.family == "uniform":
            return rng.uniform(a[0], a[1], n)
        if self.family == "normal":
            return rng.normal(a[0], a[1], n)
        if self.family == "beta":
            return a[2] * rng.beta(a[0], a[1], n)
        if self.family == "lognormal":
            return rng.lognormal(a[0], a[1], n)
        return np.full(n, a[0])


@dataclass(frozen=True)
class SynthFleetParams:
    n_sessions: int = 10000
    charging_fraction: float = 0.35
    charging_start: Distribution = Distribution("normal", (35.0, 15.0))
    charging_span: Distribution = Distribution("normal", (40.0, 20.0))
    driving_start: Distribution = Distribution("normal", (70.0, 15.0))
    driving_span: Distribution = Distribution("lognormal", (2.3, 0.8))
    seed: int = 0

    def __post_init__(self):
        if self.n_sessions < 0:
            raise ArgumentError("n_sessions must be >= 0")
        if not 0.0 <= self.charging_fraction <= 1.0:
            raise ArgumentError("charging_fraction must lie in [0, 1]")


def gen_sessions(params: SynthFleetParams) -> list[DrivingSession]:
    rng = np.random.default_rng(params.seed)
    n = params.n_sessions
    if n == 0:
        return []
    charging = rng.random(n) < params.charging_fraction
    n_c = int(charging.sum())
    c_start = np.clip(params.charging_start.sample(rng, n_c), 0.0, 99.0)
    c_span = np.maximum(params.charging_span.sample(rng, n_c), 1.0)
    d_start = np.clip(params.driving_start.sample(rng, n - n_c), 1.0, 100.0)
    d_span = np.maximum(params.driving_span.sample(rng, n - n_c), 1.0)
    c_end = np.minimum(c_start + c_span, 100.0)
    d_end = np.maximum(d_start - d_span, 0.0)
    out = []
    ci = di = 0
    for is_charge in charging:
        if is_charge:
            out.append(DrivingSession(float(c_start[ci]), float(c_end[ci]), SessionCategory.CHARGING))
            ci += 1
        else:
            out.append(DrivingSession(float(d_start[di]), float(d_end[di]), SessionCategory.DRIVING))
            di += 1
    return out


def sessions_from_arrays(start: Sequence[float], end: Sequence[float],
                         category: Sequence[str]) -> list[DrivingSession]:
    return [DrivingSession(float(s), float(e), SessionCategory(c)) for s, e, c in zip(start, end, category)]
