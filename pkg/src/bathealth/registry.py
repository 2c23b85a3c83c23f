"""Health-indicator descriptors and per-cycle extraction.

The built-in registry holds 77 cycling HIs (time, temperature, integral,
differential and statistics families) and 5 SOC-referenced HIs. Each
descriptor carries a small extraction recipe interpreted by :func:`extract`.

SOC for SOC-referenced HIs is coulomb counted per phase against the nominal
capacity: charge phases start at 0% at the CC-charge start, discharge phases
start at 100%, and the CV-charge current HI is pinned to 100% at the end of
charge.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels as K
from .data import CellHistory, Cycle, Phase, compute_soc_series, cumulative_charge
from .errors import ArgumentError, BatteryHealthError, ConversionError
from .fleet import AcquisitionRule, Scenario, SocRequirement
from .kernels import IntervalSpec, Reference

MISSING = float("nan")


class Category(str, enum.Enum):
    TIME = "time"
    TEMPERATURE = "temperature"
    INTEGRAL = "integral"
    DIFFERENTIAL = "differential"
    STATISTICS = "statistics"
    SOC_BASED = "soc_based"
    FUSION = "fusion"


class OperatingScenario(str, enum.Enum):
    CC_CHARGE = "cc_charge"
    CV_CHARGE = "cv_charge"
    CCCV_CHARGE = "cccv_charge"
    CC_DISCHARGE = "cc_discharge"
    FULL_CYCLE = "full_cycle"
    CHARGE_AND_DISCHARGE = "charge_and_discharge"

    @property
    def fleet_scenario(self) -> Scenario | None:
        if self in (OperatingScenario.CC_CHARGE, OperatingScenario.CV_CHARGE, OperatingScenario.CCCV_CHARGE):
            return Scenario.CHARGE
        if self is OperatingScenario.CC_DISCHARGE:
            return Scenario.DISCHARGE
        return None


class Signal(str, enum.Enum):
    CURRENT = "current"
    VOLTAGE = "voltage"
    TEMPERATURE = "temperature"
    CHARGE = "charge"
    DERIVED_CURVE = "derived_curve"


@dataclass(frozen=True)
class HIDescriptor:
    id: str
    category: Category
    scenario: OperatingScenario
    signal: Signal
    reference: Reference | None
    partial: bool
    description: str
    method: str
    scope: str | None = None
    quantity: str | None = None
    default_interval: IntervalSpec | None = None
    acquisition_rule: AcquisitionRule | None = None
    degradation_tags: tuple[str, ...] = ()
    constituents: tuple[str, ...] = ()

    def __post_init__(self):
        if self.category is Category.FUSION and not self.constituents:
            raise ArgumentError("fusion descriptors need constituents")
        if self.category is not Category.FUSION and self.constituents:
            raise ArgumentError("only fusion descriptors have constituents")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "scenario": self.scenario.value,
            "signal": self.signal.value,
            "reference": self.reference.value if self.reference else None,
            "partial": self.partial,
            "description": self.description,
            "default_interval": self.default_interval.to_list() if self.default_interval else None,
            "acquisition_rule": self.acquisition_rule.label() if self.acquisition_rule else None,
            "degradation_tags": list(self.degradation_tags),
            "constituents": list(self.constituents),
            "extraction": {"method": self.method, "scope": self.scope, "quantity": self.quantity},
        }


# --------------------------------------------------------------------------
# built-in catalog

_TAGS = {
    Category.TIME: ("LLI", "IMTRE", "IMTRAM", "capacity fade", "power fade"),
    Category.TEMPERATURE: ("IOR", "ICTR", "IMTRE", "IMTRAM", "power fade"),
    Category.INTEGRAL: ("LLI", "LAM", "IOR", "capacity fade"),
    Category.DIFFERENTIAL: ("LLI", "LAM_NE", "LAM_PE"),
    Category.STATISTICS: (),
}

_SCOPE_SCENARIO = {
    "cc_charge": OperatingScenario.CC_CHARGE,
    "cv_charge": OperatingScenario.CV_CHARGE,
    "charge": OperatingScenario.CCCV_CHARGE,
    "cc_discharge": OperatingScenario.CC_DISCHARGE,
    "discharge": OperatingScenario.CC_DISCHARGE,
    "operating": OperatingScenario.FULL_CYCLE,
}

_SIGNAL_REF = {
    "voltage": Reference.VOLTAGE_V,
    "current": Reference.CURRENT_A,
    "temperature": Reference.TEMPERATURE_C,
}


def _iv(ref, lo, hi):
    return IntervalSpec(ref, lo, hi)


def _time_descriptors():
    V, A, C, T = Reference.VOLTAGE_V, Reference.CURRENT_A, Reference.TEMPERATURE_C, Reference.TIME_S
    rows = [
        # id, description, method, scope, quantity, reference, default interval
        ("CCDT", "Constant-current discharge time", "duration", "cc_discharge", None, None, None),
        ("TEVD", "Time of equal voltage drop", "traverse_time", "cc_discharge", "voltage", V, (3.4, 3.8)),
        ("SDV", "Slope of discharge voltage", "slope", "cc_discharge", "voltage", V, (3.4, 3.8)),
        ("CCCT", "Constant-current charge time", "duration", "cc_charge", None, None, None),
        ("SCV", "Slope of charge voltage", "slope", "cc_charge", "voltage", V, (3.9, 4.0)),
        ("VDET", "Voltage drop of equal time", "time_increment", "cc_discharge", "voltage", T, (0.0, 1000.0)),
        ("TEVR", "Time of equal voltage rise", "traverse_time", "cc_charge", "voltage", V, (3.9, 4.0)),
        ("VRET", "Voltage rise of equal time", "time_increment", "cc_charge", "voltage", T, (925.0, 975.0)),
        ("CDET", "Current drop of equal time", "time_increment", "cv_charge", "current", T, (200.0, 800.0)),
        ("TETR", "Time of equal temperature rise", "traverse_time", "cc_discharge", "temperature", C, (29.0, 36.0)),
        ("SDT", "Slope of discharge temperature", "slope", "cc_discharge", "temperature", C, (29.0, 36.0)),
        ("SCC", "Slope of charge current", "slope", "cv_charge", "current", A, (0.5, 1.2)),
        ("TECD", "Time of equal current drop", "traverse_time", "cv_charge", "current", A, (0.5, 1.2)),
        ("TRET", "Temperature rise of equal time", "time_increment", "cc_discharge", "temperature", T, (1000.0, 1400.0)),
        ("RCCCV", "Ratio of constant-current to constant-voltage charge time", "ratio", None, None, None, None),
        ("CVCT", "Constant-voltage charge time", "duration", "cv_charge", None, None, None),
    ]
    out = []
    for hid, desc, method, scope, qty, ref, iv in rows:
        partial = iv is not None
        signal = Signal(qty) if qty else (Signal.VOLTAGE if method != "ratio" else Signal.CURRENT)
        if method == "duration":
            signal = Signal.CURRENT
        out.append(HIDescriptor(
            id=hid, category=Category.TIME,
            scenario=_SCOPE_SCENARIO[scope] if scope else OperatingScenario.CCCV_CHARGE,
            signal=signal, reference=ref, partial=partial, description=desc,
            method=method, scope=scope, quantity=qty,
            default_interval=_iv(ref, *iv) if partial else None,
            degradation_tags=_TAGS[Category.TIME],
        ))
    return out


_SCOPE_WORDS = {
    "": ("operating", "temperature"),
    "C": ("charge", "charge temperature"),
    "CCC": ("cc_charge", "constant-current charge temperature"),
    "CVC": ("cv_charge", "constant-voltage charge temperature"),
    "D": ("discharge", "discharge temperature"),
}
_TEMPERATURE_ORDER = ("HDT", "HT", "MDT", "MT", "HCCCT", "MCT", "LCCCT", "HCVCT",
                      "HCT", "MCVCT", "MCCCT", "LCVCT", "LDT", "LCT", "LT")


def _temperature_descriptors():
    stats = {"H": ("max", "Highest"), "M": ("mean", "Mean"), "L": ("min", "Lowest")}
    out = []
    for hid in _TEMPERATURE_ORDER:
        stat, word = stats[hid[0]]
        scope, noun = _SCOPE_WORDS[hid[1:-1]]
        out.append(HIDescriptor(
            id=hid, category=Category.TEMPERATURE, scenario=_SCOPE_SCENARIO[scope],
            signal=Signal.TEMPERATURE, reference=None, partial=False,
            description=f"{word} {noun}", method="temperature_stat", scope=scope, quantity=stat,
            degradation_tags=_TAGS[Category.TEMPERATURE],
        ))
    return out


_INTEGRAL_ORDER = (
    "ACCCV", "ACCCC", "ECCCC", "ECCDV", "ACCDV", "ACCCT", "EDV", "ADV", "ECCCT", "ACVCT", "ECVCT",
    "ACCDT", "ADT", "ECVCV", "ACVCV", "ACVCC", "ECV", "ACV", "ECVCC", "ACT", "ECCDT", "ECT", "EDT",
    "ADC", "ECCDC", "EDC", "ACCDC", "ECC", "ACC", "ECCCV",
)
_INTEGRAL_SCOPES = {
    "C": ("charge", "charge"),
    "CCC": ("cc_charge", "constant-current charge"),
    "CVC": ("cv_charge", "constant-voltage charge"),
    "D": ("discharge", "discharge"),
    "CCD": ("cc_discharge", "constant-current discharge"),
}
_INTEGRAL_SIGNALS = {"C": "current", "V": "voltage", "T": "temperature"}


def _integral_descriptors():
    out = []
    for hid in _INTEGRAL_ORDER:
        kind, scope_code, sig = hid[0], hid[1:-1], hid[-1]
        scope, noun = _INTEGRAL_SCOPES[scope_code]
        qty = _INTEGRAL_SIGNALS[sig]
        word = "Area under" if kind == "A" else "Energy of"
        out.append(HIDescriptor(
            id=hid, category=Category.INTEGRAL, scenario=_SCOPE_SCENARIO[scope], signal=Signal(qty),
            reference=None, partial=False, description=f"{word} {noun} {qty}",
            method="area" if kind == "A" else "energy", scope=scope, quantity=qty,
            degradation_tags=_TAGS[Category.INTEGRAL],
        ))
    return out


def _differential_descriptors():
    V, S = Reference.VOLTAGE_V, Reference.SOC_PCT
    rows = [
        ("ICA", "Incremental capacity area", "ic", "area", None, None),
        ("ICP", "Incremental capacity peak", "ic", "value", V, (3.55, 3.80)),
        ("DVV", "Differential voltage valley", "dv", "value", S, (20.0, 80.0)),
        ("ICPL", "Incremental capacity peak location", "ic", "location", V, (3.55, 3.80)),
        ("ICS", "Incremental capacity slope", "ic", "slope", V, (3.55, 3.80)),
        ("DVA", "Differential voltage area", "dv", "area", None, None),
        ("DTA", "Differential temperature area", "dt", "area", None, None),
        ("DVS", "Differential voltage slope", "dv", "slope", S, (20.0, 80.0)),
        ("DVVL", "Differential voltage valley location", "dv", "location", S, (20.0, 80.0)),
        ("DTS", "Differential temperature slope", "dt", "slope", V, (3.3, 3.9)),
        ("DTP", "Differential temperature peak", "dt", "value", V, (3.3, 3.9)),
        ("DTPL", "Differential temperature peak location", "dt", "location", V, (3.3, 3.9)),
    ]
    out = []
    for hid, desc, curve, feature, ref, iv in rows:
        scope = "cc_charge" if curve == "ic" else "cc_discharge"
        if ref is None:
            ref = S if curve == "dv" else V
        out.append(HIDescriptor(
            id=hid, category=Category.DIFFERENTIAL, scenario=_SCOPE_SCENARIO[scope],
            signal=Signal.DERIVED_CURVE, reference=ref if iv else None, partial=iv is not None,
            description=desc, method=f"{curve}_curve", scope=scope, quantity=feature,
            default_interval=_iv(ref, *iv) if iv else None,
            degradation_tags=_TAGS[Category.DIFFERENTIAL],
        ))
    return out


def _statistics_descriptors():
    rows = [("SE", "Sample entropy"), ("KT", "Kurtosis"), ("SK", "Skewness"), ("SD", "Standard deviation")]
    return [
        HIDescriptor(
            id=hid, category=Category.STATISTICS, scenario=OperatingScenario.CC_DISCHARGE,
            signal=Signal.VOLTAGE, reference=None, partial=False,
            description=f"{desc} of the constant-current discharge voltage",
            method="statistic", scope="cc_discharge", quantity=hid.lower(),
        )
        for hid, desc in rows
    ]


SOC_SOURCES = {"VRET": "VRE_SOC", "VDET": "VDE_SOC", "CDET": "CDE_SOC", "TRET": "TRE_SOC", "ICP": "ICP_SOC"}


def _soc_descriptors():
    S = Reference.SOC_PCT
    any5 = AcquisitionRule.any_subwindow(5.0)
    rows = [
        ("VRE_SOC", "Charge voltage rise of equal SOC interval", OperatingScenario.CC_CHARGE,
         Signal.VOLTAGE, "soc_increment", "cc_charge", "voltage", (20.0, 50.0), any5, "VRET"),
        ("ICP_SOC", "IC peak versus SOC", OperatingScenario.CC_CHARGE,
         Signal.DERIVED_CURVE, "soc_ic_peak", "cc_charge", "value", (20.0, 31.0), AcquisitionRule.full(), "ICP"),
        ("CDE_SOC", "Charge current drop of equal SOC interval", OperatingScenario.CV_CHARGE,
         Signal.CURRENT, "soc_increment", "charge", "current", (74.0, 100.0), any5, "CDET"),
        ("TRE_SOC", "Discharge temperature rise of equal SOC interval", OperatingScenario.CC_DISCHARGE,
         Signal.TEMPERATURE, "soc_increment", "cc_discharge", "temperature", (25.0, 60.0), any5, "TRET"),
        ("VDE_SOC", "Discharge voltage drop of equal SOC interval", OperatingScenario.CC_DISCHARGE,
         Signal.VOLTAGE, "soc_increment", "cc_discharge", "voltage", (10.0, 40.0), any5, "VDET"),
    ]
    return [
        HIDescriptor(
            id=hid, category=Category.SOC_BASED, scenario=scen, signal=sig, reference=S, partial=True,
            description=desc, method=method, scope=scope, quantity=qty,
            default_interval=_iv(S, *iv), acquisition_rule=rule,
            degradation_tags=_TAGS[Category.DIFFERENTIAL if hid == "ICP_SOC" else Category.TIME],
        )
        for hid, desc, scen, sig, method, scope, qty, iv, rule, _src in rows
    ]


class Registry(Mapping[str, HIDescriptor]):
    """Immutable id -> descriptor mapping preserving catalog order."""

    def __init__(self, descriptors: Iterable[HIDescriptor]):
        self._items: dict[str, HIDescriptor] = {}
        for d in descriptors:
            if d.id in self._items:
                raise ArgumentError(f"duplicate HI id {d.id}")
            self._items[d.id] = d
        for d in self._items.values():
            for c in d.constituents:
                if c not in self._items or self._items[c].category is Category.FUSION:
                    raise ArgumentError(f"fusion {d.id}: constituent {c} is not a registered non-fusion HI")

    def __getitem__(self, key: str) -> HIDescriptor:
        try:
            return self._items[key]
        except KeyError:
            raise KeyError(f"unknown HI id {key!r}") from None

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def by_category(self, category: Category) -> list[HIDescriptor]:
        return [d for d in self._items.values() if d.category is Category(category)]

    def cycling_his(self) -> list[HIDescriptor]:
        return [d for d in self._items.values() if d.category not in (Category.SOC_BASED, Category.FUSION)]

    def with_descriptor(self, descriptor: HIDescriptor) -> "Registry":
        return Registry([*self._items.values(), descriptor])

    def to_json(self) -> str:
        return json.dumps([d.to_dict() for d in self._items.values()], indent=2, sort_keys=True) + "\n"


def builtin_registry() -> Registry:
    return Registry([
        *_time_descriptors(),
        *_temperature_descriptors(),
        *_integral_descriptors(),
        *_differential_descriptors(),
        *_statistics_descriptors(),
        *_soc_descriptors(),
    ])


# --------------------------------------------------------------------------
# conversion and fusion


def to_soc_based(descriptor: HIDescriptor, registry: Registry | None = None) -> HIDescriptor:
    target = SOC_SOURCES.get(descriptor.id)
    if target is None:
        raise ConversionError(f"{descriptor.id} has no SOC-referenced counterpart")
    return (registry or builtin_registry())[target]


def fusion_scenario(scenarios: Iterable[OperatingScenario]) -> OperatingScenario:
    s = set(scenarios)
    charge = s & {OperatingScenario.CC_CHARGE, OperatingScenario.CV_CHARGE, OperatingScenario.CCCV_CHARGE}
    discharge = OperatingScenario.CC_DISCHARGE in s
    if charge and discharge:
        return OperatingScenario.CHARGE_AND_DISCHARGE
    if discharge:
        return OperatingScenario.CC_DISCHARGE
    if charge - {OperatingScenario.CC_CHARGE}:
        return OperatingScenario.CCCV_CHARGE
    return OperatingScenario.CC_CHARGE


def fuse(ids: Sequence[str], registry: Registry | None = None, fusion_id: str | None = None) -> HIDescriptor:
    """Fusion descriptor whose feature vector concatenates SOC-based HIs."""
    registry = registry or builtin_registry()
    ids = list(ids)
    if len(ids) < 2:
        raise ArgumentError("fusion needs at least two HIs")
    if len(set(ids)) != len(ids):
        raise ArgumentError(f"duplicate HI in fusion {ids}")
    parts = []
    for hid in ids:
        if hid not in registry:
            raise ArgumentError(f"unknown HI id {hid!r}")
        d = registry[hid]
        if d.category is not Category.SOC_BASED:
            raise ArgumentError(f"{hid} is not SOC-based and cannot be fused")
        parts.append(d)
    return HIDescriptor(
        id=fusion_id or "+".join(ids), category=Category.FUSION,
        scenario=fusion_scenario(p.scenario for p in parts), signal=Signal.DERIVED_CURVE,
        reference=Reference.SOC_PCT, partial=True, description=" + ".join(ids), method="fusion",
        constituents=tuple(ids),
    )


CANONICAL_FUSIONS = {
    "Fusion 1": ("VRE_SOC", "ICP_SOC"),
    "Fusion 2": ("VRE_SOC", "ICP_SOC", "CDE_SOC"),
    "Fusion 3": ("TRE_SOC", "VDE_SOC"),
    "Fusion 4": ("VRE_SOC", "ICP_SOC", "CDE_SOC", "TRE_SOC", "VDE_SOC"),
}


def canonical_fusions(registry: Registry | None = None) -> dict[str, HIDescriptor]:
    return {name: fuse(ids, registry, fusion_id=name) for name, ids in CANONICAL_FUSIONS.items()}


def requirements_for(descriptor: HIDescriptor, registry: Registry | None = None,
                     interval: IntervalSpec | None = None) -> list[SocRequirement]:
    """SOC coverage requirements for acquiring ``descriptor`` from one session."""
    if descriptor.category is Category.FUSION:
        registry = registry or builtin_registry()
        return [r for c in descriptor.constituents for r in requirements_for(registry[c], registry)]
    if descriptor.category is not Category.SOC_BASED:
        raise ConversionError(f"{descriptor.id} is not SOC-referenced; convert it first")
    iv = interval or descriptor.default_interval
    return [SocRequirement(descriptor.scenario.fleet_scenario, iv.lower, iv.upper, descriptor.acquisition_rule)]


# --------------------------------------------------------------------------
# extraction


@dataclass(frozen=True)
class ExtractionSettings:
    smooth_window: int = K.DEFAULT_SMOOTH_WINDOW
    ic_bin_width: float = K.DEFAULT_IC_BIN
    dt_bin_width: float = K.DEFAULT_IC_BIN
    dv_bin_fraction: float = K.DEFAULT_DV_BIN_FRACTION
    curve_smooth_window: int = K.DEFAULT_SMOOTH_WINDOW
    entropy: K.SampleEntropyParams = field(default_factory=K.SampleEntropyParams)


def _scope(cycle: Cycle, scope: str):
    """Inclusive (start, end) sample range of ``scope`` or None if absent."""
    if scope in ("cc_charge", "cv_charge", "cc_discharge"):
        seg = cycle.main_segment(Phase(scope))
        return (seg.start_index, seg.end_index) if seg else None
    i = cycle.series.current
    if scope == "charge":
        seeds = [cycle.main_segment(Phase.CC_CHARGE), cycle.main_segment(Phase.CV_CHARGE)]
        seeds = [s for s in seeds if s is not None]
        sign = i > 0
    elif scope == "discharge":
        seeds = [cycle.main_segment(Phase.CC_DISCHARGE)]
        seeds = [s for s in seeds if s is not None]
        sign = i < 0
    else:
        raise ArgumentError(f"unknown scope {scope!r}")
    if not seeds:
        return None
    s = min(seg.start_index for seg in seeds)
    e = max(seg.end_index for seg in seeds)
    while s > 0 and sign[s - 1]:
        s -= 1
    while e < len(i) - 1 and sign[e + 1]:
        e += 1
    return s, e


def _operating_mask(cycle: Cycle) -> np.ndarray:
    mask = np.ones(len(cycle.series), dtype=bool)
    for seg in cycle.phases:
        if seg.kind is Phase.REST:
            mask[seg.start_index : seg.end_index + 1] = False
    return mask


def _signal(series, name: str) -> np.ndarray:
    if name == "voltage":
        return series.voltage
    if name == "current":
        return series.current
    if name == "temperature":
        return series.temperature
    raise ArgumentError(f"unknown signal {name!r}")


def _smoothed(x: np.ndarray, window: int) -> np.ndarray:
    w = min(window, len(x) if len(x) % 2 else len(x) - 1)
    return K.smooth(x, max(w, 1))


def _increment(x, y, iv: IntervalSpec) -> float:
    xs, ys = K.clip_to_interval(x, y, iv)
    if not K.covers(xs, iv.lower, iv.upper):
        return MISSING
    return float(ys[-1] - ys[0])


class _CycleExtractor:
    def __init__(self, history: CellHistory, settings: ExtractionSettings):
        self.history = history
        self.settings = settings
        self._memo: dict = {}

    def memo(self, key, fn):
        # per-cycle intermediates reused across candidate intervals
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def __call__(self, cycle: Cycle, d: HIDescriptor, iv: IntervalSpec | None) -> float:
        fn = getattr(self, "_" + d.method)
        try:
            return float(fn(cycle, d, iv))
        except BatteryHealthError:
            return MISSING

    def _window(self, cycle, scope):
        def build():
            rng = _scope(cycle, scope)
            if rng is None or rng[1] - rng[0] < 1:
                return None
            return cycle.series.slice(*rng)

        return self.memo((cycle.index, "window", scope), build)

    def _smoothed_signal(self, cycle, scope, qty, s):
        return self.memo((cycle.index, "smooth", scope, qty),
                         lambda: _smoothed(_signal(s, qty), self.settings.smooth_window))

    # time family
    def _duration(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        return MISSING if s is None else s.time[-1] - s.time[0]

    def _ratio(self, cycle, d, iv):
        cc = self._window(cycle, "cc_charge")
        cv = self._window(cycle, "cv_charge")
        if cc is None or cv is None:
            return MISSING
        return (cc.time[-1] - cc.time[0]) / (cv.time[-1] - cv.time[0])

    def _traverse_time(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        ref = self._smoothed_signal(cycle, d.scope, d.quantity, s)
        xs, ts = K.clip_to_interval(ref, s.time, iv)
        if not K.covers(xs, iv.lower, iv.upper):
            return MISSING
        return abs(ts[-1] - ts[0])

    def _slope(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        sig = self._smoothed_signal(cycle, d.scope, d.quantity, s)
        t = s.time - s.time[0]
        if iv.reference is Reference.TIME_S:
            ts, ys = K.clip_to_interval(t, sig, iv)
            if not K.covers(ts, iv.lower, iv.upper):
                return MISSING
        else:
            ys, ts = K.clip_to_interval(sig, t, iv)
            if not K.covers(ys, iv.lower, iv.upper):
                return MISSING
        return K.line_slope(ts, ys)

    def _time_increment(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        sig = self._smoothed_signal(cycle, d.scope, d.quantity, s)
        return _increment(s.time - s.time[0], sig, iv)

    # temperature family
    def _temperature_stat(self, cycle, d, iv):
        if d.scope == "operating":
            temp = cycle.series.temperature[_operating_mask(cycle)]
        else:
            rng = _scope(cycle, d.scope)
            if rng is None:
                return MISSING
            temp = cycle.series.temperature[rng[0] : rng[1] + 1]
        if temp.size == 0:
            return MISSING
        return {"max": np.max, "mean": np.mean, "min": np.min}[d.quantity](temp)

    # integral family
    def _integral_signal(self, s, qty):
        x = _signal(s, qty)
        return np.abs(x) if qty == "current" else x

    def _area(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        return MISSING if s is None else K.integrate_area(s.time, self._integral_signal(s, d.quantity))

    def _energy(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        return MISSING if s is None else K.integrate_energy(s.time, self._integral_signal(s, d.quantity))

    # differential family
    def ic_curve(self, s):
        q = cumulative_charge(s.time, s.current)
        st = self.settings
        return K.differential_curve(K.CurveKind.IC, s.voltage, q, st.ic_bin_width, st.curve_smooth_window)

    def dv_curve(self, s):
        st = self.settings
        nominal = self.history.nominal_capacity
        soc = compute_soc_series(s, nominal, 100.0, 0)
        c = K.differential_curve(K.CurveKind.DV, soc, s.voltage, 100.0 * st.dv_bin_fraction, st.curve_smooth_window)
        # dV per % SOC -> dV per Ah
        scale = 100.0 / nominal
        return K.DifferentialCurve(c.abscissa, c.ordinate * scale, c.kind, c.bin_width, c.raw_ordinate * scale)

    def dt_curve(self, s):
        st = self.settings
        return K.differential_curve(K.CurveKind.DT, s.voltage, s.temperature, st.dt_bin_width, st.curve_smooth_window)

    def _curve_feature(self, cycle, d, iv, builder, mode):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        curve = self.memo((cycle.index, "curve", d.method), lambda: builder(s))
        pf = K.peak_features(curve, iv, mode)
        return getattr(pf, d.quantity)

    def _ic_curve(self, cycle, d, iv):
        return self._curve_feature(cycle, d, iv, self.ic_curve, "peak")

    def _dv_curve(self, cycle, d, iv):
        return self._curve_feature(cycle, d, iv, self.dv_curve, "valley")

    def _dt_curve(self, cycle, d, iv):
        return self._curve_feature(cycle, d, iv, self.dt_curve, "peak")

    # statistics family
    def _statistic(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        v = s.voltage
        if d.quantity == "sd":
            return K.standard_deviation(v)
        if d.quantity == "sk":
            return K.skewness(v)
        if d.quantity == "kt":
            return K.kurtosis(v)
        return K.sample_entropy(v, self.settings.entropy)

    # SOC-referenced family
    def soc(self, cycle, scope, s):
        nominal = self.history.nominal_capacity
        if scope == "cc_discharge":
            return compute_soc_series(s, nominal, 100.0, 0)
        if scope == "charge":
            # pinned to full at the end of charge
            return compute_soc_series(s, nominal, 100.0, len(s) - 1)
        return compute_soc_series(s, nominal, 0.0, 0)

    def _soc_increment(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        soc = self.memo((cycle.index, "soc", d.scope), lambda: self.soc(cycle, d.scope, s))
        sig = self._smoothed_signal(cycle, d.scope, d.quantity, s)
        return _increment(soc, sig, iv)

    def _soc_ic_peak(self, cycle, d, iv):
        s = self._window(cycle, d.scope)
        if s is None:
            return MISSING
        def build():
            soc = self.soc(cycle, d.scope, s)
            curve = self.ic_curve(s)
            v_mono, soc_mono = K.monotonize(s.voltage, soc)
            return curve, np.interp(curve.abscissa, v_mono, soc_mono)

        curve, soc_axis = self.memo((cycle.index, "soc_ic"), build)
        if soc_axis.min() > iv.lower or soc_axis.max() < iv.upper:
            return MISSING
        soc_curve = K.DifferentialCurve(soc_axis, curve.ordinate, curve.kind, curve.bin_width, curve.raw_ordinate)
        return K.peak_features(soc_curve, iv, "peak").value


def _resolve_interval(d: HIDescriptor, interval: IntervalSpec | None) -> IntervalSpec | None:
    if not d.partial:
        if interval is not None:
            raise ArgumentError(f"{d.id} is a full-curve HI and takes no interval")
        return None
    iv = interval or d.default_interval
    if iv is None:
        raise ArgumentError(f"{d.id} needs an interval")
    ok = {d.reference}
    if d.method == "slope":
        ok.add(Reference.TIME_S)
    if iv.reference not in ok:
        raise ArgumentError(f"{d.id} takes a {d.reference.value} interval, got {iv.reference.value}")
    return iv


def extract(history: CellHistory, descriptor: HIDescriptor, interval=None,
            settings: ExtractionSettings | None = None, registry: Registry | None = None) -> np.ndarray:
    """Per-cycle HI values with NaN marking MISSING.

    Scalar HIs give shape (n_cycles,); fusion descriptors give
    (n_cycles, n_constituents) with whole rows MISSING whenever any
    constituent is. For fusion, ``interval`` may map constituent ids to
    intervals.
    """
    settings = settings or ExtractionSettings()
    if descriptor.category is Category.FUSION:
        registry = registry or builtin_registry()
        intervals = interval or {}
        cols = [extract(history, registry[c], intervals.get(c), settings) for c in descriptor.constituents]
        out = np.column_stack(cols) if cols else np.empty((len(history), 0))
        out[np.isnan(out).any(axis=1)] = MISSING
        return out
    return extract_many(history, descriptor, [interval], settings)[0]


def extract_many(history: CellHistory, descriptor: HIDescriptor, intervals: Sequence[IntervalSpec | None],
                 settings: ExtractionSettings | None = None) -> list[np.ndarray]:
    """Scalar-HI extraction for several intervals at once, sharing per-cycle work."""
    if descriptor.category is Category.FUSION:
        raise ArgumentError("extract_many takes scalar HIs")
    ivs = [_resolve_interval(descriptor, iv) for iv in intervals]
    ex = _CycleExtractor(history, settings or ExtractionSettings())
    out = [np.empty(len(history)) for _ in ivs]
    for n, c in enumerate(history.cycles):
        for arr, iv in zip(out, ivs):
            arr[n] = ex(c, descriptor, iv)
        ex._memo.clear()
    return out


# --------------------------------------------------------------------------
# feature tables


@dataclass(frozen=True, eq=False)
class FeatureTable:
    hi_ids: tuple[str, ...]
    cells: tuple[str, ...]
    cycle_index: dict[str, np.ndarray]
    values: dict[str, np.ndarray]  # cell -> (n_cycles, n_his), NaN = MISSING
    soh: dict[str, np.ndarray]

    def column(self, cell: str, hi_id: str) -> np.ndarray:
        return self.values[cell][:, self.hi_ids.index(hi_id)]

    def missing_rate(self) -> dict[str, float]:
        out = {}
        for j, hid in enumerate(self.hi_ids):
            col = np.concatenate([self.values[c][:, j] for c in self.cells]) if self.cells else np.empty(0)
            out[hid] = float(np.isnan(col).mean()) if col.size else 0.0
        return out


def build_feature_table(histories: Sequence[CellHistory], descriptors: Sequence[HIDescriptor],
                        intervals: Mapping[str, IntervalSpec] | None = None,
                        settings: ExtractionSettings | None = None) -> FeatureTable:
    intervals = intervals or {}
    values, soh, idx = {}, {}, {}
    for h in histories:
        cols = [extract(h, d, intervals.get(d.id), settings) for d in descriptors]
        values[h.cell_id] = np.column_stack(cols) if cols else np.empty((len(h), 0))
        soh[h.cell_id] = h.soh
        idx[h.cell_id] = np.array([c.index for c in h.cycles])
    return FeatureTable(tuple(d.id for d in descriptors), tuple(h.cell_id for h in histories), idx, values, soh)


def with_interval(descriptor: HIDescriptor, interval: IntervalSpec) -> HIDescriptor:
    """Copy of ``descriptor`` whose default interval is ``interval``."""
    _resolve_interval(descriptor, interval)
    return replace(descriptor, default_interval=interval)
