"""Cycling data model, ingestion, phase segmentation and coulomb counting.

Current is signed with positive = charging throughout the package. Loaders
flip the sign of sources that use the opposite convention.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DataError, FormatError

log = logging.getLogger(__name__)

SCHEMA_VERSION = "bathealth.cellhistory/1"
CYCLE_COLUMNS = ("cycle_index", "time_s", "current_a", "voltage_v", "temperature_c")
CAPACITY_COLUMNS = ("cycle_index", "capacity_ah")
FORMATS = ("generic-cycles", "cellhistory-json")

DEFAULT_CURRENT_TOL_FRACTION = 0.02
DEFAULT_VOLTAGE_TOL = 0.010
SIDECAR_DISAGREEMENT = 0.01


class Phase(str, enum.Enum):
    CC_CHARGE = "cc_charge"
    CV_CHARGE = "cv_charge"
    CC_DISCHARGE = "cc_discharge"
    REST = "rest"
    OTHER = "other"


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Timestamped current/voltage/temperature samples of one cycle."""

    time: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    temperature: np.ndarray

    def __post_init__(self):
        for name in ("time", "current", "voltage", "temperature"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name))
        n = len(self.time)
        if n < 1:
            raise ArgumentError("a sample series needs at least one sample")
        if any(len(getattr(self, k)) != n for k in ("current", "voltage", "temperature")):
            raise DataError("time, current, voltage and temperature differ in length")
        if n > 1 and np.any(np.diff(self.time) <= 0):
            raise DataError("time must be strictly increasing")
        if np.any(self.voltage <= 0):
            raise DataError("voltage must be positive")

    def __len__(self) -> int:
        return len(self.time)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleSeries):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("time", "current", "voltage", "temperature")
        )

    def slice(self, start: int, stop: int) -> "SampleSeries":
        """Samples ``start`` to ``stop`` inclusive."""
        s = slice(start, stop + 1)
        return SampleSeries(self.time[s], self.current[s], self.voltage[s], self.temperature[s])


@dataclass(frozen=True)
class PhaseSegment:
    kind: Phase
    start_index: int
    end_index: int

    def __post_init__(self):
        if not 0 <= self.start_index <= self.end_index:
            raise ArgumentError(f"bad segment bounds {self.start_index}..{self.end_index}")

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass(frozen=True, eq=False)
class Cycle:
    index: int
    series: SampleSeries
    phases: tuple[PhaseSegment, ...]
    discharge_capacity: float
    soh: float

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.index < 1:
            raise ArgumentError("cycle index must be >= 1")
        if self.discharge_capacity < 0:
            raise DataError("discharge capacity must be non-negative")
        prev_end = -1
        for seg in self.phases:
            if seg.start_index <= prev_end or seg.end_index >= len(self.series):
                raise DataError(f"cycle {self.index}: phase segments overlap or exceed the series")
            prev_end = seg.end_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cycle):
            return NotImplemented
        return (
            self.index == other.index
            and self.series == other.series
            and self.phases == other.phases
            and self.discharge_capacity == other.discharge_capacity
            and self.soh == other.soh
        )

    def main_segment(self, kind: Phase) -> PhaseSegment | None:
        """Longest segment of ``kind`` (first one on ties), or None."""
        best = None
        for seg in self.phases:
            if seg.kind == kind and (best is None or seg.length > best.length):
                best = seg
        return best


@dataclass(frozen=True, eq=False)
class CellHistory:
    cell_id: str
    nominal_capacity: float
    upper_cutoff_voltage: float
    lower_cutoff_voltage: float
    cc_charge_current: float
    cycles: tuple[Cycle, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple(self.cycles))
        if not self.nominal_capacity > 0:
            raise ArgumentError("nominal capacity must be positive")
        if not self.upper_cutoff_voltage > self.lower_cutoff_voltage:
            raise ArgumentError("upper cutoff voltage must exceed the lower cutoff")
        idx = [c.index for c in self.cycles]
        if idx != sorted(idx) or len(set(idx)) != len(idx):
            raise DataError("cycles must be ordered by strictly increasing index")
        for c in self.cycles:
            expected = 100.0 * c.discharge_capacity / self.nominal_capacity
            if not np.isclose(c.soh, expected, rtol=1e-12, atol=1e-12):
                raise DataError(f"cycle {c.index}: soh {c.soh} != 100*capacity/nominal")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellHistory):
            return NotImplemented
        return (
            self.cell_id == other.cell_id
            and self.nominal_capacity == other.nominal_capacity
            and self.upper_cutoff_voltage == other.upper_cutoff_voltage
            and self.lower_cutoff_voltage == other.lower_cutoff_voltage
            and self.cc_charge_current == other.cc_charge_current
            and self.cycles == other.cycles
        )

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def soh(self) -> np.ndarray:
        return np.array([c.soh for c in self.cycles])


def soh_percent(capacity_ah: float, nominal_capacity: float) -> float:
    return 100.0 * capacity_ah / nominal_capacity


# --------------------------------------------------------------------------
# coulomb counting


def cumulative_charge(time, current) -> np.ndarray:
    """Trapezoidal running integral of current, in ampere-hours, starting at 0."""
    t = np.asarray(time, dtype=float)
    i = np.asarray(current, dtype=float)
    out = np.zeros(len(t))
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (i[1:] + i[:-1]) * np.diff(t)) / 3600.0
    return out


def discharge_capacity_ah(series: SampleSeries) -> float:
    """Charge removed over every contiguous run of negative-current samples."""
    neg = series.current < 0
    total = 0.0
    start = None
    for k, flag in enumerate(np.append(neg, False)):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start >= 2:
                s = slice(start, k)
                total += -cumulative_charge(series.time[s], series.current[s])[-1]
            start = None
    return float(total)


def compute_soc_series(
    series: SampleSeries,
    nominal_capacity: float,
    anchor_soc: float = 0.0,
    anchor_index: int = 0,
) -> np.ndarray:
    """Coulomb-counted SOC in percent, pinned to ``anchor_soc`` at ``anchor_index``.

    Values outside [0, 100] are returned unchanged; use :func:`soc_out_of_range`
    to flag them.
    """
    if not nominal_capacity > 0:
        raise ArgumentError("nominal capacity must be positive")
    if not 0.0 <= anchor_soc <= 100.0:
        raise ArgumentError("anchor SOC must lie in [0, 100]")
    n = len(series)
    if not 0 <= anchor_index < n:
        raise ArgumentError(f"anchor index {anchor_index} outside 0..{n - 1}")
    q = cumulative_charge(series.time, series.current)
    soc = anchor_soc + 100.0 * (q - q[anchor_index]) / nominal_capacity
    if soc_out_of_range(soc).any():
        log.debug("coulomb-counted SOC leaves [0, 100] (min %.3f, max %.3f)", soc.min(), soc.max())
    return soc


def soc_out_of_range(soc) -> np.ndarray:
    soc = np.asarray(soc, dtype=float)
    return (soc < 0.0) | (soc > 100.0)


# --------------------------------------------------------------------------
# phase segmentation


_LABEL_ORDER = (Phase.OTHER, Phase.REST, Phase.CC_DISCHARGE, Phase.CV_CHARGE, Phase.CC_CHARGE)


def label_samples(series, cc_current, upper_cutoff, current_tol=None, voltage_tol=DEFAULT_VOLTAGE_TOL):
    if not cc_current > 0:
        raise ArgumentError("cc_current must be positive")
    if current_tol is None:
        current_tol = DEFAULT_CURRENT_TOL_FRACTION * cc_current
    if not (current_tol > 0 and voltage_tol > 0):
        raise ArgumentError("tolerances must be positive")
    i = series.current
    v = series.voltage
    cc = np.abs(i - cc_current) <= current_tol
    cv = (i > 0) & (np.abs(v - upper_cutoff) <= voltage_tol) & ~cc
    dis = i < -current_tol
    rest = (np.abs(i) <= current_tol) & ~cv
    # codes index into _LABEL_ORDER; later assignments take precedence
    code = np.zeros(len(i), dtype=np.int8)
    code[rest] = 1
    code[dis] = 2
    code[cv] = 3
    code[cc] = 4
    return [_LABEL_ORDER[c] for c in code]


def runs_to_segments(labels: Sequence[Phase]) -> list[PhaseSegment]:
    segments = []
    start = 0
    for k in range(1, len(labels) + 1):
        if k == len(labels) or labels[k] != labels[start]:
            segments.append(PhaseSegment(Phase(labels[start]), start, k - 1))
            start = k
    return segments


def segment_phases(
    series: SampleSeries,
    cc_current: float,
    upper_cutoff: float,
    current_tol: float | None = None,
    voltage_tol: float = DEFAULT_VOLTAGE_TOL,
    phase_labels: Sequence[str] | None = None,
) -> list[PhaseSegment]:
    """Label every sample and merge runs of equal labels into segments.

    ``current_tol`` defaults to 2% of ``cc_current``. Explicit
    ``phase_labels`` (one per sample) bypass detection.
    """
    if len(series) == 0:
        raise ArgumentError("empty series")
    if phase_labels is not None:
        if len(phase_labels) != len(series):
            raise DataError("phase column length differs from the series")
        try:
            labels = [Phase(str(p).strip().lower()) for p in phase_labels]
        except ValueError as exc:
            raise FormatError(f"unknown phase label: {exc}") from None
        return runs_to_segments(labels)
    return runs_to_segments(label_samples(series, cc_current, upper_cutoff, current_tol, voltage_tol))


# --------------------------------------------------------------------------
# ingestion


def _read_csv(path: Path, required: Iterable[str]) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"{path}: missing columns {', '.join(missing)}")
        rows = [r for r in reader if r and any(x.strip() for x in r)]
    return header, rows


def read_capacity_sidecar(path) -> dict[int, float]:
    header, rows = _read_csv(Path(path), CAPACITY_COLUMNS)
    ci, ca = header.index("cycle_index"), header.index("capacity_ah")
    try:
        return {int(r[ci]): float(r[ca]) for r in rows}
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: bad capacity row ({exc})") from None


def ingest_cycles(
    path,
    format: str = "generic-cycles",
    nominal_capacity: float | None = None,
    *,
    capacity_path=None,
    cell_id: str | None = None,
    upper_cutoff: float | None = None,
    lower_cutoff: float | None = None,
    cc_charge_current: float | None = None,
    current_sign: str = "charge-positive",
    current_tol: float | None = None,
    voltage_tol: float = DEFAULT_VOLTAGE_TOL,
) -> CellHistory:
    """Load one cell's cycling data.

    ``generic-cycles`` is the cycle CSV (optionally with a ``phase`` column)
    plus an optional capacity sidecar; ``cellhistory-json`` is the canonical
    serialization written by :func:`save_history`. Cutoffs and the CC charge
    current are inferred from the data when not given. Without a sidecar the
    discharge capacity of each cycle is coulomb counted.
    """
    path = Path(path)
    if format not in FORMATS:
        raise FormatError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if format == "cellhistory-json":
        return load_history(path)
    if nominal_capacity is None or not nominal_capacity > 0:
        raise ArgumentError("nominal capacity must be positive")
    if current_sign not in ("charge-positive", "discharge-positive"):
        raise ArgumentError(f"unknown current sign convention {current_sign!r}")
    sign = 1.0 if current_sign == "charge-positive" else -1.0

    header, rows = _read_csv(path, CYCLE_COLUMNS)
    col = {name: header.index(name) for name in CYCLE_COLUMNS}
    phase_col = header.index("phase") if "phase" in header else None

    grouped: dict[int, list[list[str]]] = {}
    for r in rows:
        try:
            grouped.setdefault(int(r[col["cycle_index"]]), []).append(r)
        except (ValueError, IndexError):
            raise FormatError(f"{path}: bad cycle_index in row {r}") from None

    raw = {}
    for idx in sorted(grouped):
        rs = grouped[idx]
        try:
            arrays = {
                k: np.array([float(r[col[k]]) for r in rs])
                for k in ("time_s", "current_a", "voltage_v", "temperature_c")
            }
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: cycle {idx}: bad numeric value ({exc})") from None
        if len(rs) > 1 and np.any(np.diff(arrays["time_s"]) <= 0):
            raise DataError(f"{path}: cycle {idx}: time is not strictly increasing")
        try:
            series = SampleSeries(
                arrays["time_s"], sign * arrays["current_a"], arrays["voltage_v"], arrays["temperature_c"]
            )
        except DataError as exc:
            raise DataError(f"{path}: cycle {idx}: {exc}") from None
        labels = [r[phase_col] for r in rs] if phase_col is not None else None
        raw[idx] = (series, labels)

    all_v = np.concatenate([s.voltage for s, _ in raw.values()])
    all_i = np.concatenate([s.current for s, _ in raw.values()])
    if upper_cutoff is None:
        upper_cutoff = float(all_v.max())
    if lower_cutoff is None:
        lower_cutoff = float(all_v.min())
    if cc_charge_current is None:
        pos = all_i[all_i > 0]
        if pos.size:
            cc_charge_current = float(np.percentile(pos, 90))
        else:
            # discharge-only data: any positive value keeps charge labels unused
            nz = np.abs(all_i[all_i != 0])
            cc_charge_current = float(nz.max()) if nz.size else 1.0
            log.info("%s: no charging samples; CC charge current set to %g A", path.name, cc_charge_current)

    sidecar = read_capacity_sidecar(capacity_path) if capacity_path is not None else None
    cycles = []
    for idx, (series, labels) in raw.items():
        phases = segment_phases(series, cc_charge_current, upper_cutoff, current_tol, voltage_tol, labels)
        counted = discharge_capacity_ah(series)
        if sidecar is not None and idx in sidecar:
            cap = sidecar[idx]
            if cap > 0 and abs(counted - cap) > SIDECAR_DISAGREEMENT * cap:
                log.warning(
                    "%s cycle %d: sidecar capacity %.4f Ah differs from coulomb count %.4f Ah by more than 1%%",
                    path.name, idx, cap, counted,
                )
        else:
            cap = counted
        cycles.append(Cycle(idx, series, phases, cap, soh_percent(cap, nominal_capacity)))

    return CellHistory(
        cell_id=cell_id or path.stem,
        nominal_capacity=float(nominal_capacity),
        upper_cutoff_voltage=float(upper_cutoff),
        lower_cutoff_voltage=float(lower_cutoff),
        cc_charge_current=float(cc_charge_current),
        cycles=cycles,
    )


def write_cycles_csv(history: CellHistory, path, capacity_path=None, include_phase: bool = False) -> None:
    """Write the cycle CSV (and optionally the capacity sidecar) for ``history``."""
    header = list(CYCLE_COLUMNS) + (["phase"] if include_phase else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c in history.cycles:
            labels = None
            if include_phase:
                labels = [Phase.OTHER.value] * len(c.series)
                for seg in c.phases:
                    labels[seg.start_index : seg.end_index + 1] = [seg.kind.value] * seg.length
            s = c.series
            for k in range(len(s)):
                row = [c.index, repr(float(s.time[k])), repr(float(s.current[k])),
                       repr(float(s.voltage[k])), repr(float(s.temperature[k]))]
                if labels is not None:
                    row.append(labels[k])
                w.writerow(row)
    if capacity_path is not None:
        with open(capacity_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CAPACITY_COLUMNS)
            for c in history.cycles:
                w.writerow([c.index, repr(float(c.discharge_capacity))])


# --------------------------------------------------------------------------
# canonical serialization


def history_to_dict(history: CellHistory) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "cell_id": history.cell_id,
        "nominal_capacity": history.nominal_capacity,
        "upper_cutoff_voltage": history.upper_cutoff_voltage,
        "lower_cutoff_voltage": history.lower_cutoff_voltage,
        "cc_charge_current": history.cc_charge_current,
        "cycles": [
            {
                "index": c.index,
                "discharge_capacity": c.discharge_capacity,
                "soh": c.soh,
                "phases": [[p.kind.value, p.start_index, p.end_index] for p in c.phases],
                "time": c.series.time.tolist(),
                "current": c.series.current.tolist(),
                "voltage": c.series.voltage.tolist(),
                "temperature": c.series.temperature.tolist(),
            }
            for c in history.cycles
        ],
    }


def history_from_dict(d: dict) -> CellHistory:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported cell history schema {d.get('schema_version')!r}")
    cycles = [
        Cycle(
            index=c["index"],
            series=SampleSeries(c["time"], c["current"], c["voltage"], c["temperature"]),
            phases=[PhaseSegment(Phase(k), a, b) for k, a, b in c["phases"]],
            discharge_capacity=c["discharge_capacity"],
            soh=c["soh"],
        )
        for c in d["cycles"]
    ]
    return CellHistory(
        cell_id=d["cell_id"],
        nominal_capacity=d["nominal_capacity"],
        upper_cutoff_voltage=d["upper_cutoff_voltage"],
        lower_cutoff_voltage=d["lower_cutoff_voltage"],
        cc_charge_current=d["cc_charge_current"],
        cycles=cycles,
    )


def history_to_json(history: CellHistory) -> str:
    return json.dumps(history_to_dict(history), sort_keys=True, separators=(",", ":"))


def history_from_json(text: str) -> CellHistory:
    return history_from_dict(json.loads(text))


def save_history(history: CellHistory, path) -> None:
    Path(path).write_text(history_to_json(history) + "\n", encoding="utf-8")


def load_history(path) -> CellHistory:
    try:
        return history_from_json(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a cell history ({exc})") from None
