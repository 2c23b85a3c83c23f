"""Command-line entry point: ``bathealth <verb> [--config PATH] [--out DIR] [--seed N] [--jobs N]``.

Exit status is 0 when every unit of work succeeded, 1 when some units
failed (they are listed in the report and on stderr) and 2 for usage,
configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import REPORT_SCHEMA, PipelineConfig, apply_overrides, config_json_schema, load_config, parse_interval
from .data import CellHistory, ingest_cycles, write_cycles_csv
from .errors import BatteryHealthError, ConfigError
from .evaluation import (
    EvaluationRecord,
    box_summary,
    evaluate_hi,
    grid_search_interval,
    screen,
    soc_heatmap,
)
from .fleet import DrivingSession, fusion_breakdown, ingest_sessions, soc_usage_histogram, write_sessions
from .kernels import IntervalSpec, Reference
from .registry import (
    Category,
    HIDescriptor,
    Registry,
    builtin_registry,
    extract,
    fuse,
    requirements_for,
)
from .synth import dataset_params, gen_cell, gen_sessions

log = logging.getLogger("bathealth")

VERBS = ("generate", "extract", "evaluate", "optimize-intervals", "heatmap", "screen", "probability", "fuse",
         "report")


class UnitFailures(Exception):
    def __init__(self, failures: dict[str, str]):
        super().__init__(f"{len(failures)} unit(s) failed")
        self.failures = failures


# --------------------------------------------------------------------------
# output helpers


def _meta(cfg: PipelineConfig, verb: str) -> dict:
    return {"schema": REPORT_SCHEMA, "command": verb, "config_hash": cfg.hash(), "version": __version__}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], cfg: PipelineConfig, verb: str,
               comment: bool = True) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# schema={REPORT_SCHEMA} command={verb} config_hash={cfg.hash()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _finite(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _guard(fn, key):
    """Run one unit; return (key, result, error message)."""
    try:
        return key, fn(), None
    except BatteryHealthError as exc:
        return key, None, f"{type(exc).__name__}: {exc}"


# --------------------------------------------------------------------------
# inputs


class Context:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.registry = builtin_registry()
        self._histories: list[CellHistory] | None = None
        self._sessions: list[DrivingSession] | None = None
        self.settings = cfg.extraction.settings()
        self.engine = cfg.engine.config(cfg.seed)

    @property
    def histories(self) -> list[CellHistory]:
        if self._histories is None:
            self._histories = load_histories(self.cfg)
        return self._histories

    @property
    def sessions(self) -> list[DrivingSession]:
        if self._sessions is None:
            path = self.cfg.resolve(self.cfg.sessions)
            if path is not None:
                self._sessions = ingest_sessions(path)
            else:
                self._sessions = gen_sessions(self.cfg.synthetic.fleet(self.cfg.seed))
        return self._sessions

    def descriptor(self, hid: str) -> HIDescriptor:
        if hid in self.registry:
            return self.registry[hid]
        if hid in self.cfg.fusions:
            return fuse(self.cfg.fusions[hid], self.registry, fusion_id=hid)
        raise ConfigError(f"unknown HI id {hid!r}")

    def selection(self, default: Sequence[str] | None = None) -> list[HIDescriptor]:
        ids = self.cfg.his if self.cfg.his is not None else default
        if ids is None:
            ids = [d.id for d in self.registry.cycling_his()]
        if len(ids) == 0:
            raise ConfigError("empty HI selection")
        return [self.descriptor(h) for h in ids]

    def intervals(self) -> dict[str, IntervalSpec]:
        ivs = {}
        tuned = self.out / "intervals.json"
        if tuned.exists():
            data = json.loads(tuned.read_text(encoding="utf-8"))
            for hid, entry in data.get("intervals", {}).items():
                ivs[hid] = parse_interval(entry["interval"])
        ivs.update(self.cfg.interval_specs())
        return ivs


def synthetic_histories(cfg: PipelineConfig) -> list[CellHistory]:
    params = dataset_params(cfg.synthetic.n_cells, cfg.synthetic.cell_base(), cfg.seed, cfg.synthetic.jitter)
    return _pmap(gen_cell, params, cfg.jobs)


def load_histories(cfg: PipelineConfig) -> list[CellHistory]:
    if not cfg.datasets:
        return synthetic_histories(cfg)
    out = []
    for ds in cfg.datasets:
        path = cfg.resolve(ds.path)
        try:
            out.append(ingest_cycles(
                path, ds.format, ds.nominal_capacity, capacity_path=cfg.resolve(ds.capacity_path),
                cell_id=ds.cell_id, current_sign=ds.current_sign, upper_cutoff=ds.upper_cutoff,
                lower_cutoff=ds.lower_cutoff, cc_charge_current=ds.cc_charge_current,
            ))
        except BatteryHealthError as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    return out


# --------------------------------------------------------------------------
# commands


def cmd_generate(ctx: Context) -> dict:
    cfg = ctx.cfg
    data = ctx.out / "data"
    data.mkdir(parents=True, exist_ok=True)
    cells = []
    for h in ctx.histories:
        csv_path = data / f"{h.cell_id}.csv"
        cap_path = data / f"{h.cell_id}_capacity.csv"
        write_cycles_csv(h, csv_path, cap_path, include_phase=True)
        # entries are valid "datasets" config items
        cells.append({"cell_id": h.cell_id, "path": csv_path.name, "capacity_path": cap_path.name,
                      "nominal_capacity": h.nominal_capacity, "upper_cutoff": h.upper_cutoff_voltage,
                      "lower_cutoff": h.lower_cutoff_voltage, "cc_charge_current": h.cc_charge_current})
    write_sessions(ctx.sessions, data / "sessions.csv")
    payload = {"meta": _meta(cfg, "generate"), "cells": cells, "sessions": {"path": "sessions.csv",
               "count": len(ctx.sessions)}}
    _write_json(data / "manifest.json", payload)
    return payload


def _extract_cell(history: CellHistory, descriptors, intervals, settings):
    cols, failures = [], {}
    for d in descriptors:
        try:
            cols.append(extract(history, d, intervals.get(d.id), settings))
        except BatteryHealthError as exc:
            failures[f"{history.cell_id}/{d.id}"] = f"{type(exc).__name__}: {exc}"
            cols.append(np.full(len(history), np.nan))
    return cols, failures


def cmd_extract(ctx: Context) -> dict:
    cfg = ctx.cfg
    descriptors = ctx.selection()
    for d in descriptors:
        if d.category is Category.FUSION:
            raise ConfigError(f"extract takes scalar HIs; {d.id} is a fusion")
    intervals = ctx.intervals()
    fn = functools.partial(_extract_cell, descriptors=descriptors, intervals=intervals, settings=ctx.settings)
    results = _pmap(fn, ctx.histories, cfg.jobs)
    failures, missing = {}, {d.id: [0, 0] for d in descriptors}
    files = []
    for h, (cols, fails) in zip(ctx.histories, results):
        failures.update(fails)
        rows = []
        for n, c in enumerate(h.cycles):
            rows.append([c.index, *[_cell(float(col[n])) for col in cols], repr(float(c.soh))])
        for d, col in zip(descriptors, cols):
            missing[d.id][0] += int(np.isnan(col).sum())
            missing[d.id][1] += len(col)
        name = f"{h.cell_id}.csv"
        _write_csv(ctx.out / "features" / name, ["cycle_index", *[d.id for d in descriptors], "soh"], rows,
                   cfg, "extract", comment=False)
        files.append(name)
    payload = {
        "meta": _meta(cfg, "extract"),
        "files": files,
        "his": [d.id for d in descriptors],
        "missing_rate": {k: (m / n if n else 0.0) for k, (m, n) in missing.items()},
        "intervals": {k: v.to_list() for k, v in sorted(intervals.items())},
        "failures": failures,
    }
    _write_json(ctx.out / "features" / "summary.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


def _evaluate_one(d: HIDescriptor, histories, intervals, engine, settings, registry):
    return _guard(lambda: evaluate_hi(histories, d, intervals.get(d.id), engine, settings, registry), d.id)


def evaluate_many(ctx: Context, descriptors: Sequence[HIDescriptor], intervals=None):
    intervals = ctx.intervals() if intervals is None else intervals
    fn = functools.partial(_evaluate_one, histories=ctx.histories, intervals=intervals, engine=ctx.engine,
                           settings=ctx.settings, registry=ctx.registry)
    records, failures = {}, {}
    for key, rec, err in _pmap(fn, list(descriptors), ctx.cfg.jobs):
        if err:
            failures[key] = err
        else:
            records[key] = rec
    return records, failures


_CATEGORY_ORDER = [c for c in Category]


def _record_row(rec: EvaluationRecord, d: HIDescriptor):
    iv = rec.interval.to_list() if rec.interval else None
    return [rec.hi_id, d.category.value, _cell(_finite(rec.mean_abs_pcc)), _cell(_finite(rec.rmse_elm)),
            _cell(_finite(rec.rmse_woa_elm)), "P" if d.partial else "F",
            "" if iv is None else f"{iv[0]}:{iv[1]!r}:{iv[2]!r}"]


def _sorted_records(records: dict[str, EvaluationRecord], ctx: Context):
    def key(rec):
        d = ctx.descriptor(rec.hi_id)
        p = rec.mean_abs_pcc if rec.mean_abs_pcc is not None else -1.0
        return (_CATEGORY_ORDER.index(d.category), -p, rec.hi_id)

    return sorted(records.values(), key=key)


def _json_record(rec: EvaluationRecord) -> dict:
    d = rec.to_dict()
    for k in ("mean_abs_pcc", "rmse_elm", "rmse_woa_elm"):
        d[k] = _finite(d[k])
    d["per_cell_rmse"] = {c: [_finite(x) for x in v] for c, v in d["per_cell_rmse"].items()}
    return d


def cmd_evaluate(ctx: Context) -> dict:
    descriptors = ctx.selection()
    records, failures = evaluate_many(ctx, descriptors)
    ordered = _sorted_records(records, ctx)
    rows = [_record_row(r, ctx.descriptor(r.hi_id)) for r in ordered]
    _write_csv(ctx.out / "evaluation.csv",
               ["hi_id", "category", "abs_pcc", "rmse_elm", "rmse_woa_elm", "curves", "interval"], rows,
               ctx.cfg, "evaluate")
    subtotals = {}
    for cat in _CATEGORY_ORDER:
        vals = [r.mean_abs_pcc for r in ordered
                if ctx.descriptor(r.hi_id).category is cat and r.mean_abs_pcc is not None]
        if vals:
            subtotals[cat.value] = box_summary(vals)
    payload = {
        "meta": _meta(ctx.cfg, "evaluate"),
        "records": [_json_record(r) for r in ordered],
        "category_summary": subtotals,
        "quartile_method": "linear interpolation between order statistics; whiskers 1.5 IQR",
        "failures": failures,
    }
    _write_json(ctx.out / "evaluation.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


def default_search_bounds(d: HIDescriptor, histories: Sequence[CellHistory]) -> IntervalSpec:
    """Search range from the data: cutoff voltages, observed temperature range,
    zero to the maximum current, or zero to the shortest phase duration."""
    ref = d.reference
    if ref is Reference.VOLTAGE_V:
        lo = max(h.lower_cutoff_voltage for h in histories)
        hi = min(h.upper_cutoff_voltage for h in histories)
    elif ref is Reference.TEMPERATURE_C:
        lo = min(float(c.series.temperature.min()) for h in histories for c in h.cycles)
        hi = max(float(c.series.temperature.max()) for h in histories for c in h.cycles)
    elif ref is Reference.CURRENT_A:
        lo, hi = 0.0, max(h.cc_charge_current for h in histories)
    elif ref is Reference.SOC_PCT:
        lo, hi = 0.0, 100.0
    else:
        from .data import Phase

        kind = {"cc_charge": Phase.CC_CHARGE, "cv_charge": Phase.CV_CHARGE}.get(d.scope, Phase.CC_DISCHARGE)
        spans = []
        for h in histories:
            for c in h.cycles:
                seg = c.main_segment(kind)
                if seg is not None:
                    spans.append(c.series.time[seg.end_index] - c.series.time[seg.start_index])
        lo, hi = 0.0, float(min(spans)) if spans else 1.0
    return IntervalSpec(ref, float(lo), float(hi))


def _search_one(d: HIDescriptor, histories, bounds, n_points, refine, settings):
    return _guard(lambda: grid_search_interval(histories, d, bounds, n_points, refine, settings), d.id)


def cmd_optimize_intervals(ctx: Context) -> dict:
    cfg = ctx.cfg
    descriptors = [d for d in ctx.selection() if d.partial and d.category is not Category.FUSION]
    if not descriptors:
        raise ConfigError("no partial HIs selected")
    out, failures = {}, {}
    tasks = []
    for d in descriptors:
        b = cfg.grid_search.bounds.get(d.id)
        bounds = parse_interval(b) if b is not None else default_search_bounds(d, ctx.histories)
        tasks.append((d, bounds))
    results = _pmap(functools.partial(_search_star, histories=ctx.histories, n_points=cfg.grid_search.n_points,
                                      refine=cfg.grid_search.refine, settings=ctx.settings), tasks, cfg.jobs)
    for (d, bounds), (key, res, err) in zip(tasks, results):
        if err:
            failures[key] = err
            continue
        out[key] = {
            "interval": res.best.to_list(),
            "abs_pcc": res.best_score,
            "search_bounds": bounds.to_list(),
            "n_candidates": len(res.candidates),
            "refined": res.refined,
            "candidates": [[iv.lower, iv.upper, s] for iv, s in res.candidates],
        }
    payload = {"meta": _meta(cfg, "optimize-intervals"), "intervals": out, "failures": failures}
    _write_json(ctx.out / "intervals.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


def _search_star(task, histories, n_points, refine, settings):
    d, bounds = task
    return _search_one(d, histories, bounds, n_points, refine, settings)


def _heatmap_one(d: HIDescriptor, histories, step, soc_range, settings):
    return _guard(lambda: soc_heatmap(histories, d, step, soc_range, settings), d.id)


def cmd_heatmap(ctx: Context) -> dict:
    cfg = ctx.cfg
    spec = cfg.heatmap
    descriptors = [ctx.descriptor(h) for h in spec.his]
    if not descriptors:
        raise ConfigError("empty heatmap HI selection")
    for d in descriptors:
        if d.category is not Category.SOC_BASED:
            raise ConfigError(f"heatmap needs SOC-based HIs; {d.id} is {d.category.value}")
    fn = functools.partial(_heatmap_one, histories=ctx.histories, step=spec.step,
                           soc_range=tuple(spec.soc_range), settings=ctx.settings)
    summary, failures = {}, {}
    for key, table, err in _pmap(fn, descriptors, cfg.jobs):
        if err:
            failures[key] = err
            continue
        grid = [f"{g:g}" for g in table.grid]
        rows = [[f"{s:g}", *[_cell(table.values.get((s, e))) for e in table.grid]] for s in table.grid]
        _write_csv(ctx.out / "heatmaps" / f"{key}.csv", ["start\\end", *grid], rows, cfg, "heatmap")
        defined = {k: v for k, v in table.values.items() if v is not None}
        best = max(defined.items(), key=lambda kv: kv[1]) if defined else None
        summary[key] = {
            "file": f"{key}.csv",
            "entries": len(table.values),
            "missing": len(table.missing()),
            "degenerate": [list(k) for k in table.degenerate()],
            "best": {"interval": list(best[0]), "abs_pcc": best[1]} if best else None,
        }
    payload = {"meta": _meta(cfg, "heatmap"), "heatmaps": summary, "failures": failures}
    _write_json(ctx.out / "heatmaps" / "summary.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


def probability_table(ctx: Context) -> dict:
    sessions = ctx.sessions
    rows = {}
    targets = [d for d in ctx.registry.values() if d.category is Category.SOC_BASED]
    targets += [fuse(ids, ctx.registry, fusion_id=name) for name, ids in ctx.cfg.fusions.items()]
    for d in targets:
        reqs = requirements_for(d, ctx.registry)
        parts = fusion_breakdown(sessions, reqs)
        prob = float(np.prod([p.probability for p in parts]))
        rows[d.id] = {
            "probability": prob,
            "scenario": d.scenario.value,
            "per_scenario": [{"scenario": p.scenario.value, "numerator": p.numerator,
                              "denominator": p.denominator, "probability": p.probability} for p in parts],
            "requirements": [{"scenario": r.scenario.value, "lo": r.lo, "hi": r.hi, "rule": r.rule.label()}
                             for r in reqs],
        }
    return rows


def cmd_probability(ctx: Context) -> dict:
    rows = probability_table(ctx)
    hist = soc_usage_histogram(ctx.sessions)
    payload = {
        "meta": _meta(ctx.cfg, "probability"),
        "n_sessions": len(ctx.sessions),
        "assumptions": {
            "denominator": "sessions of the category matching each requirement's scenario",
            "fusion": "independence product of per-scenario probabilities",
            "any_subwindow": "inclusive overlap >= width",
            "full_interval": "session span contains the whole window",
        },
        "probabilities": rows,
        "usage": {
            "total": hist.total.tolist(),
            "by_category": {c.value: v.tolist() for c, v in sorted(hist.counts.items())},
            "share_35_95": hist.share(35, 95),
        },
    }
    _write_json(ctx.out / "probability.json", payload)
    return payload


def _load_records(path: Path) -> list[EvaluationRecord]:
    data = json.loads(path.read_text(encoding="utf-8"))
    items = [*data["records"], *data.get("soc_records", [])] if isinstance(data, dict) else data
    return [EvaluationRecord.from_dict(r) for r in items]


def _load_probabilities(path: Path) -> dict[str, float]:
    data = json.loads(path.read_text(encoding="utf-8"))
    table = data.get("probabilities", data)
    return {k: (v["probability"] if isinstance(v, dict) else float(v)) for k, v in table.items()}


def cmd_screen(ctx: Context) -> dict:
    cfg = ctx.cfg
    rec_path = cfg.resolve(cfg.screening.records)
    if rec_path is None and (ctx.out / "evaluation.json").exists():
        rec_path = ctx.out / "evaluation.json"
    if rec_path is not None:
        records = _load_records(rec_path)
        source = str(rec_path)
    else:
        records = list(evaluate_many(ctx, ctx.registry.cycling_his())[0].values())
        source = "computed"
    prob_path = cfg.resolve(cfg.screening.probabilities)
    if prob_path is None and (ctx.out / "probability.json").exists():
        prob_path = ctx.out / "probability.json"
    probs = _load_probabilities(prob_path) if prob_path else {k: v["probability"] for k, v in
                                                              probability_table(ctx).items()}
    soc_recs = [r for r in records if r.hi_id in ctx.registry
                and ctx.registry[r.hi_id].category is Category.SOC_BASED]
    cyc = [r for r in records if r not in soc_recs]
    report = screen(cyc, ctx.registry, probs, cfg.screening.config(), soc_recs)
    payload = {"meta": _meta(cfg, "screen"), "records_source": Path(source).name, **report.to_dict()}
    _write_json(ctx.out / "screening.json", payload)
    return payload


def cmd_fuse(ctx: Context) -> dict:
    cfg = ctx.cfg
    soc = [d for d in ctx.registry.values() if d.category is Category.SOC_BASED]
    fusions = [fuse(ids, ctx.registry, fusion_id=name) for name, ids in cfg.fusions.items()]
    records, failures = evaluate_many(ctx, soc + fusions)
    probs = probability_table(ctx)
    rows, detail = [], []
    for d in soc + fusions:
        rec = records.get(d.id)
        if d.category is Category.FUSION:
            interval = " + ".join(
                f"{c}[{ctx.registry[c].default_interval.lower:g}-{ctx.registry[c].default_interval.upper:g}]"
                for c in d.constituents)
        else:
            interval = f"{d.default_interval.lower:g}-{d.default_interval.upper:g} {d.acquisition_rule.label()}"
        row = [d.id, d.scenario.value, _cell(_finite(rec.rmse_elm) if rec else None),
               _cell(_finite(rec.rmse_woa_elm) if rec else None), _cell(probs[d.id]["probability"]), interval]
        rows.append(row)
        detail.append({"hi_id": d.id, "scenario": d.scenario.value, "constituents": list(d.constituents),
                       "record": _json_record(rec) if rec else None, "probability": probs[d.id],
                       "recommended_interval": interval})
    _write_csv(ctx.out / "fusion.csv",
               ["hi_id", "scenario", "rmse_elm", "rmse_woa_elm", "probability", "recommended_interval"],
               rows, cfg, "fuse")
    payload = {"meta": _meta(cfg, "fuse"), "rows": detail, "failures": failures}
    _write_json(ctx.out / "fusion.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


def cmd_report(ctx: Context) -> dict:
    steps = [("generate", cmd_generate), ("extract", cmd_extract), ("optimize-intervals", cmd_optimize_intervals),
             ("evaluate", cmd_evaluate), ("heatmap", cmd_heatmap), ("probability", cmd_probability),
             ("screen", cmd_screen), ("fuse", cmd_fuse)]
    status, failures = {}, {}
    for name, fn in steps:
        try:
            fn(ctx)
            status[name] = "ok"
        except UnitFailures as exc:
            status[name] = "partial"
            failures.update({f"{name}:{k}": v for k, v in exc.failures.items()})
        except BatteryHealthError as exc:
            status[name] = "failed"
            failures[name] = f"{type(exc).__name__}: {exc}"
    payload = {"meta": _meta(ctx.cfg, "report"), "steps": status, "failures": failures}
    _write_json(ctx.out / "report.json", payload)
    if failures:
        raise UnitFailures(failures)
    return payload


COMMANDS = {
    "generate": cmd_generate,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "optimize-intervals": cmd_optimize_intervals,
    "heatmap": cmd_heatmap,
    "screen": cmd_screen,
    "probability": cmd_probability,
    "fuse": cmd_fuse,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bathealth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--print-config-schema", action="store_true", help="print config defaults and exit")
    sub = parser.add_subparsers(dest="verb")
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="JSON pipeline config")
        p.add_argument("--out", help="output directory (overrides BATHEALTH_OUT and the config)")
        p.add_argument("--seed", type=int, help="base seed for synthetic data and model draws")
        p.add_argument("--jobs", type=int, help="worker processes (overrides BATHEALTH_JOBS)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config_schema:
        print(json.dumps(config_json_schema(), indent=2, sort_keys=True))
        return 0
    if args.verb is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args.out, args.seed, args.jobs)
        ctx = Context(cfg)
        COMMANDS[args.verb](ctx)
    except UnitFailures as exc:
        for unit, msg in sorted(exc.failures.items()):
            print(f"error: {unit}: {msg}", file=sys.stderr)
        return 1
    except (BatteryHealthError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
