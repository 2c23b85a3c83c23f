#!/usr/bin/env python3
"""Run the full pipeline on a synthetic fleet and print the headline numbers.

Usage: python3 scripts/run_synthetic_pipeline.py [--out DIR] [--seed N] [--jobs N] [--cells N] [--cycles N]
"""

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

from bathealth.cli import main


def build_config(args) -> dict:
    return {
        "synthetic": {"n_cells": args.cells, "cycles": args.cycles, "n_sessions": args.sessions},
        "his": args.his.split(",") if args.his else None,
        "seed": args.seed,
    }


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/synthetic")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--cells", type=int, default=4)
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--sessions", type=int, default=20000)
    p.add_argument("--his", help="comma-separated HI ids; default is every cycling HI")
    args = p.parse_args(argv)

    out = Path(args.out)
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "config.json"
        cfg_path.write_text(json.dumps(build_config(args)), encoding="utf-8")
        t0 = time.perf_counter()
        rc = main(["report", "--config", str(cfg_path), "--out", str(out), "--jobs", str(args.jobs)])
        elapsed = time.perf_counter() - t0

    steps = json.loads((out / "report.json").read_text())["steps"]
    print(f"report finished in {elapsed:.1f} s, exit code {rc}")
    for name, status in steps.items():
        print(f"  {name:20s} {status}")
    evaluation = out / "evaluation.json"
    if evaluation.exists():
        recs = json.loads(evaluation.read_text())["records"]
        top = sorted((r for r in recs if r["mean_abs_pcc"] is not None), key=lambda r: -r["mean_abs_pcc"])[:5]
        print("top HIs by |PCC|:")
        for r in top:
            print(f"  {r['hi_id']:8s} |PCC|={r['mean_abs_pcc']:.5f} ELM={r['rmse_elm']} WOA-ELM={r['rmse_woa_elm']}")
    screening = out / "screening.json"
    if screening.exists():
        print("screening final set:", ", ".join(json.loads(screening.read_text())["final"]))
    return rc


if __name__ == "__main__":
    sys.exit(run())
