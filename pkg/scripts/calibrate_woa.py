#!/usr/bin/env python3
"""Sphere benchmark for the whale optimizer: best fitness statistics over many seeds.

The acceptance tolerance for the sphere test was frozen from the output of this script.
"""

import argparse

import numpy as np

from bathealth.regression import WoaConfig, woa_optimize


def sphere(w):
    return float(np.sum(w ** 2))


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--bound", type=float, default=10.0)
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--seeds", type=int, default=20)
    args = p.parse_args(argv)

    best = np.array([
        woa_optimize(sphere, args.dim, WoaConfig(args.population, args.iterations, lower=-args.bound, upper=args.bound, seed=s)).best_fitness
        for s in range(args.seeds)
    ])
    q = np.quantile(best, [0.0, 0.25, 0.5, 0.75, 1.0])
    print(f"dim={args.dim} bounds=+-{args.bound:g} s={args.population} t_max={args.iterations} seeds={args.seeds}")
    print("min={:.3e} q1={:.3e} median={:.3e} q3={:.3e} max={:.3e}".format(*q))


if __name__ == "__main__":
    main()
