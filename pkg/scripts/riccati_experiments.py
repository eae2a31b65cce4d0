"""Fitting experiments on x' = x^2 + 2x with the conjectured model a1*x^2 + a2*x.

Runs four experiments and prints one block per experiment:

  recovery      shotgun fit on [1, 2] with dt = 0.1, compared with the normal equations
  singularity   objective at the true parameters on [0, 1], dt = 1e-3 (straddles the pole)
  trap          descent from [4, 5] on [10, 11], dt = 1e-3, plus a basin map of [0, 6]^2
  closeness     RK4 trajectories of the true and trapped models on [1, 2] and [19, 20]

    python scripts/riccati_experiments.py --out results/
"""

import argparse
import time
from pathlib import Path

import numpy as np

from modelfit.benchmarks import RICCATI_MODEL, riccati_series, riccati_solution
from modelfit.certify import certify_fit
from modelfit.descent import basin_map, shotgun, steepest_descent
from modelfit.errors import NumericError
from modelfit.expr import parse_model
from modelfit.integrate import rk4_solve
from modelfit.objective import ode_objective

MODEL = parse_model(RICCATI_MODEL, 2, 1)


def recovery(args):
    ts = riccati_series(1.0, 2.0, 0.1)
    obj = ode_objective(MODEL, ts)
    t0 = time.perf_counter()
    best, runs = shotgun(obj, [(-1, 4), (0, 6)], args.starts, seed=args.seed)
    elapsed = time.perf_counter() - t0
    x = ts.values[:-1, 0]
    exact = np.linalg.lstsq(np.column_stack([x**2, x]), ts.difference_quotients()[:, 0], rcond=None)[0]
    print("recovery on [1, 2], dt = 0.1")
    print(f"  shotgun best      {best.params}  F = {best.objective:.6g}  ({elapsed:.2f} s, {len(runs)} starts)")
    print(f"  normal equations  {exact}  F = {obj.value(exact):.6g}")
    print(f"  true parameters   [1. 2.]  F = {obj.value([1.0, 2.0]):.6g}")
    cert = certify_fit(MODEL, best.params, ts, m=best.objective)
    print(f"  certificate       L = {cert.L:.4g}, bound at t = 2: {cert(2.0):.4g}")


def singularity(args):
    ts = riccati_series(0.0, 1.0, 1e-3)
    F = ode_objective(MODEL, ts).value([1.0, 2.0])
    print("singularity on [0, 1], dt = 1e-3")
    print(f"  F([1, 2]) = {F:.6g}")
    try:
        certify_fit(MODEL, [1.0, 2.0], ts, m=F)
        print("  certificate issued (unexpected)")
    except NumericError as exc:
        print(f"  certificate refused: {exc}")


def trap(args):
    ts = riccati_series(10.0, 11.0, 1e-3)
    obj = ode_objective(MODEL, ts)
    fit = steepest_descent(obj, [4.0, 5.0])
    print("trap on [10, 11], dt = 1e-3")
    print(f"  from [4, 5] -> {fit.params}  F = {fit.objective:.4g}  ({fit.exit_reason}, {fit.iters} iters)")
    t0 = time.perf_counter()
    grid = basin_map(obj, [(0, 6), (0, 6)], args.resolution, threads=args.threads)
    print(f"  basin map {args.resolution}x{args.resolution}: {grid.n_labels} labels ({time.perf_counter() - t0:.2f} s)")
    if args.out:
        grid.write_csv(args.out / "basin.csv")


def closeness(args):
    f = parse_model("x1^2 + 2*x1", 0, 1)
    h = parse_model("2.8*x1^2 + 5.6*x1", 0, 1)
    print("closeness of f = x^2 + 2x and h = 2.8x^2 + 5.6x")
    for lo, hi in ((1.0, 2.0), (19.0, 20.0)):
        x0 = [float(riccati_solution(lo))]
        y = rk4_solve(f, [], lo, x0, hi, 1e-4)
        z = rk4_solve(h, [], lo, x0, hi, 1e-4)
        s = np.linspace(lo, hi, 1000)
        d = y(s) - z(s)
        print(f"  [{lo:g}, {hi:g}]  max |y - z| = {np.abs(d).max():.4g}   2-norm over 1000 samples = {np.linalg.norm(d):.4g}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--starts", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--resolution", type=int, default=16)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", type=Path)
    args = parser.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for experiment in (recovery, singularity, trap, closeness):
        experiment(args)
        print()


if __name__ == "__main__":
    main()
