"""Scalar reconstruction error against grid size and seed count on the hyperbolic disc.

Prints a table and optionally writes it as CSV.  Truth: Gaussian centred at
(0.2, -0.1) with width 0.35, noiseless data, CGLS to rtol 1e-8.
"""
import argparse
import time

import numpy as np

from chxray import make_hyperbolic
from chxray.artifacts import write_csv
from chxray.experiments import recon_experiment
from chxray.tensor import gaussian


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grids", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--seeds", type=int, nargs="+", default=[250, 500, 1000, 2000])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--csv")
    args = ap.parse_args()

    M = make_hyperbolic(2, 1.0)
    truth = gaussian(2, [0.2, -0.1], 0.35)
    rows = []
    print(f"{'nx':>4} {'seeds':>6} {'rel_error':>11} {'residual':>10} {'iters':>6} {'sec':>6}")
    for nx in args.grids:
        for n in args.seeds:
            t0 = time.perf_counter()
            _, _, _, res = recon_experiment(M, 0, truth, nx, n, np.random.default_rng(args.seed), 1e-8, 3000)
            dt = time.perf_counter() - t0
            rows.append([nx, n, res.error, res.residual, res.iterations, dt])
            print(f"{nx:4d} {n:6d} {res.error:11.3e} {res.residual:10.2e} {res.iterations:6d} {dt:6.1f}", flush=True)
    if args.csv:
        write_csv(args.csv, ["nx", "seeds", "rel_error", "residual", "iterations", "seconds"], rows)


if __name__ == "__main__":
    main()
