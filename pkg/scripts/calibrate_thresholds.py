"""Oracle run that freezes the derived reconstruction thresholds.

Runs the kernel scan (dense SVD) on the 32x32 hyperbolic disc with 4000 seeds
and the rotational counter-probe fit, then writes src/chxray/data/thresholds.json.
Re-run only when the discretization changes; tests read the frozen file.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from chxray import make_hyperbolic
from chxray.artifacts import atomic_write_text, dump_json
from chxray.recon import (ReconGrid, assemble_forward, discretize, kernel_scan, recon_seeds,
                          solenoidal_defect)
from chxray.tensor import rotational_one_form

OUT = Path(__file__).resolve().parents[1] / "src" / "chxray" / "data" / "thresholds.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--safety", type=float, default=0.5, help="factor applied to the observed sigma ratio")
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()

    M = make_hyperbolic(2, 1.0)
    grid = ReconGrid(1.5, 32, 32, 1.0)
    rng = np.random.default_rng(args.seed)
    seeds = recon_seeds(M, grid, 4000, rng)
    op0 = assemble_forward(M, grid, seeds, 0)
    op1 = assemble_forward(M, grid, seeds, 1)
    k0 = kernel_scan(M, op0)
    k1 = kernel_scan(M, op1)
    probe = solenoidal_defect(M, grid, discretize(grid, rotational_one_form()), 1)
    data = {
        "oracle": {"model": "hyperbolic:1", "grid": "32:32", "seeds": 4000, "rng": "PCG64", "seed": args.seed,
                   "near_kernel_fraction": 0.05},
        "observed": {"m0_sigma_ratio": k0.sigma_ratio, "m1_max_angle_deg": k1.max_angle_deg,
                     "counter_probe_defect": probe},
        "m0_sigma_ratio_min": args.safety * k0.sigma_ratio,
        "m1_max_angle_deg": 10.0,
        "counter_probe_defect_min": 0.3,
    }
    atomic_write_text(args.out, dump_json(data))
    print(json.dumps(data["observed"], indent=2))


if __name__ == "__main__":
    main()
