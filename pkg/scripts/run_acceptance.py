"""Run the acceptance checks and print one PASS/FAIL line each.

    python scripts/run_acceptance.py            # full scale
    python scripts/run_acceptance.py --quick    # reduced sample counts
    python scripts/run_acceptance.py --only reconstruction sphere_volume --json out.json
"""
import argparse
import sys

from chxray.artifacts import atomic_write_text, dump_json
from chxray.experiments import ACCEPTANCE, run_all


def main():
    ap = argparse.ArgumentParser(description="acceptance checks")
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--seed", type=int, default=0, help="offset added to every check's seed")
    ap.add_argument("--only", nargs="+", choices=list(ACCEPTANCE), metavar="NAME")
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args()
    results = run_all(args.seed, args.quick, args.only)
    for r in results:
        print(r.line(), flush=True)
    if args.json:
        atomic_write_text(args.json, dump_json([dict(r.to_dict(), seconds=r.seconds) for r in results]))
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} passed")
    return 0 if n_ok == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
