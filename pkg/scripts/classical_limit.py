"""Shrink lambda in constant B and watch the mean trajectory collapse onto LL."""
import argparse
import csv
import os
from dataclasses import replace

from stochrr.cli import load_scenario, run_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/classical_limit")
    parser.add_argument("--paths", type=int, default=10000)
    parser.add_argument("--lam", type=float, nargs="+", default=[0.3, 0.1, 0.03, 0.01])
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    s = load_scenario("classical-limit-sweep")
    s = replace(s, ensemble=replace(s.ensemble, n_paths=args.paths),
                estimators=replace(s.estimators, lam_sweep=tuple(args.lam)))
    manifest, code = run_scenario(s, args.out, args.workers, overwrite=True)
    with open(os.path.join(args.out, "sweep.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            print(f"lam {float(row['lam']):<6g} max |<x> - x_LL| {float(row['max_deviation']):.5f}  "
                  f"ratio {float(row['ratio_to_tolerance']):.3f}")
    print(f"exit {code}, {manifest.wall_time:.1f} s")


if __name__ == "__main__":
    main()
