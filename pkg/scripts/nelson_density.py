"""Sample the oscillator ground state from a point start and compare with |psi|^2."""
import argparse
import csv
import os
from dataclasses import replace

from stochrr.cli import load_scenario, run_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/nelson")
    parser.add_argument("--paths", type=int, default=100000)
    parser.add_argument("--tau-end", type=float, default=50.0)
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    s = load_scenario("nelson-ho")
    s = replace(s, seed=args.seed, ensemble=replace(s.ensemble, n_paths=args.paths),
                grid=replace(s.grid, tau_end=args.tau_end))
    manifest, code = run_scenario(s, args.out, overwrite=True)
    with open(os.path.join(args.out, "ks.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            print(f"tau {float(row['tau']):6.2f}  KS {float(row['ks_statistic']):.5f}  p {float(row['p_value']):.3f}")
    print(f"exit {code}, {manifest.wall_time:.1f} s")


if __name__ == "__main__":
    main()
