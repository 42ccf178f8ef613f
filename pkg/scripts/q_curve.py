"""Tabulate q(chi) on a log grid and mark the 1e22 W/cm^2, 600 MeV head-on point."""
import argparse
import os

import numpy as np

from stochrr.plots import line_plot
from stochrr.qfactor import ChiParams, compute_chi, emit_q_table, q_full, write_q_table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/q_curve")
    parser.add_argument("--points", type=int, default=61)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    chi = np.logspace(-4, 2, args.points)
    rows = emit_q_table(chi_grid=chi)
    write_q_table(rows, os.path.join(args.out, "q_curve.csv"))
    full = [r[3] for r in rows]
    sqed = [r[4] for r in rows]
    line_plot(os.path.join(args.out, "q_curve.svg"), [(chi, full, "q (spinor)"), (chi, sqed, "q (scalar)")],
              title="quantum correction factor", xlabel="chi", ylabel="q", logx=True)

    anchor = compute_chi(ChiParams.from_si(1e22, 600.0, 0.8))
    print(f"chi at 1e22 W/cm^2, 600 MeV, 0.8 um: {anchor:.4f}")
    print(f"q_full there: {q_full(anchor):.4f}")
    print(f"q_full(1e-6): {q_full(1e-6):.7f}")


if __name__ == "__main__":
    main()
