"""Evolve a displaced Gaussian under the oscillator drift on a grid and by sampling."""
import argparse
import os

import numpy as np
from scipy import stats

from stochrr.core import PhysicalParams
from stochrr.fokker_planck import density_estimate, drift_function, fp1d_run, gaussian_grid, stable_dt, uniform_axis
from stochrr.kinematics import GaussianInitial, sample_nelson1d
from stochrr.plots import line_plot
from stochrr.wavefunction import VelocityField1D, harmonic_ground_state


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/fp_vs_ensemble")
    parser.add_argument("--paths", type=int, default=100000)
    parser.add_argument("--tau", type=float, default=1.0)
    parser.add_argument("--start", type=float, default=1.0)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    field_ = VelocityField1D(harmonic_ground_state(1.0), PhysicalParams(hbar_eff=1.0))
    axis = uniform_axis(-6, 6, 480)
    steps = int(np.ceil(args.tau / (0.9 * stable_dt(axis[1] - axis[0], 1.0, 6.0))))
    grid = fp1d_run(gaussian_grid(axis, args.start, 0.3), drift_function(field_, "plus"), 1.0, args.tau / steps,
                    steps)[0]
    ens = sample_nelson1d(field_, GaussianInitial((args.start,), (0.3,)), [0.0, args.tau], args.paths, 8,
                          substeps=1000)
    edges = np.linspace(-4, 4, 81)
    hist = density_estimate(ens, 1, [edges])
    counts, _ = np.histogram(ens.positions(1)[:, 0], edges)
    expected = np.interp(hist.axes[0], grid.axes[0], grid.values) * np.diff(edges) * counts.sum()
    keep = expected >= 5
    pvalue = stats.chisquare(counts[keep], expected[keep] * counts[keep].sum() / expected[keep].sum()).pvalue
    print(f"grid mass {grid.mass():.15f}, chi2 p-value {pvalue:.3f}")
    line_plot(os.path.join(args.out, "density.svg"), [(grid.axes[0], grid.values, "Fokker-Planck"),
                                                      (hist.axes[0], hist.values, "ensemble")],
              title=f"density at tau = {args.tau:g}", xlabel="x", ylabel="p")


if __name__ == "__main__":
    main()
