"""Compare the window RR-field estimate with P x F_LAD of the mean path in constant B."""
import argparse
from dataclasses import replace

import numpy as np

from stochrr.cli import field_profile, initial_distribution, load_scenario, physical_params, tau_grid, velocity_field
from stochrr.kinematics import sample_ensemble
from stochrr.rr import averaged_bridge


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lam", type=float, nargs="+", default=[0.1, 0.05, 0.01])
    parser.add_argument("--paths", type=int, default=10000)
    parser.add_argument("--substeps", type=int, default=10)
    parser.add_argument("--indices", type=int, nargs="+", default=[20, 50])
    args = parser.parse_args()

    base = load_scenario("pomega-constB")
    for lam in args.lam:
        s = replace(base, physics=replace(base.physics, lam=lam), grid=replace(base.grid, substeps=args.substeps))
        params = physical_params(s)
        field_ = velocity_field(s, params, field_profile(s.field))
        ens = sample_ensemble(initial_distribution(s), field_, tau_grid(s.grid), args.paths, s.seed,
                              substeps=args.substeps)
        for k in args.indices:
            rr, prob, predicted, z = averaged_bridge(ens, field_, k, lam * np.sqrt(ens.tau[k]), params)
            print(f"lam {lam:<5g} tau {ens.tau[k]:.3f}  P {prob.probability:.3f}  window {rr.n_window:5d}  "
                  f"max z {np.max(z):.2f}")


if __name__ == "__main__":
    main()
