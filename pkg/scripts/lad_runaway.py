"""Field-free LAD with an initial kick runs away; LL with the same start does not."""
import argparse

import numpy as np

from stochrr.core import PhysicalParams
from stochrr.errors import RunawayDetected
from stochrr.fields import Vacuum
from stochrr.rr import ClassicalState, integrate_lad, integrate_ll, proper_acceleration


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tau0", type=float, default=0.01)
    parser.add_argument("--efolds", type=int, default=5)
    parser.add_argument("--overflow", type=float, default=1e6)
    # small enough that |a| crosses the threshold before the velocity overflows
    parser.add_argument("--detect-tau0", type=float, default=5e-4)
    args = parser.parse_args()

    tau0 = args.tau0
    params = PhysicalParams(tau0=tau0)
    state = ClassicalState((0, 0, 0, 0), (1.0, 0, 0, 0), (0.0, 1.0, 0, 0))
    span = (0.0, args.efolds * tau0)
    lad = integrate_lad(state, Vacuum(), params, span, tau0 / 200, overflow=1e300)
    alpha = proper_acceleration(lad.v, lad.a)
    for i in range(args.efolds + 1):
        print(f"tau/tau0 {i}: |a| = {alpha[200 * i]:.6f}  (e^{i} = {np.e**i:.6f})")
    ll = integrate_ll(state, Vacuum(), params, span, tau0 / 200)
    print(f"LL max velocity change: {np.max(np.abs(ll.v - ll.v[0])):.1e}")

    small = args.detect_tau0
    try:
        integrate_lad(state, Vacuum(), PhysicalParams(tau0=small), (0.0, 1.0), small / 200, overflow=args.overflow)
    except RunawayDetected as exc:
        print(f"tau0 = {small:g}: run-away flagged at tau = {exc.tau:.5f}, expected {small * np.log(args.overflow):.5f}")


if __name__ == "__main__":
    main()
