"""How slow must a sweep be for the exchange to be complete, and for a gap to stop it?

Prints 1 - F against tau at an exact crossing (the product tau * (1 - F)
settles near 12 for two levels), then the crossing-to-following
transition once a gap Delta is opened, next to the Landau-Zener estimate.
"""

import argparse
import math

from exotic_holonomy.dynamics import Schedule, epsilon_for_gap, evolve, gaps, landau_zener_estimate
from exotic_holonomy.models import three_level, two_level


def exact_crossing(taus):
    print("exact crossing (eps = 0)")
    print(f"{'model':>12} {'tau':>10} {'exchange F':>12} {'1-F':>10} {'tau(1-F)':>10}")
    for spec in (two_level(), three_level()):
        for tau in taus:
            f = evolve(spec, 0.0, Schedule(tau)).exchange_fidelity()
            print(f"{spec.family:>12} {tau:10g} {f:12.6f} {1 - f:10.2e} {tau * (1 - f):10.3f}")


def opened_gap(delta, taus):
    spec = two_level()
    eps = epsilon_for_gap(spec, delta)
    g = gaps(spec, eps)
    print(f"\nopened gap: Delta = {g.delta:.3e} (eps = {eps:.6f})")
    print(f"{'tau':>10} {'exchange F':>12} {'sqrt(P_LZ)':>12}")
    for tau in taus:
        f = evolve(spec, eps, Schedule(tau)).exchange_fidelity()
        print(f"{tau:10g} {f:12.6f} {math.sqrt(landau_zener_estimate(spec, g.delta, tau)):12.6f}")
    # P_LZ = exp(-Delta^2 tau / (8 v)) for the sine schedule
    need = 8 * spec.v * math.log(1e4) / g.delta**2
    print(f"exchange amplitude < 0.01 needs tau > {need:.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=1e-3)
    ap.add_argument("--quick", action="store_true", help="fewer and shorter sweeps")
    args = ap.parse_args()
    exact_crossing([50, 200, 1000] if args.quick else [50, 200, 1000, 5000, 20000])
    opened_gap(args.delta, [50, 1e4] if args.quick else [50, 1e4, 1e5, 1e6])
