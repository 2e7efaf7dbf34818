"""Clarke margin of the vehicle extremal for K = c I over a log grid of c and several T.

With K = 0 the first switch map is singular whenever {H1,H2}(l1) <= 1; this
table shows how the margin recovers as c grows.
"""

import argparse

import numpy as np

from l1verify import vehicle_bench as vb
from l1verify.extremal import integrate_reference_extremal
from l1verify.hamflow import clarke_invertibility, differentials_formula
from l1verify.pullback import compute_pullback


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--X", type=float, default=1.0)
    ap.add_argument("--count", type=int, default=6)
    args = ap.parse_args(argv)

    cs = [0.0] + list(np.logspace(-3, 2, 6))
    lo, hi = vb.t_min(args.alpha, args.X), vb.t_lim(args.alpha, args.X)
    print("T,bracket12," + ",".join(f"c={c:g}" for c in cs))
    for T in np.linspace(lo, hi, args.count + 2)[1:-1]:
        inst = vb.VehicleInstance(args.alpha, args.X, float(T))
        problem = vb.build_problem(args.alpha)
        path = integrate_reference_extremal(problem, vb.reference_schedule(inst))
        pb = compute_pullback(problem, path)
        diffs = differentials_formula(path, pb)
        margins = [clarke_invertibility(pb, diffs, c=c, sweep=None).margin for c in cs]
        print(f"{T:.6f},{vb.oracle(inst).bracket12:.6f}," + ",".join(f"{m:.4g}" for m in margins))


if __name__ == "__main__":
    main()
