"""Bracket-identity residuals versus the finite-difference step of the pulled-back data.

The vehicle fields are affine, so its residuals sit at round-off; the
nonlinear crossing problem (kappa > 0) shows the second-order decay.
"""

import argparse

import numpy as np

from l1verify import vehicle_bench as vb
from l1verify.extremal import integrate_reference_extremal, shoot_extremal
from l1verify.pullback import compute_pullback
from l1verify.secondvar import check_bracket_identities
from l1verify.synthetic import crossing_problem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--kappa", type=float, default=0.3)
    ap.add_argument("--richardson", action="store_true")
    args = ap.parse_args(argv)

    problem = crossing_problem(kappa=args.kappa, b=0.1)
    shot = shoot_extremal(problem, np.zeros(2), np.array([1.0, 0.0]), 2.3, 1, -1,
                          (np.array([1.94, 0.888]), 1.32, 1.98))
    cases = {"crossing": (problem, integrate_reference_extremal(problem, shot.schedule))}
    vp = vb.build_problem(1.0)
    cases["vehicle"] = (vp, integrate_reference_extremal(
        vp, vb.reference_schedule(vb.VehicleInstance())))
    print("problem,step,G2G1,G3G2,G3G1")
    for name, (prob, path) in cases.items():
        for h in (4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3):
            pb = compute_pullback(prob, path, step=h, richardson=args.richardson)
            res = check_bracket_identities(path, pb)
            print(f"{name},{h:g}," + ",".join(f"{r.residual:.3e}" for r in res))


if __name__ == "__main__":
    main()
