"""Switch-time differentials with both signs of the crossing correction against finite differences."""

import argparse

import numpy as np

from l1verify.extremal import integrate_reference_extremal, shoot_extremal
from l1verify.hamflow import (CROSSING_COEFFICIENT, PRINTED_CROSSING_COEFFICIENT,
                              differentials_fd, differentials_formula)
from l1verify.pullback import compute_pullback
from l1verify.synthetic import crossing_problem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b", type=float, default=0.1)
    args = ap.parse_args(argv)
    for kappa in (0.0, 0.3):
        problem = crossing_problem(kappa=kappa, b=args.b)
        shot = shoot_extremal(problem, np.zeros(2), np.array([1.0, 0.0]), 2.3, 1, -1,
                              (np.array([1.94, 0.888]), 1.32, 1.98))
        path = integrate_reference_extremal(problem, shot.schedule)
        pb = compute_pullback(problem, path)
        fd = differentials_fd(path).rows()
        for coeff in (CROSSING_COEFFICIENT, PRINTED_CROSSING_COEFFICIENT):
            rows = differentials_formula(path, pb, crossing_coefficient=coeff).rows()
            dev = {k: np.linalg.norm(v - fd[k]) / np.linalg.norm(fd[k]) for k, v in rows.items()}
            print(f"kappa={kappa} coefficient={coeff:+g}: "
                  + ", ".join(f"{k} {d:.2e}" for k, d in dev.items()))


if __name__ == "__main__":
    main()
