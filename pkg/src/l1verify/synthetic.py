"""Planar test problems whose cost changes sign on the bang arcs.

x1' = x2, x2' = u - alpha x2 - kappa x2^3 with psi = x2 - b.  For b between
0 and the peak speed, psi crosses zero once on the accelerating arc and once
on the braking arc, so the crossing corrections of every formula are active.
``kappa`` makes the drift nonlinear so that finite differences of pulled-back
fields are no longer exact.
"""

from __future__ import annotations

import numpy as np

from .geometry import ProblemDefinition, ScalarField, VectorField, register_problem


def crossing_problem(alpha: float = 1.0, kappa: float = 0.0, b: float = 0.1) -> ProblemDefinition:
    alpha, kappa, b = float(alpha), float(kappa), float(b)

    def f0(x):
        return np.array([x[1], -alpha * x[1] - kappa * x[1] ** 3])

    def f0_jac(x):
        return np.array([[0.0, 1.0], [0.0, -alpha - 3.0 * kappa * x[1] ** 2]])

    def f0_hess(x):
        h = np.zeros((2, 2, 2))
        h[1, 1, 1] = -6.0 * kappa * x[1]
        return h

    zero3 = np.zeros((2, 2, 2))
    return ProblemDefinition(
        2,
        VectorField(f0, f0_jac, f0_hess, name="f0"),
        VectorField(lambda x: np.array([0.0, 1.0]), lambda x: np.zeros((2, 2)), lambda x: zero3,
                    name="f1"),
        ScalarField(lambda x: x[1] - b, lambda x: np.array([0.0, 1.0]), lambda x: np.zeros((2, 2)),
                    name="x2-b"),
        name="crossing", parameters={"alpha": alpha, "kappa": kappa, "b": b})


register_problem("crossing", crossing_problem)
