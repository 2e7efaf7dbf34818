"""Reduced second variation on the admissible switching-time variations.

Variations of the switching times with the initial point held fixed form
the space

    V0 = {eps in R^3 : eps1 + eps2 + eps3 = 0, eps1 g1 + eps2 g2 + eps3 g3 = 0}

(g_i evaluated at x0).  On V0 the second variation is a quadratic form in
eps built from Lie derivatives of the pulled-back cost, its integral over the
last arc and the differential of the terminal penalty.  Its smallest
eigenvalue on V0 is the coercivity margin.

The bracket identities tie pull-back data to Poisson brackets on the
extremal; both sides are computed by separate code paths and compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IncompletePullbackError
from .extremal import (MARGIN_THRESHOLD, AssumptionReport, ExtremalPath, ZeroStructure,
                       arc_hamiltonian)
from .geometry import poisson_bracket
from .odeflow import integrate_variational, split_augmented
from .pullback import PAIRS, PullbackData


@dataclass(frozen=True)
class AdmissibleSpace:
    basis: np.ndarray          # shape (dimension, 3), orthonormal rows
    singular_values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[0])


def admissible_space(g, rank_tol: float = 1e-9) -> AdmissibleSpace:
    """Null space of [[1, 1, 1], [g1 g2 g3]] by SVD; ``g`` is PullbackData or a 3 x n array."""
    G = np.asarray(g.g if isinstance(g, PullbackData) else g, dtype=float)
    A = np.vstack([np.ones(3), G.T])
    _, s, vt = np.linalg.svd(A)
    cutoff = rank_tol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return AdmissibleSpace(vt[rank:].copy(), s)


def _sum_term(pb: PullbackData, zs: ZeroStructure) -> float:
    total = 0.0
    for i in range(1, zs.n3 + 1):
        label = f"s3_{i}"
        if label not in pb.lie_table:
            raise IncompletePullbackError(f"missing Lie table entry {label!r}")
        total += (-1) ** i * pb.lie_table[label][2]
    return total


def evaluate_reduced_J(pb: PullbackData, zs: ZeroStructure, eps) -> float:
    """Second variation at switching-time variation eps (defined on all of R^3)."""
    e1, e2, e3 = (float(v) for v in eps)
    for label in ("tau1", "T"):
        if label not in pb.lie_table:
            raise IncompletePullbackError(f"missing Lie table entry {label!r}")
    value = 0.5 * zs.a0 * (-1) ** zs.n1 * e1 ** 2 * pb.lie_table["tau1"][0]
    value -= 0.5 * e3 ** 2 * pb.lie_table["T"][2]
    value += zs.a2 * e3 ** 2 * _sum_term(pb, zs)
    value += 0.5 * pb.second_lie_integral((e1, e2, 0.0))
    value += 0.5 * e1 * e2 * pb.bracket_integral(1, 2)
    e = (e1, e2, e3)
    for i, j in PAIRS:
        value += 0.5 * e[i - 1] * e[j - 1] * float(pb.dbeta @ pb.bracket(i, j))
    return float(value)


@dataclass
class SecondVariationReport:
    dimension: int
    basis: np.ndarray
    quadratic_form: np.ndarray
    smallest_eigenvalue: float
    verdict: str
    threshold: float = MARGIN_THRESHOLD

    @property
    def margin(self) -> float:
        return float("inf") if self.dimension == 0 else self.smallest_eigenvalue

    def assumption_report(self) -> AssumptionReport:
        if self.verdict in ("coercive", "trivially-coercive"):
            v = "pass"
        elif self.margin > 0:
            v = "marginal"
        else:
            v = "fail"
        return AssumptionReport("SecondVar", v, self.margin, None, self.threshold,
                                details={"dimension": self.dimension, "verdict": self.verdict})

    def to_dict(self) -> dict:
        finite = np.isfinite(self.margin)
        return {"dimension": self.dimension, "basis": self.basis.tolist(),
                "quadratic_form": self.quadratic_form.tolist(),
                "smallest_eigenvalue": self.smallest_eigenvalue if finite else None,
                "verdict": self.verdict, "threshold": self.threshold}


def quadratic_form_matrix(J: Callable, basis: np.ndarray) -> np.ndarray:
    """Matrix of J on the basis by polarization: (J(b_i + b_j) - J(b_i) - J(b_j)) / 2."""
    k = basis.shape[0]
    diag = [J(b) for b in basis]
    Q = np.empty((k, k))
    for i in range(k):
        Q[i, i] = diag[i]
        for j in range(i + 1, k):
            Q[i, j] = Q[j, i] = 0.5 * (J(basis[i] + basis[j]) - diag[i] - diag[j])
    return Q


def coercivity_verdict(space: AdmissibleSpace, J: Callable, threshold: float = MARGIN_THRESHOLD
                       ) -> SecondVariationReport:
    """``J`` maps an eps-triple to the second variation (e.g. a closure over evaluate_reduced_J)."""
    if space.dimension == 0:
        return SecondVariationReport(0, space.basis, np.zeros((0, 0)), float("inf"),
                                     "trivially-coercive", threshold)
    Q = quadratic_form_matrix(J, space.basis)
    lam = float(np.linalg.eigvalsh(Q)[0])
    verdict = "coercive" if lam > threshold else "not-coercive"
    return SecondVariationReport(space.dimension, space.basis, Q, lam, verdict, threshold)


def second_variation_report(pb: PullbackData, zs: ZeroStructure,
                            threshold: float = MARGIN_THRESHOLD) -> SecondVariationReport:
    return coercivity_verdict(admissible_space(pb), lambda e: evaluate_reduced_J(pb, zs, e),
                              threshold)


# -- bracket identities ---------------------------------------------------------------

@dataclass
class IdentityResult:
    name: str
    lhs: float
    rhs: float
    details: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def scale(self) -> float:
        return max(abs(self.lhs), abs(self.rhs))

    @property
    def relative_residual(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
                "relative_residual": self.relative_residual}


def transport_matrix(H, z, t0: float, t1: float, rtol: float = 1e-12, atol: float = 1e-14
                     ) -> np.ndarray:
    """2n x 2n linearization of the Hamiltonian flow of H from z over [t0, t1]."""
    traj, _ = integrate_variational(H.rhs, lambda t, w: H.vector_field_jacobian(w), z, t0, t1,
                                    rtol=rtol, atol=atol)
    return split_augmented(traj.y1, z.size)[1]


def check_bracket_identities(path: ExtremalPath, pb: PullbackData) -> list[IdentityResult]:
    """Pull-back side versus extremal side for the three switching pairs.

    Left sides use only pull-back data: the terminal differential, the
    sign-resolved cost integral over the last arc and Lie derivatives of the
    pulled-back cost at the switching times.  Right sides use Poisson
    brackets at the switching covectors, and for the (1, 3) pair the
    transport of the first arc's Hamiltonian field across the zero arc.
    """
    zs = path.zero_structure
    sch = path.schedule
    n = path.n
    s1 = zs.a0 * (-1) ** zs.n1        # sign of psi just before tau1
    s2 = zs.a2                         # sign of psi just after tau2
    H1 = path.last_first_arc_hamiltonian
    H3 = path.first_last_arc_hamiltonian
    H2 = arc_hamiltonian(path.problem, 2, 0, sch.u1, sch.u3)
    z1, z2 = path.ell1, path.ell2

    def pulled(i, j):
        return float(pb.dbeta @ pb.bracket(i, j)) + pb.bracket_integral(i, j)

    table = pb.lie_table
    lhs21 = pulled(1, 2) - s1 * table["tau1"][1]
    rhs21 = -poisson_bracket(H1, H2, z1[n:], z1[:n])
    lhs32 = pulled(2, 3) + s2 * table["tau2"][1]
    rhs32 = -poisson_bracket(H2, H3, z2[n:], z2[:n])
    lhs31 = pulled(1, 3) - s1 * table["tau1"][2] + s2 * table["tau2"][0]
    Phi = transport_matrix(H2, z1, sch.tau1, sch.tau2)
    rhs31 = -float(H3.dz(z2) @ (Phi @ H1.vector_field(z1)))
    return [IdentityResult("G2G1", lhs21, rhs21), IdentityResult("G3G2", lhs32, rhs32),
            IdentityResult("G3G1", lhs31, rhs31)]
