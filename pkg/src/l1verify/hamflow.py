"""Maximized Hamiltonian flow near the reference extremal and the Clarke test.

Started from a covector-state pair near the reference one, the flow follows
H1^sigma until H2 overtakes it, then H2 until H3^sigma does; within a bang
family sigma flips at zeros of psi.  The times at which this happens are
smooth functions of the starting point whose differentials are evaluated by
closed formulas (transported symplectic pairings plus crossing corrections)
and, independently, by central differences of the flow itself.

The Clarke test checks that every convex combination of the one-sided
linearizations of the projected flow at the switching times is invertible
on the tangent space of the initial Lagrangian manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateSwitchError, StructureMismatch
from .extremal import (MARGIN_THRESHOLD, ExtremalPath, ZeroStructure, arc_hamiltonian)
from .geometry import ProblemDefinition, poisson_bracket
from .odeflow import EventSpec, integrate, integrate_variational, split_augmented
from .pullback import PullbackData

FLOW_RTOL = 1e-12
FLOW_ATOL = 1e-14


@dataclass
class MaxFlowState:
    point: np.ndarray
    time: float
    active_hamiltonian: str
    crossing_log: dict
    pieces: list = field(default_factory=list)     # (tag, Trajectory)

    def log_sequence(self) -> list:
        out = list(self.crossing_log["s1"])
        if self.crossing_log["tau1"] is not None:
            out.append(self.crossing_log["tau1"])
        if self.crossing_log["tau2"] is not None:
            out.append(self.crossing_log["tau2"])
        return out + list(self.crossing_log["s3"])

    def __call__(self, t: float) -> np.ndarray:
        for _, traj in self.pieces:
            if t <= traj.t1:
                return np.asarray(traj(t))
        return self.pieces[-1][1].y1


def maximized_flow(problem: ProblemDefinition, u1: int, u3: int, start, t: float,
                   horizon: Optional[float] = None, a0: Optional[int] = None,
                   expected: Optional[ZeroStructure] = None,
                   endpoint_window: Optional[float] = None,
                   rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL) -> MaxFlowState:
    """Flow of the maximized Hamiltonian from ``start = (x, p)`` up to time t.

    Zeros of psi closer than ``endpoint_window`` to 0 or to ``horizon`` are
    labels, not crossings: sigma keeps its reference value there (``a0``
    fixes the initial sign).  With ``expected`` the number of crossings on
    each bang arc must match once t reaches the horizon.
    """
    n = problem.n
    z = np.asarray(start, dtype=float).copy()
    horizon = t if horizon is None else horizon
    window = 1e-8 * max(horizon, 1e-300) if endpoint_window is None else endpoint_window
    tol = 1e-12 * max(horizon, 1e-300)
    psi = problem.psi
    log = {"s1": [], "tau1": None, "tau2": None, "s3": []}
    pieces = []
    if t <= 0:
        return MaxFlowState(z, 0.0, "H1", log, [])

    if a0 is None:
        p0 = psi(z[:n])
        a0 = int(np.sign(p0)) if p0 != 0 else \
            (1 if psi.grad(z[:n]) @ problem.arc_field(u1)(z[:n]) >= 0 else -1)

    def F1(w):
        return float(w[n:] @ problem.f1(w[:n]))

    def psi_event():
        return EventSpec(lambda s, w: psi(w[:n]), "any", True, tol, "psi", window)

    def run(family, sigma, t0, w, switch, guard):
        """Integrate one family until its switching event, the end time, or a guard."""
        while True:
            H = arc_hamiltonian(problem, family, sigma, u1, u3)
            events = [EventSpec(switch(sigma), "up", True, tol, "switch", window),
                      EventSpec(guard, "up", True, tol, "guard", window)]
            if family != 2:
                events.append(psi_event())
            traj, hits = integrate(H.rhs, w, t0, t, events, rtol=rtol, atol=atol)
            pieces.append((H.tag, traj))
            if not hits:
                return traj.y1, t, sigma, H.tag, False
            hit = hits[-1]
            if hit.name == "guard":
                raise StructureMismatch(f"{H.tag} is overtaken by a Hamiltonian outside the "
                                        f"reference structure at t={hit.t:.12g}")
            if hit.name == "switch":
                return hit.y, hit.t, sigma, H.tag, True
            # psi crossing
            if horizon - hit.t < window:
                tail, _ = integrate(H.rhs, hit.y, hit.t, t, rtol=rtol, atol=atol)
                pieces.append((H.tag, tail))
                return tail.y1, t, sigma, H.tag, False
            (log["s1"] if family == 1 else log["s3"]).append(hit.t)
            sigma, w, t0 = -sigma, hit.y, hit.t

    # H2 - H1^sigma = -u1 F1 - sigma psi; guard: the last bang family taking over directly
    z, t_now, sigma, tag, switched = run(
        1, -a0, 0.0, z, lambda s: (lambda tt, w: -u1 * F1(w) - s * psi(w[:n])),
        lambda tt, w: u3 * F1(w) - abs(psi(w[:n])))
    if switched:
        log["tau1"] = t_now
        z, t_now, _, tag, switched = run(
            2, 0, t_now, z, lambda s: (lambda tt, w: u3 * F1(w) - abs(psi(w[:n]))),
            lambda tt, w: u1 * F1(w) - abs(psi(w[:n])))
        if switched:
            log["tau2"] = t_now
            p2 = psi(z[:n])
            a2 = int(np.sign(p2)) if p2 != 0 else 1
            z, t_now, _, tag, switched = run(
                3, -a2, t_now, z, lambda s: (lambda tt, w: -1.0),
                lambda tt, w: abs(psi(w[:n])) - u3 * F1(w))

    state = MaxFlowState(z, t_now, tag, log, pieces)
    if expected is not None and t >= horizon * (1 - 1e-14):
        if log["tau1"] is None or log["tau2"] is None:
            raise StructureMismatch("a switching time was not reached before the horizon")
        if len(log["s1"]) != expected.n1 or len(log["s3"]) != expected.n3:
            raise StructureMismatch(f"crossing counts ({len(log['s1'])}, {len(log['s3'])}) "
                                    f"differ from the reference ({expected.n1}, {expected.n3})")
    return state


# -- switch-time differentials ------------------------------------------------------------

@dataclass
class SwitchDifferentials:
    dtau1: np.ndarray
    dtau2: np.ndarray
    ds1: list
    ds3: list
    method: str

    def rows(self) -> dict:
        out = {"tau1": self.dtau1, "tau2": self.dtau2}
        out.update({f"s1_{i + 1}": r for i, r in enumerate(self.ds1)})
        out.update({f"s3_{i + 1}": r for i, r in enumerate(self.ds3)})
        return out

    def to_dict(self) -> dict:
        return {"method": self.method, **{k: v.tolist() for k, v in self.rows().items()}}


def piecewise_transport(path: ExtremalPath, t_end: float, t_start: float = 0.0,
                        rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL) -> np.ndarray:
    """Linearization of the reference Hamiltonian flow (switching times frozen)."""
    m = 2 * path.n
    Phi = np.eye(m)
    for piece in path.pieces:
        a, b = max(piece.t0, t_start), min(piece.t1, t_end)
        if b <= a:
            continue
        H = piece.hamiltonian
        traj, _ = integrate_variational(H.rhs, lambda s, w, H=H: H.vector_field_jacobian(w),
                                        piece.trajectory(a), a, b, rtol=rtol, atol=atol)
        Phi = split_augmented(traj.y1, m)[1] @ Phi
    return Phi


# Coefficient of the crossing corrections, times sigma_0i (the sign on the sub-arc
# before the i-th crossing).  Central differences of the maximized flow select
# -2; the printed +2 is available for comparison.
CROSSING_COEFFICIENT = -2.0
PRINTED_CROSSING_COEFFICIENT = 2.0


def differentials_formula(path: ExtremalPath, pb: PullbackData,
                          threshold: float = MARGIN_THRESHOLD,
                          crossing_coefficient: float = CROSSING_COEFFICIENT) -> SwitchDifferentials:
    n = path.n
    zs = path.zero_structure
    sch = path.schedule
    H1 = path.last_first_arc_hamiltonian
    H3 = path.first_last_arc_hamiltonian
    H2 = arc_hamiltonian(path.problem, 2, 0, sch.u1, sch.u3)
    z1, z2 = path.ell1, path.ell2
    b12 = poisson_bracket(H1, H2, z1[n:], z1[:n])
    b23 = poisson_bracket(H2, H3, z2[n:], z2[:n])
    if abs(b12) <= threshold or abs(b23) <= threshold:
        raise DegenerateSwitchError(f"switching brackets too small: {b12:.3g}, {b23:.3g}")
    g1, g2, g3 = pb.g

    def psi_row(label):
        return np.concatenate([pb.gradients[label], np.zeros(n)])

    Phi1 = piecewise_transport(path, sch.tau1)
    Phi12 = piecewise_transport(path, sch.tau2, sch.tau1)
    d21 = H2.dz(z1) - H1.dz(z1)
    d32 = H3.dz(z2) - H2.dz(z2)

    ds1 = []
    corr1 = np.zeros(2 * n)
    corr2 = np.zeros(2 * n)
    for i, sigma in enumerate(zs.sigma0[: zs.n1]):
        label = f"s1_{i + 1}"
        grad = pb.gradients[label]
        lg1 = grad @ g1
        if abs(lg1) <= threshold:
            raise DegenerateSwitchError(f"L_g1 psi_hat vanishes at the crossing {label}")
        row = psi_row(label)
        ds1.append(-row / lg1)
        corr1 += crossing_coefficient * sigma * row * (grad @ (g2 - g1)) / lg1
        corr2 += crossing_coefficient * sigma * row * (grad @ (g3 - g2)) / lg1

    dtau1 = (-d21 @ Phi1 + corr1) / b12
    transported = d32 @ (Phi12 @ (H2.vector_field(z1) - H1.vector_field(z1)))
    dtau2 = (-d32 @ (Phi12 @ Phi1) + dtau1 * transported + corr2) / b23

    ds3 = []
    for i in range(zs.n3):
        label = f"s3_{i + 1}"
        grad = pb.gradients[label]
        lg3 = grad @ g3
        if abs(lg3) <= threshold:
            raise DegenerateSwitchError(f"L_g3 psi_hat vanishes at the crossing {label}")
        ds3.append(-(psi_row(label) - dtau1 * (grad @ (g2 - g1))
                     - dtau2 * (grad @ (g3 - g2))) / lg3)
    method = "formula" if crossing_coefficient == CROSSING_COEFFICIENT else \
        f"formula (crossing coefficient {crossing_coefficient:+g})"
    return SwitchDifferentials(dtau1, dtau2, ds1, ds3, method)


def _flow_times(path: ExtremalPath, start, window) -> dict:
    sch = path.schedule
    state = maximized_flow(path.problem, sch.u1, sch.u3, start, sch.T, a0=path.zero_structure.a0,
                           expected=path.zero_structure, endpoint_window=window)
    log = state.crossing_log
    out = {"tau1": log["tau1"], "tau2": log["tau2"]}
    out.update({f"s1_{i + 1}": s for i, s in enumerate(log["s1"])})
    out.update({f"s3_{i + 1}": s for i, s in enumerate(log["s3"])})
    return out


def differentials_fd(path: ExtremalPath, step: float = 1e-5,
                     window: Optional[float] = None) -> SwitchDifferentials:
    """Central differences of the crossing times of the maximized flow."""
    z0 = path.ell0
    window = 1e-3 * path.schedule.T if window is None else window
    cols = []
    for k in range(z0.size):
        h = step * max(1.0, abs(z0[k]))
        e = np.zeros_like(z0)
        e[k] = h
        plus, minus = _flow_times(path, z0 + e, window), _flow_times(path, z0 - e, window)
        cols.append({key: (plus[key] - minus[key]) / (2 * h) for key in plus})
    rows = {key: np.array([c[key] for c in cols]) for key in cols[0]}
    zs = path.zero_structure
    return SwitchDifferentials(rows["tau1"], rows["tau2"],
                               [rows[f"s1_{i + 1}"] for i in range(zs.n1)],
                               [rows[f"s3_{i + 1}"] for i in range(zs.n3)], "finite-difference")


def _deviation(a: SwitchDifferentials, b: SwitchDifferentials) -> dict:
    rows_b = b.rows()
    return {key: float(np.linalg.norm(row - rows_b[key]) / max(np.linalg.norm(rows_b[key]), 1e-300))
            for key, row in a.rows().items()}


@dataclass
class DifferentialsReport:
    formula: SwitchDifferentials
    finite_difference: Optional[SwitchDifferentials]
    relative_deviation: dict
    printed_deviation: dict = field(default_factory=dict)
    fd_step: Optional[float] = None
    fd_error: Optional[str] = None

    @property
    def max_deviation(self) -> float:
        if not self.relative_deviation:
            return float("nan")
        return max(self.relative_deviation.values())

    def to_dict(self) -> dict:
        return {"formula": self.formula.to_dict(),
                "finite_difference": None if self.finite_difference is None
                else self.finite_difference.to_dict(),
                "relative_deviation": self.relative_deviation,
                "max_relative_deviation": self.max_deviation,
                "printed_coefficient_deviation": self.printed_deviation,
                "fd_step": self.fd_step, "fd_error": self.fd_error}


def switch_time_differentials(path: ExtremalPath, pb: PullbackData, step: float = 1e-5,
                              threshold: float = MARGIN_THRESHOLD, shrink: int = 3
                              ) -> DifferentialsReport:
    """Formula and central-difference differentials with their relative deviations.

    Near a degenerate switch a perturbation of size ``step`` can remove the
    crossing altogether; the step is then divided by 10 up to ``shrink``
    times, and if the crossings still cannot be followed the finite-difference
    side is reported as unavailable.  When the first arc has crossings, the
    deviation of the printed crossing coefficient is recorded as well, so any
    disagreement stays visible.
    """
    formula = differentials_formula(path, pb, threshold)
    fd, used, error = None, None, None
    for k in range(shrink + 1):
        h = step * 10.0 ** (-k)
        try:
            fd, used = differentials_fd(path, h), h
            break
        except StructureMismatch as exc:
            error = f"step {h:g}: {exc}"
    if fd is None:
        return DifferentialsReport(formula, None, {}, {}, None, error)
    printed = {}
    if path.zero_structure.n1:
        alt = differentials_formula(path, pb, threshold, PRINTED_CROSSING_COEFFICIENT)
        printed = _deviation(alt, fd)
    return DifferentialsReport(formula, fd, _deviation(formula, fd), printed, used,
                               None if used == step else error)


# -- Clarke invertibility ------------------------------------------------------------------

@dataclass
class ClarkeReport:
    margin: float
    switch1_margin: float
    switch2_margin: float
    argmin: tuple
    grid: list
    curve1: list
    curve2: list
    K: np.ndarray
    threshold: float = MARGIN_THRESHOLD
    sweep: list = field(default_factory=list)

    @property
    def best(self) -> tuple:
        """(margin, c) of the best Hessian parameter, including the configured K."""
        best = (self.margin, None)
        for row in self.sweep:
            if row["margin"] > best[0]:
                best = (row["margin"], row["c"])
        return best

    @property
    def verdict(self) -> str:
        m = self.best[0]
        if m > self.threshold:
            return "pass"
        return "marginal" if m > 0 else "fail"

    def to_dict(self) -> dict:
        return {"margin": self.margin, "switch1_margin": self.switch1_margin,
                "switch2_margin": self.switch2_margin, "argmin": list(self.argmin),
                "best_margin": self.best[0], "best_c": self.best[1],
                "verdict": self.verdict, "grid": self.grid, "switch1_curve": self.curve1,
                "switch2_curve": self.curve2, "K": self.K.tolist(), "sweep": self.sweep}


def _min_singular(A) -> float:
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def clarke_margin_core(base1: np.ndarray, jump1: np.ndarray, base2: np.ndarray,
                       jump2: np.ndarray, grid_points: int = 21):
    """Smallest singular value of base + a jump over a in [0, 1], for both switches.

    Each switch is minimized over the grid and refined by a bounded scalar
    search around the best grid point.  Returns (margin1, a1, curve1, margin2,
    a2, curve2, grid).
    """
    grid = np.linspace(0.0, 1.0, grid_points)
    results = []
    for base, jump in ((base1, jump1), (base2, jump2)):
        curve = [_min_singular(base + a * jump) for a in grid]
        k = int(np.argmin(curve))
        best_a, best = float(grid[k]), float(curve[k])
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
        res = minimize_scalar(lambda a: _min_singular(base + a * jump), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10})
        if res.fun < best:
            best_a, best = float(res.x), float(res.fun)
        results.append((best, best_a, curve))
    (m1, a1, c1), (m2, a2, c2) = results
    return m1, a1, c1, m2, a2, c2, grid.tolist()


def clarke_matrices(g, dtau1: np.ndarray, dtau2: np.ndarray, K: np.ndarray):
    """Switch maps on dx for dl = (dx, K dx): I + a (g1-g2) d1^T and I + (g1-g2) d1^T + a (g2-g3) d2^T."""
    g1, g2, g3 = np.asarray(g, dtype=float)
    n = g1.size
    d1 = dtau1[:n] + K.T @ dtau1[n:]
    d2 = dtau2[:n] + K.T @ dtau2[n:]
    I = np.eye(n)
    c1 = np.outer(g1 - g2, d1)
    return I, c1, I + c1, np.outer(g2 - g3, d2)


DEFAULT_SWEEP = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)


def clarke_invertibility(pb: PullbackData, diffs: SwitchDifferentials, K=None, c: float = 0.0,
                         grid_points: int = 21, sweep=DEFAULT_SWEEP,
                         threshold: float = MARGIN_THRESHOLD) -> ClarkeReport:
    n = pb.g.shape[1]
    K = c * np.eye(n) if K is None else np.asarray(K, dtype=float)
    base1, jump1, base2, jump2 = clarke_matrices(pb.g, diffs.dtau1, diffs.dtau2, K)
    m1, a1, c1, m2, a2, c2, grid = clarke_margin_core(base1, jump1, base2, jump2, grid_points)
    margin = min(m1, m2)
    report = ClarkeReport(margin, m1, m2, (1 if m1 <= m2 else 2, a1 if m1 <= m2 else a2),
                          grid, c1, c2, K, threshold)
    if sweep is not None:
        for cv in sweep:
            mats = clarke_matrices(pb.g, diffs.dtau1, diffs.dtau2, cv * np.eye(n))
            r = clarke_margin_core(*mats, grid_points=grid_points)
            report.sweep.append({"c": float(cv), "margin": float(min(r[0], r[3]))})
    return report
