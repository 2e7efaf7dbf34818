"""Pull-back fields, pulled-back cost and the integrals of the second variation.

The reference flow S_t follows h1 on [0, tau1], f0 on [tau1, tau2] and h3 on
[tau2, T] with the switching times frozen.  With M_y(t) its linearization at
y, the pull-back of the arc field h_i is

    g_i(y) = M_y(t)^-1 h_i(S_t(y)),   t in the i-th arc,

independent of t.  Everything downstream is evaluated at x0.  Derivatives in
y are central differences over a fixed set of perturbed flows, each carried
with its variational matrix and kept as a dense solution over [0, T], so the
same flows serve the bracket computations and the Hessian of psi o S_t at any
time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad_vec

from .errors import IncompletePullbackError, NumericalError
from .extremal import ExtremalPath, ReferenceSchedule, ZeroStructure
from .geometry import ProblemDefinition
from .odeflow import integrate_variational, split_augmented

FLOW_RTOL = 1e-12
FLOW_ATOL = 1e-14
FD_STEP = 1e-5
PAIRS = ((1, 2), (1, 3), (2, 3))


class ReferenceFlow:
    """Frozen-switching reference flow from an initial point y, with M_y(t)."""

    def __init__(self, problem: ProblemDefinition, schedule: ReferenceSchedule, y=None,
                 rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL):
        self.problem = problem
        self.schedule = schedule
        self.fields = (problem.arc_field(schedule.u1), problem.f0, problem.arc_field(schedule.u3))
        self.breaks = (0.0, schedule.tau1, schedule.tau2, schedule.T)
        self.y0 = np.asarray(schedule.x0 if y is None else y, dtype=float)
        n = problem.n
        self._pieces = []
        x, M = self.y0, np.eye(n)
        for k, f in enumerate(self.fields):
            traj, _ = integrate_variational(lambda t, z, f=f: f(z), lambda t, z, f=f: f.jac(z),
                                            x, self.breaks[k], self.breaks[k + 1], M0=M,
                                            rtol=rtol, atol=atol)
            self._pieces.append(traj)
            x, M = split_augmented(traj.y1, n)

    def arc_of(self, t: float) -> int:
        if t <= self.breaks[1]:
            return 1
        if t <= self.breaks[2]:
            return 2
        return 3

    def __call__(self, t: float, arc: Optional[int] = None):
        """(S_t(y), M_y(t)); ``arc`` chooses the piece at a switching time."""
        arc = self.arc_of(t) if arc is None else arc
        w = np.asarray(self._pieces[arc - 1](t), dtype=float)
        return split_augmented(w, self.problem.n)

    def pullback(self, i: int, t: Optional[float] = None) -> np.ndarray:
        t = self.breaks[i - 1] if t is None else t
        x, M = self(t, arc=i)
        if np.linalg.cond(M) > 1e12:
            raise NumericalError(f"flow linearization is ill-conditioned at t={t:.6g}")
        return np.linalg.solve(M, self.fields[i - 1](x))

    def cost_gradient(self, t: float) -> np.ndarray:
        """Gradient of psi o S_t at y: M^T dpsi(S_t y)."""
        x, M = self(t)
        return M.T @ self.problem.psi.grad(x)

    def costate_pullback(self, ell_T) -> np.ndarray:
        """-ell_T M_y(T): the differential of the canonical beta o S_T."""
        _, M = self(self.schedule.T)
        return -np.asarray(ell_T) @ M


class PerturbedFlows:
    """Reference flows from x0 +- h e_k, for central differences in the initial point."""

    def __init__(self, problem: ProblemDefinition, schedule: ReferenceSchedule,
                 step: float = FD_STEP, rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL):
        x0 = schedule.x0
        self.h = step * np.maximum(1.0, np.abs(x0))
        self.plus, self.minus = [], []
        for k in range(problem.n):
            e = np.zeros_like(x0)
            e[k] = self.h[k]
            self.plus.append(ReferenceFlow(problem, schedule, x0 + e, rtol, atol))
            self.minus.append(ReferenceFlow(problem, schedule, x0 - e, rtol, atol))

    def derivative(self, functional) -> np.ndarray:
        """Jacobian of ``functional(flow) -> array``; column k is the x_k derivative."""
        cols = [(np.asarray(functional(p)) - np.asarray(functional(m))) / (2 * h)
                for p, m, h in zip(self.plus, self.minus, self.h)]
        return np.stack(cols, axis=-1)


class Differentiator:
    """Central differences at step h, optionally Richardson-combined with h/2."""

    def __init__(self, problem, schedule, step: float = FD_STEP, richardson: bool = True,
                 rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL):
        self.step = step
        self.richardson = richardson
        self.coarse = PerturbedFlows(problem, schedule, step, rtol, atol)
        self.fine = PerturbedFlows(problem, schedule, step / 2, rtol, atol) if richardson else None

    def __call__(self, functional) -> np.ndarray:
        d = self.coarse.derivative(functional)
        if self.fine is None:
            return d
        return (4.0 * self.fine.derivative(functional) - d) / 3.0


def pullback_field(problem: ProblemDefinition, schedule: ReferenceSchedule, i: int, t: float,
                   flow: Optional[ReferenceFlow] = None) -> np.ndarray:
    """g_i(x0) evaluated through the flow at time t of the i-th arc."""
    flow = flow or ReferenceFlow(problem, schedule)
    lo, hi = flow.breaks[i - 1], flow.breaks[i]
    if not (lo <= t <= hi):
        raise ValueError(f"t={t!r} is outside arc {i} = [{lo!r}, {hi!r}]")
    return flow.pullback(i, t)


def pullback_independence_check(problem: ProblemDefinition, schedule: ReferenceSchedule, i: int,
                                times=None, flow: Optional[ReferenceFlow] = None) -> float:
    """Relative spread of g_i(x0) computed at two interior times of arc i."""
    flow = flow or ReferenceFlow(problem, schedule)
    lo, hi = flow.breaks[i - 1], flow.breaks[i]
    if times is None:
        times = (lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo))
    a, b = (flow.pullback(i, t) for t in times)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))


@dataclass
class PullbackData:
    g: np.ndarray                       # rows g1, g2, g3 at x0
    jacobians: np.ndarray               # Dg_i(x0), shape (3, n, n)
    brackets: dict                      # (i, j) -> [g_i, g_j](x0)
    dbeta: np.ndarray                   # differential of beta o S_T at x0
    lie_table: dict                     # label -> (L_g1, L_g2, L_g3) psi_hat at that time
    times: dict                         # label -> time
    gradient_integral: np.ndarray       # int_I3 sign * grad psi_hat_t dt
    hessian_integral: np.ndarray        # int_I3 sign * Hess psi_hat_t dt
    quadrature_error: float
    step: float
    richardson: bool
    zero_structure: ZeroStructure
    gradients: dict = field(default_factory=dict)   # label -> grad psi_hat_s(x0)
    _flow: Optional[ReferenceFlow] = field(default=None, repr=False)
    _diff: Optional[Differentiator] = field(default=None, repr=False)

    def lie(self, label: str, v) -> float:
        """L_v psi_hat_s(x0) at the tabulated time ``label`` for a constant combination v."""
        if label not in self.times:
            raise IncompletePullbackError(f"no table entry for {label!r}")
        return float(self.gradients[label] @ np.asarray(v))

    def bracket(self, i: int, j: int) -> np.ndarray:
        if i == j:
            return np.zeros_like(self.g[0])
        if (i, j) in self.brackets:
            return self.brackets[(i, j)]
        return -self.brackets[(j, i)]

    def combination(self, coeffs) -> tuple[np.ndarray, np.ndarray]:
        """Value and Jacobian at x0 of sum_i coeffs_i g_i."""
        c = np.asarray(coeffs, dtype=float)
        return c @ self.g, np.einsum("i,ijk->jk", c, self.jacobians)

    def quadratic_integral_matrix(self) -> np.ndarray:
        """Q[a, b] with int_I3 L^2_v |psi_hat_t| dt = sum_ab e_a e_b Q[a, b], v = sum e_a g_a."""
        Q = np.empty((3, 3))
        for a in range(3):
            for b in range(3):
                Q[a, b] = (self.g[a] @ self.hessian_integral @ self.g[b]
                           + self.gradient_integral @ (self.jacobians[b] @ self.g[a]))
        return Q

    def second_lie_integral(self, coeffs) -> float:
        """int_I3 L^2_v |psi_hat_t| dt for v = sum coeffs_i g_i."""
        v, Dv = self.combination(coeffs)
        return float(v @ self.hessian_integral @ v + self.gradient_integral @ (Dv @ v))

    def bracket_integral(self, i: int, j: int) -> float:
        """int_I3 L_[g_i, g_j] |psi_hat_t| dt."""
        return float(self.gradient_integral @ self.bracket(i, j))

    def second_lie(self, t: float, coeffs) -> float:
        """L^2_v psi_hat_t(x0) for v = sum coeffs_i g_i."""
        if self._flow is None or self._diff is None:
            raise IncompletePullbackError("flows were not retained")
        v, Dv = self.combination(coeffs)
        G = self._flow.cost_gradient(t)
        H = self._diff(lambda f: f.cost_gradient(t))
        return float(v @ (0.5 * (H + H.T)) @ v + G @ (Dv @ v))

    def to_dict(self) -> dict:
        return {"g": self.g.tolist(),
                "brackets": {f"{i}{j}": b.tolist() for (i, j), b in self.brackets.items()},
                "dbeta": self.dbeta.tolist(),
                "lie_table": {k: list(map(float, v)) for k, v in self.lie_table.items()},
                "times": {k: float(v) for k, v in self.times.items()},
                "second_lie_integral_matrix": self.quadratic_integral_matrix().tolist(),
                "bracket_integrals": {f"{i}{j}": self.bracket_integral(i, j) for i, j in PAIRS},
                "quadrature_error": self.quadrature_error, "fd_step": self.step,
                "richardson": self.richardson}


def _signed_subintervals(schedule: ReferenceSchedule, zs: ZeroStructure):
    edges = [schedule.tau2, *zs.s3, schedule.T]
    return [(edges[i], edges[i + 1], zs.a2 * (-1) ** i) for i in range(len(edges) - 1)]


def pulled_cost_lie_table(flow: ReferenceFlow, g: np.ndarray, zs: ZeroStructure):
    """Gradients of psi_hat_s at x0 and the table of L_{g_i} psi_hat_s(x0).

    Labels: ``tau1``, ``tau2``, ``T``, ``s1_<i>``, ``s3_<i>`` (1-based).
    """
    sch = flow.schedule
    times = {"0": 0.0, "tau1": sch.tau1, "tau2": sch.tau2, "T": sch.T}
    times.update({f"s1_{i + 1}": s for i, s in enumerate(zs.s1)})
    times.update({f"s3_{i + 1}": s for i, s in enumerate(zs.s3)})
    grads = {k: flow.cost_gradient(t) for k, t in times.items()}
    table = {k: g @ grads[k] for k in times}
    return times, grads, table


def second_variation_integrals(flow: ReferenceFlow, diff: Differentiator, zs: ZeroStructure,
                               epsrel: float = 1e-9):
    """Sign-resolved integrals of grad psi_hat_t and Hess psi_hat_t over the last arc."""
    n = flow.problem.n

    def integrand(t):
        G = flow.cost_gradient(t)
        H = diff(lambda f: f.cost_gradient(t))
        return np.concatenate([G, (0.5 * (H + H.T)).ravel()])

    total = np.zeros(n + n * n)
    err = 0.0
    for a, b, sign in _signed_subintervals(flow.schedule, zs):
        if b <= a:
            continue
        value, e = quad_vec(integrand, a, b, epsrel=epsrel, epsabs=1e-13)
        total += sign * value
        err += e
    return total[:n], total[n:].reshape(n, n), err


def compute_pullback(problem: ProblemDefinition, path: ExtremalPath, step: float = FD_STEP,
                     richardson: bool = True, rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL,
                     epsrel: float = 1e-9) -> PullbackData:
    schedule = path.schedule
    zs = path.zero_structure
    flow = ReferenceFlow(problem, schedule, rtol=rtol, atol=atol)
    diff = Differentiator(problem, schedule, step, richardson, rtol, atol)

    g = np.array([flow.pullback(i) for i in (1, 2, 3)])
    jac = np.array([diff(lambda f, i=i: f.pullback(i)) for i in (1, 2, 3)])
    brackets = {(i, j): jac[j - 1] @ g[i - 1] - jac[i - 1] @ g[j - 1] for i, j in PAIRS}
    dbeta = flow.costate_pullback(path.ellT[problem.n:])
    times, grads, table = pulled_cost_lie_table(flow, g, zs)
    G_int, H_int, err = second_variation_integrals(flow, diff, zs, epsrel)
    return PullbackData(g, jac, brackets, dbeta, table, times, G_int, H_int, err, step,
                        richardson, zs, grads, flow, diff)
