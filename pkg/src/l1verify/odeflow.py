"""Adaptive integration with dense output, events and variational equations.

The stepper is scipy's DOP853 (explicit Runge-Kutta 8(5,3) with a 7th order
interpolant).  Event handling is done here rather than through
``solve_ivp(events=...)`` so that zeros sitting exactly on the initial point
of an arc are not mistaken for crossings, and so that refinement uses a
bracketing root finder on the dense output with a caller-chosen tolerance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .errors import EventRefinementError, IntegrationError, ResolutionError
from .geometry import VectorField

RTOL = 1e-10
ATOL = 1e-12

_DIRECTIONS = {"any": 0, "up": 1, "down": -1}


@dataclass(frozen=True)
class EventSpec:
    """Zero crossing of ``function(t, y)``.

    ``direction`` is ``"up"`` (negative to positive), ``"down"`` or ``"any"``.
    Crossings closer than ``ignore_window`` to the initial time are not
    reported; ``tolerance`` is the absolute time tolerance of refinement
    (``None`` means 1e-12 times the integration span).
    """

    function: Callable[[float, np.ndarray], float]
    direction: str = "any"
    terminal: bool = False
    tolerance: Optional[float] = None
    name: str = "event"
    ignore_window: float = 0.0

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {sorted(_DIRECTIONS)}")


@dataclass(frozen=True)
class EventHit:
    name: str
    t: float
    y: np.ndarray
    direction: int


class Trajectory:
    """Dense solution on [t0, t1] (or a single point when t0 == t1)."""

    def __init__(self, ts: Sequence[float], ys: Sequence[np.ndarray], solution=None):
        self.grid = np.asarray(ts, dtype=float)
        self.states = np.asarray(ys, dtype=float)
        self._solution = solution

    @property
    def t0(self) -> float:
        return float(self.grid[0])

    @property
    def t1(self) -> float:
        return float(self.grid[-1])

    @property
    def y0(self) -> np.ndarray:
        return self.states[0].copy()

    @property
    def y1(self) -> np.ndarray:
        return self.states[-1].copy()

    def __call__(self, t):
        """Dense evaluation; ``t`` may be scalar or an array."""
        if self._solution is None:
            t_arr = np.asarray(t, dtype=float)
            if t_arr.ndim == 0:
                return self.states[0].copy()
            return np.repeat(self.states[0][:, None], t_arr.size, axis=1)
        return self._solution(t)

    def sample(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """``count`` uniformly spaced samples, endpoints included; rows are points."""
        if count < 2 or self.t1 == self.t0:
            return np.array([self.t0]), self.states[:1].copy()
        ts = np.linspace(self.t0, self.t1, count)
        return ts, np.asarray(self(ts)).T


def as_rhs(field) -> Callable[[float, np.ndarray], np.ndarray]:
    if isinstance(field, VectorField):
        return lambda t, y: field(y)
    return field


def _sign(v: float) -> int:
    return 1 if v > 0 else (-1 if v < 0 else 0)


def integrate(field, x0, t0: float, t1: float, events: Sequence[EventSpec] = (),
              rtol: float = RTOL, atol: float = ATOL,
              max_step: float = np.inf) -> tuple[Trajectory, list[EventHit]]:
    """Integrate ``field`` (a VectorField or ``rhs(t, y)``) from t0 to t1 >= t0.

    Terminal events truncate the trajectory at the first terminal hit.
    Returns the trajectory and the list of hits in time order.
    """
    if t1 < t0:
        raise ValueError("integrate requires t1 >= t0")
    y0 = np.asarray(x0, dtype=float).copy()
    if t1 == t0:
        return Trajectory([t0], [y0]), []

    rhs = as_rhs(field)
    span = t1 - t0
    solver = DOP853(rhs, t0, y0, t1, rtol=rtol, atol=atol, max_step=max_step)
    ts, ys, interpolants = [t0], [y0], []
    hits: list[EventHit] = []

    last_sign = [_sign(ev.function(t0, y0)) for ev in events]
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed at t={solver.t:.6g}: {message}")
        t_old, t_new = solver.t_old, solver.t
        dense = solver.dense_output()

        terminal_hit = None
        for k, ev in enumerate(events):
            found, last_sign[k] = _scan_step(ev, dense, t_old, t_new, last_sign[k], t0, span)
            for hit in found:
                if ev.terminal:
                    if terminal_hit is None or hit.t < terminal_hit.t:
                        terminal_hit = hit
                    break
                hits.append(hit)
        if terminal_hit is not None:
            hits = [h for h in hits if h.t <= terminal_hit.t]
            hits.append(terminal_hit)
            ts.append(terminal_hit.t)
            ys.append(terminal_hit.y)
            interpolants.append(dense)
            break
        ts.append(t_new)
        ys.append(solver.y.copy())
        interpolants.append(dense)

    hits.sort(key=lambda h: h.t)
    solution = OdeSolution(ts, interpolants) if len(ts) > 1 else None
    return Trajectory(ts, ys, solution), hits


def _scan_step(ev: EventSpec, dense, ta: float, tb: float, last_sign: int,
               t0: float, span: float, subdivisions: int = 4):
    """Find the crossings of ``ev`` inside one step, earliest first."""
    want = _DIRECTIONS[ev.direction]
    tol = ev.tolerance if ev.tolerance is not None else 1e-12 * span
    nodes = np.linspace(ta, tb, subdivisions + 1)
    g = lambda t: float(ev.function(t, dense(t)))
    hits = []
    t_prev = ta
    for t_node in nodes[1:]:
        value = g(t_node)
        s = _sign(value)
        if s != 0 and last_sign != 0 and s != last_sign:
            direction = s
            if want == 0 or want == direction:
                try:
                    t_hit = brentq(g, t_prev, t_node, xtol=tol, rtol=4 * np.finfo(float).eps,
                                   maxiter=500)
                except (ValueError, RuntimeError) as exc:
                    raise EventRefinementError(f"event {ev.name!r}: {exc}") from exc
                if t_hit - t0 >= ev.ignore_window:
                    hits.append(EventHit(ev.name, t_hit, dense(t_hit), direction))
        if s != 0:
            last_sign = s
        t_prev = t_node
    return hits, last_sign


# -- variational equations -----------------------------------------------------

@dataclass(frozen=True)
class FlowLinearization:
    matrix: np.ndarray
    basepoint: np.ndarray
    t0: float
    t1: float
    endpoint: np.ndarray


def variational_rhs(rhs, jac):
    """Right-hand side of the augmented system (y, vec(M)) with M' = Df(y) M."""
    def aug(t, w):
        n = int(round((-1 + np.sqrt(1 + 4 * w.size)) / 2))
        y, M = w[:n], w[n:].reshape(n, n)
        return np.concatenate([rhs(t, y), (jac(t, y) @ M).ravel()])
    return aug


def integrate_variational(rhs, jac, y0, t0: float, t1: float, events: Sequence[EventSpec] = (),
                          M0=None, rtol: float = RTOL, atol: float = ATOL):
    """Integrate a trajectory together with its flow linearization.

    ``rhs(t, y)`` and ``jac(t, y)`` describe the field; event functions see the
    augmented vector but should only read its first ``n`` entries.
    """
    y0 = np.asarray(y0, dtype=float)
    n = y0.size
    M0 = np.eye(n) if M0 is None else np.asarray(M0, dtype=float)
    w0 = np.concatenate([y0, M0.ravel()])
    return integrate(variational_rhs(rhs, jac), w0, t0, t1, events, rtol=rtol, atol=atol)


def split_augmented(w: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return w[:n], w[n:].reshape(n, n)


def variational_flow(field: VectorField, x0, t0: float, t1: float,
                     rtol: float = RTOL, atol: float = ATOL) -> FlowLinearization:
    """M(t1) for M' = Df(x(t)) M, M(t0) = I."""
    x0 = np.asarray(x0, dtype=float)
    traj, _ = integrate_variational(lambda t, y: field(y), lambda t, y: field.jac(y),
                                    x0, t0, t1, rtol=rtol, atol=atol)
    y, M = split_augmented(traj.y1, x0.size)
    return FlowLinearization(M, x0.copy(), t0, t1, y)


# -- zero location ---------------------------------------------------------------

@dataclass
class ZeroSearch:
    interior: list = field(default_factory=list)
    endpoint: list = field(default_factory=list)


def locate_zeros(traj: Trajectory, scalar: Callable[[float, np.ndarray], float],
                 exclusion_window: Optional[float] = None, subdivisions: int = 16,
                 zero_tol: float = 1e-10, xtol: Optional[float] = None) -> ZeroSearch:
    """Sign-change roots of ``scalar(t, traj(t))``.

    Roots (or values with |scalar| <= zero_tol) within ``exclusion_window`` of
    either end are reported as endpoint zeros; the rest are refined and
    returned as interior zeros in increasing order.
    """
    out = ZeroSearch()
    t0, t1 = traj.t0, traj.t1
    span = t1 - t0
    if span <= 0:
        return out
    window = 1e-8 * span if exclusion_window is None else exclusion_window
    xtol = 1e-12 * span if xtol is None else xtol
    g = lambda t: float(scalar(t, traj(t)))

    for t_end in (t0, t1):
        if abs(g(t_end)) <= zero_tol:
            out.endpoint.append(t_end)

    grid = traj.grid
    fine = [np.linspace(a, b, subdivisions + 1)[:-1] for a, b in zip(grid[:-1], grid[1:])]
    samples = np.concatenate(fine + [np.array([t1])])
    values = np.array([g(t) for t in samples])
    signs = np.sign(values)

    roots = []
    for i in range(len(samples) - 1):
        if signs[i] == 0:
            continue
        j = i + 1
        if signs[j] == 0 or signs[j] == signs[i]:
            # exact zeros at a sample are bracketed with the next nonzero sample
            if signs[j] == 0:
                k = j
                while k < len(samples) and signs[k] == 0:
                    k += 1
                if k < len(samples) and signs[k] != signs[i]:
                    roots.append(float(samples[j]))
            continue
        a, b = samples[i], samples[j]
        root = brentq(g, a, b, xtol=xtol, maxiter=500)
        # an odd number >= 3 of roots in [a, b] shows up as a sign flip on a half-bracket
        left, right = g(0.5 * (a + root)), g(0.5 * (root + b))
        if (root - a > 2 * xtol and np.sign(left) == -signs[i]) or \
                (b - root > 2 * xtol and np.sign(right) == signs[i]):
            raise ResolutionError(f"several roots of the scalar near t={root:.6g}; "
                                  "tighten the integration tolerances")
        roots.append(float(root))

    for r in roots:
        if r - t0 < window or t1 - r < window:
            if not any(abs(r - e) < window for e in out.endpoint):
                out.endpoint.append(r)
        else:
            out.interior.append(r)
    out.endpoint.sort()
    return out


# -- export ----------------------------------------------------------------------

def write_trajectory_csv(stream, traj: Trajectory, n: int, samples: int = 201,
                         with_costate: bool = False, digits: int = 12) -> None:
    """Header ``t, x1..xn[, p1..pn]``; one row per uniform dense sample."""
    names = ["t"] + [f"x{i + 1}" for i in range(n)]
    if with_costate:
        names += [f"p{i + 1}" for i in range(n)]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(names)
    ts, pts = traj.sample(samples)
    width = len(names) - 1
    for t, y in zip(ts, pts):
        writer.writerow([f"{t:.{digits}g}"] + [f"{v:.{digits}g}" for v in y[:width]])
