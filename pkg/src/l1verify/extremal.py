"""Reference bang-zero-bang extremal: integration, first-order checks, shooting.

The cost term -|u psi| makes the reference Hamiltonian piecewise constant in
time: on a bang arc with control u_j it is <p, f0 + u_j f1> + sigma psi with
sigma = -sgn(psi(x)), and sigma flips each time psi changes sign along the
arc.  On the zero arc it is <p, f0>.  The costate therefore solves

    p' = -p Dh_j(x) - sigma dpsi(x)

piece by piece; psi-crossings on the bang arcs are detected on the fly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (NTViolation, SSViolation, ScheduleError, ShootingError,
                     StructureViolation, VerificationError)
from .geometry import AffineHamiltonian, ProblemDefinition, poisson_bracket
from .odeflow import ATOL, RTOL, EventSpec, Trajectory, integrate, locate_zeros

MARGIN_THRESHOLD = 1e-7
PSI_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class ReferenceSchedule:
    T: float
    tau1: float
    tau2: float
    u1: int
    u3: int
    x0: np.ndarray
    xf: np.ndarray
    lambda0: np.ndarray

    def __post_init__(self):
        if not (0.0 < self.tau1 < self.tau2 < self.T):
            raise ScheduleError(f"need 0 < tau1 < tau2 < T, got tau1={self.tau1!r}, "
                                f"tau2={self.tau2!r}, T={self.T!r}")
        if self.u1 not in (-1, 1) or self.u3 not in (-1, 1):
            raise ScheduleError("bang values must be -1 or +1")
        for name in ("x0", "xf", "lambda0"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ScheduleError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    def with_(self, **changes) -> "ReferenceSchedule":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ReferenceSchedule(**data)

    def to_dict(self) -> dict:
        return {"T": self.T, "tau1": self.tau1, "tau2": self.tau2, "u1": self.u1, "u3": self.u3,
                "x0": self.x0.tolist(), "xf": self.xf.tolist(), "lambda0": self.lambda0.tolist()}


@dataclass(frozen=True)
class ZeroStructure:
    s1: tuple
    s3: tuple
    a0: int
    a2: int

    @property
    def n1(self) -> int:
        return len(self.s1)

    @property
    def n3(self) -> int:
        return len(self.s3)

    @property
    def sigma0(self) -> list[int]:
        """Active cost signs on the n1 + 1 sub-arcs of the first bang arc."""
        return [self.a0 * (-1) ** i for i in range(1, self.n1 + 2)]

    @property
    def sigma2(self) -> list[int]:
        return [self.a2 * (-1) ** i for i in range(1, self.n3 + 2)]

    def to_dict(self) -> dict:
        return {"s1": list(self.s1), "s3": list(self.s3), "a0": self.a0, "a2": self.a2,
                "n1": self.n1, "n3": self.n3, "sigma0": self.sigma0, "sigma2": self.sigma2}


def arc_hamiltonian(problem: ProblemDefinition, family: int, sigma: int, u1: int, u3: int
                    ) -> AffineHamiltonian:
    """H1^sigma, H2 or H3^sigma."""
    if family == 2:
        return AffineHamiltonian(problem.f0, 0.0, problem.psi, tag="H2")
    u = u1 if family == 1 else u3
    return AffineHamiltonian(problem.arc_field(u), float(sigma), problem.psi,
                             tag=f"H{family}{'+' if sigma > 0 else '-'}")


@dataclass
class ArcPiece:
    family: int
    sigma: int
    hamiltonian: AffineHamiltonian
    trajectory: Trajectory

    @property
    def t0(self) -> float:
        return self.trajectory.t0

    @property
    def t1(self) -> float:
        return self.trajectory.t1

    @property
    def tag(self) -> str:
        return self.hamiltonian.tag


@dataclass
class ExtremalPath:
    problem: ProblemDefinition
    schedule: ReferenceSchedule
    pieces: list
    zero_structure: ZeroStructure
    endpoint_zeros: list = field(default_factory=list)
    zero_arc_zeros: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.problem.n

    def piece_at(self, t: float, side: str = "left") -> ArcPiece:
        """The piece active at t; at a boundary ``side`` picks the earlier or later one."""
        pieces = self.pieces
        if side == "left":
            for piece in pieces:
                if t <= piece.t1:
                    return piece
            return pieces[-1]
        for piece in reversed(pieces):
            if t >= piece.t0:
                return piece
        return pieces[0]

    def __call__(self, t: float, side: str = "left") -> np.ndarray:
        return np.asarray(self.piece_at(t, side).trajectory(t), dtype=float)

    def state(self, t: float) -> np.ndarray:
        return self(t)[: self.n]

    def costate(self, t: float) -> np.ndarray:
        return self(t)[self.n:]

    @property
    def ell0(self) -> np.ndarray:
        return self.pieces[0].trajectory.y0

    @property
    def ell1(self) -> np.ndarray:
        return self(self.schedule.tau1, "left")

    @property
    def ell2(self) -> np.ndarray:
        return self(self.schedule.tau2, "right")

    @property
    def ellT(self) -> np.ndarray:
        return self.pieces[-1].trajectory.y1

    def family_pieces(self, family: int) -> list:
        return [p for p in self.pieces if p.family == family]

    @property
    def last_first_arc_hamiltonian(self) -> AffineHamiltonian:
        return self.family_pieces(1)[-1].hamiltonian

    @property
    def first_last_arc_hamiltonian(self) -> AffineHamiltonian:
        return self.family_pieces(3)[0].hamiltonian

    def hamiltonian_drift(self, samples: int = 50) -> float:
        """Largest relative variation of each piece's own Hamiltonian along it."""
        worst = 0.0
        for piece in self.pieces:
            ts, zs = piece.trajectory.sample(samples)
            values = np.array([piece.hamiltonian.value_z(z) for z in zs])
            scale = max(1.0, float(np.max(np.abs(values))))
            worst = max(worst, float(np.ptp(values)) / scale)
        return worst

    def write_csv(self, stream, samples_per_piece: int = 50, digits: int = 12,
                  tag_column: str = "active_hamiltonian_tag") -> None:
        """Columns ``t, x1..xn, p1..pn`` and the active Hamiltonian tag."""
        n = self.n
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
                        + [tag_column])
        for piece in self.pieces:
            count = max(2, int(math.ceil(samples_per_piece * (piece.t1 - piece.t0)
                                         / self.schedule.T)) + 1)
            ts, zs = piece.trajectory.sample(count)
            for t, z in zip(ts, zs):
                writer.writerow([f"{t:.{digits}g}"] + [f"{v:.{digits}g}" for v in z] + [piece.tag])


def _psi_event(problem, window, tol):
    n = problem.n
    return EventSpec(lambda t, z: problem.psi(z[:n]), "any", terminal=True, tolerance=tol,
                     name="psi", ignore_window=window)


def integrate_reference_extremal(problem: ProblemDefinition, schedule: ReferenceSchedule,
                                 rtol: float = RTOL, atol: float = ATOL,
                                 exclusion_window: Optional[float] = None,
                                 nt_threshold: float = MARGIN_THRESHOLD,
                                 strict: bool = True) -> ExtremalPath:
    """State and costate along the reference schedule.

    With ``strict`` the call raises NTViolation for tangential crossings and
    SSViolation when psi vanishes at a switching time; shooting uses
    ``strict=False`` while iterates are still far from an extremal.
    """
    n = problem.n
    T, tau1, tau2 = schedule.T, schedule.tau1, schedule.tau2
    window = 1e-8 * T if exclusion_window is None else exclusion_window
    event_tol = 1e-12 * T
    psi = problem.psi
    x0 = schedule.x0
    if x0.size != n or schedule.lambda0.size != n or schedule.xf.size != n:
        raise ScheduleError(f"x0, xf and lambda0 must have length n={n}")

    h1 = problem.arc_field(schedule.u1)
    h3 = problem.arc_field(schedule.u3)

    psi0 = psi(x0)
    if abs(psi0) > PSI_ZERO_TOL:
        a0 = int(np.sign(psi0))
    else:
        rate = float(psi.grad(x0) @ h1(x0))
        if abs(rate) < nt_threshold and strict:
            raise NTViolation(f"h1 is tangent to {{psi=0}} at the initial point (rate {rate:.3g})")
        a0 = 1 if rate >= 0 else -1

    pieces: list[ArcPiece] = []
    s1: list[float] = []
    s3: list[float] = []
    endpoint_zeros: list[float] = []
    if abs(psi0) <= PSI_ZERO_TOL:
        endpoint_zeros.append(0.0)

    def run_bang(family, field_, sigma, t_start, t_end, z, crossings):
        while True:
            H = arc_hamiltonian(problem, family, sigma, schedule.u1, schedule.u3)
            traj, hits = integrate(H.rhs, z, t_start, t_end, [_psi_event(problem, window, event_tol)],
                                   rtol=rtol, atol=atol)
            pieces.append(ArcPiece(family, sigma, H, traj))
            if not hits:
                return traj.y1, sigma
            hit = hits[-1]
            if t_end - hit.t < window:
                if family == 1 and strict:
                    raise SSViolation(f"psi vanishes within {window:.3g} of tau1 (t={hit.t:.12g})")
                if family == 3:
                    endpoint_zeros.append(hit.t)
                # a zero this close to the arc end is a label, not a switch of sigma
                tail, _ = integrate(H.rhs, hit.y, hit.t, t_end, rtol=rtol, atol=atol)
                pieces.append(ArcPiece(family, sigma, H, tail))
                return tail.y1, sigma
            rate = float(psi.grad(hit.y[:n]) @ field_(hit.y[:n]))
            if abs(rate) < nt_threshold and strict:
                raise NTViolation(f"tangential crossing of {{psi=0}} at t={hit.t:.12g} "
                                  f"(|L_h psi| = {abs(rate):.3g})")
            crossings.append(hit.t)
            sigma = -sigma
            z, t_start = hit.y, hit.t

    z = np.concatenate([x0, schedule.lambda0])
    z, sigma_last = run_bang(1, h1, -a0, 0.0, tau1, z, s1)

    H2 = arc_hamiltonian(problem, 2, 0, schedule.u1, schedule.u3)
    traj2, _ = integrate(H2.rhs, z, tau1, tau2, rtol=rtol, atol=atol)
    pieces.append(ArcPiece(2, 0, H2, traj2))
    z = traj2.y1

    psi_tau2 = psi(z[:n])
    if abs(psi_tau2) <= PSI_ZERO_TOL:
        if strict:
            raise SSViolation(f"psi vanishes at tau2 (psi = {psi_tau2:.3g})")
        a2 = 1
    else:
        a2 = int(np.sign(psi_tau2))
    z, _ = run_bang(3, h3, -a2, tau2, T, z, s3)

    if abs(psi(z[:n])) <= PSI_ZERO_TOL and not any(abs(T - e) < window for e in endpoint_zeros):
        endpoint_zeros.append(T)

    zeros2 = locate_zeros(traj2, lambda t, w: psi(w[:n]), exclusion_window=window)
    zs = ZeroStructure(tuple(s1), tuple(s3), a0, a2)
    return ExtremalPath(problem, schedule, pieces, zs, sorted(endpoint_zeros),
                        list(zeros2.interior))


# -- assumption reports ----------------------------------------------------------

@dataclass
class AssumptionReport:
    id: str
    verdict: str
    margin: float
    witness: Optional[float] = None
    threshold: float = MARGIN_THRESHOLD
    details: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        finite = bool(np.isfinite(self.margin))
        return {"id": self.id, "verdict": self.verdict,
                "margin": float(self.margin) if finite else None,
                "margin_infinite": not finite,
                "witness": self.witness, "threshold": self.threshold,
                "details": _jsonable(self.details), "warnings": list(self.warnings)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def verdict_for(margin: float, threshold: float) -> str:
    if not np.isfinite(margin):
        return "pass" if margin > 0 else "fail"
    if margin > threshold:
        return "pass"
    if margin > 0:
        return "marginal"
    return "fail"


def _scale(v) -> float:
    return max(1.0, float(np.max(np.abs(v))))


def check_boundary(path: ExtremalPath, schedule: Optional[ReferenceSchedule] = None,
                   tol: Optional[float] = None) -> AssumptionReport:
    """Terminal state against x_f; pass iff the mismatch is within ``tol``."""
    schedule = schedule or path.schedule
    tol = 1e-8 * _scale(schedule.xf) if tol is None else tol
    xT = path.ellT[: path.n]
    mismatch = float(np.linalg.norm(xT - schedule.xf))
    margin = tol - mismatch
    verdict = "pass" if margin > 0 else "fail"
    return AssumptionReport("PMP-boundary", verdict, margin, schedule.T, threshold=0.0,
                            details={"terminal_state": xT, "target": schedule.xf,
                                     "mismatch": mismatch, "tolerance": tol})


def check_nontangency(path: ExtremalPath, threshold: float = MARGIN_THRESHOLD) -> AssumptionReport:
    problem, sch = path.problem, path.schedule
    n = path.n
    h1, h3 = problem.arc_field(sch.u1), problem.arc_field(sch.u3)
    rates = []
    for t in path.zero_structure.s1:
        rates.append((t, abs(problem.psi.grad(path.state(t)) @ h1(path.state(t)))))
    for t in path.zero_structure.s3:
        rates.append((t, abs(problem.psi.grad(path.state(t)) @ h3(path.state(t)))))
    for t in path.endpoint_zeros:
        field_ = h1 if t < 0.5 * sch.T else h3
        x = path(t)[:n]
        rates.append((t, abs(problem.psi.grad(x) @ field_(x))))
    warnings = []
    zero_arc = []
    for t in path.zero_arc_zeros:
        x = path.state(t)
        r = abs(problem.psi.grad(x) @ problem.f0(x))
        zero_arc.append({"t": t, "rate": r})
        if r <= threshold:
            warnings.append(f"f0 nearly tangent to {{psi=0}} on the zero arc at t={t:.9g}")
    if rates:
        witness, margin = min(rates, key=lambda item: item[1])
    else:
        witness, margin = None, math.inf
    return AssumptionReport("NT", verdict_for(margin, threshold), float(margin), witness, threshold,
                            details={"bang_arc_rates": [{"t": t, "rate": r} for t, r in rates],
                                     "zero_arc_zeros": zero_arc},
                            warnings=warnings)


def check_switch_nonvanishing(path: ExtremalPath, threshold: float = MARGIN_THRESHOLD
                              ) -> AssumptionReport:
    sch = path.schedule
    v1 = abs(path.problem.psi(path.state(sch.tau1)))
    v2 = abs(path.problem.psi(path.state(sch.tau2)))
    margin, witness = (v1, sch.tau1) if v1 <= v2 else (v2, sch.tau2)
    return AssumptionReport("SS", verdict_for(margin, threshold), margin, witness, threshold,
                            details={"abs_psi_tau1": v1, "abs_psi_tau2": v2})


def switching_margin(path: ExtremalPath, t: float, family: int) -> float:
    """Slack of the strict maximality inequality of arc ``family`` at time t."""
    n = path.n
    z = path(t, "left" if family == 1 else "right")
    x, p = z[:n], z[n:]
    F1 = float(p @ path.problem.f1(x))
    apsi = abs(path.problem.psi(x))
    if family == 1:
        return path.schedule.u1 * F1 - apsi
    if family == 2:
        return apsi - abs(F1)
    return path.schedule.u3 * F1 - apsi


def check_strict_maximality(path: ExtremalPath, threshold: float = MARGIN_THRESHOLD,
                            radius: Optional[float] = None, samples: int = 401
                            ) -> AssumptionReport:
    sch = path.schedule
    r = 1e-4 * sch.T if radius is None else radius
    arcs = {1: (0.0, sch.tau1 - r), 2: (sch.tau1 + r, sch.tau2 - r), 3: (sch.tau2 + r, sch.T)}
    best = (math.inf, None, None)
    per_arc = {}
    weak_min = math.inf
    for family, (a, b) in arcs.items():
        if b <= a:
            continue
        ts = np.linspace(a, b, samples)
        ms = np.array([switching_margin(path, t, family) for t in ts])
        k = int(np.argmin(ms))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, samples - 1)]
        t_min, m_min = float(ts[k]), float(ms[k])
        if hi > lo:
            res = minimize_scalar(lambda t: switching_margin(path, t, family), bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-12 * sch.T})
            if res.fun < m_min:
                t_min, m_min = float(res.x), float(res.fun)
        per_arc[family] = {"min": m_min, "argmin": t_min}
        weak_min = min(weak_min, float(ms.min()))
        if m_min < best[0]:
            best = (m_min, t_min, family)

    # linear approach to zero at the switches: m ~ rate * distance + offset
    rates = {}
    for label, t_sw, family, sgn in (("tau1-", sch.tau1, 1, -1), ("tau1+", sch.tau1, 2, 1),
                                     ("tau2-", sch.tau2, 2, -1), ("tau2+", sch.tau2, 3, 1)):
        d = r * np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        m = np.array([switching_margin(path, t_sw + sgn * di, family) for di in d])
        slope, offset = np.polyfit(d, m, 1)
        rates[label] = {"rate": float(slope), "extrapolated_at_switch": float(offset)}

    margin = best[0]
    return AssumptionReport("RA", verdict_for(margin, threshold), margin, best[1], threshold,
                            details={"per_arc": per_arc, "exclusion_radius": r,
                                     "weak_min_on_grid": weak_min, "near_switch": rates})


def check_strict_switching(path: ExtremalPath, threshold: float = MARGIN_THRESHOLD
                           ) -> AssumptionReport:
    n = path.n
    sch = path.schedule
    H1 = path.last_first_arc_hamiltonian
    H3 = path.first_last_arc_hamiltonian
    H2 = arc_hamiltonian(path.problem, 2, 0, sch.u1, sch.u3)
    z1, z2 = path.ell1, path.ell2
    b1 = poisson_bracket(H1, H2, z1[n:], z1[:n])
    b2 = poisson_bracket(H2, H3, z2[n:], z2[:n])
    margin, witness = (b1, sch.tau1) if b1 <= b2 else (b2, sch.tau2)
    return AssumptionReport("RS", verdict_for(margin, threshold), margin, witness, threshold,
                            details={"bracket_tau1": b1, "bracket_tau2": b2,
                                     "tags": [H1.tag, H2.tag, H3.tag]})


# -- shooting ------------------------------------------------------------------

@dataclass
class ShootingResult:
    schedule: ReferenceSchedule
    iterations: int
    residual_norm: float
    history: list


def switching_residual(problem: ProblemDefinition, schedule: ReferenceSchedule,
                       rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """[x(T) - x_f, (H2 - H1^s)(lambda(tau1)), (H3^s - H2)(lambda(tau2))]."""
    path = integrate_reference_extremal(problem, schedule, rtol=rtol, atol=atol, strict=False)
    n = problem.n
    H2 = arc_hamiltonian(problem, 2, 0, schedule.u1, schedule.u3)
    z1, z2 = path.ell1, path.ell2
    r1 = H2.value_z(z1) - path.last_first_arc_hamiltonian.value_z(z1)
    r2 = path.first_last_arc_hamiltonian.value_z(z2) - H2.value_z(z2)
    return np.concatenate([path.ellT[:n] - schedule.xf, [r1, r2]])


def shoot_extremal(problem: ProblemDefinition, x0, xf, T: float, u1: int, u3: int,
                   initial_guess, tol: float = 1e-10, max_iter: int = 40,
                   rtol: float = 1e-12, atol: float = 1e-14) -> ShootingResult:
    """Newton iteration on (lambda0, tau1, tau2) with a central-difference Jacobian."""
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    lam0, t1, t2 = initial_guess
    w = np.concatenate([np.asarray(lam0, dtype=float), [float(t1), float(t2)]])
    n = problem.n
    scale = _scale(xf)

    def schedule_of(v):
        if not (0.0 < v[n] < v[n + 1] < T):
            raise StructureViolation(f"switching times out of order: tau1={v[n]:.9g}, "
                                     f"tau2={v[n + 1]:.9g}, T={T:.9g}")
        return ReferenceSchedule(T, float(v[n]), float(v[n + 1]), u1, u3, x0, xf, v[:n].copy())

    def residual(v):
        return switching_residual(problem, schedule_of(v), rtol, atol)

    r = residual(w)
    history = [float(np.max(np.abs(r)))]
    iterations = 0
    while history[-1] >= tol * scale:
        if iterations >= max_iter:
            raise ShootingError(f"no convergence after {max_iter} iterations", r, iterations)
        J = np.empty((w.size, w.size))
        for k in range(w.size):
            h = 1e-6 * max(1.0, abs(w[k]))
            e = np.zeros_like(w)
            e[k] = h
            J[:, k] = (residual(w + e) - residual(w - e)) / (2 * h)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ShootingError(f"singular shooting Jacobian: {exc}", r, iterations) from exc
        lam = 1.0
        last_error = None
        while lam > 1e-6:
            trial = w + lam * step
            try:
                r_trial = residual(trial)
            except StructureViolation as exc:
                last_error = exc
                lam *= 0.5
                continue
            except VerificationError as exc:
                last_error = exc
                lam *= 0.5
                continue
            if np.max(np.abs(r_trial)) < (1 - 1e-4 * lam) * history[-1] or lam == 1.0 and \
                    np.max(np.abs(r_trial)) < tol * scale:
                break
            last_error = None
            lam *= 0.5
        else:
            if isinstance(last_error, StructureViolation):
                raise last_error
            raise ShootingError("line search failed", r, iterations)
        w, r = trial, r_trial
        iterations += 1
        history.append(float(np.max(np.abs(r))))
    return ShootingResult(schedule_of(w), iterations, history[-1], history)
