"""End-to-end verification of a bang-zero-bang candidate.

Stages: reference extremal, first-order checks, pull-back data, second
variation, bracket identities, switch-time differentials, Clarke test.  The
candidate is certified iff NT, SS, PMP-boundary, RA, RS and SecondVar all
pass; the remaining stages are diagnostics reported alongside.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import StageError, VerificationError
from .extremal import (MARGIN_THRESHOLD, ReferenceSchedule, _jsonable, check_boundary,
                       check_nontangency, check_strict_maximality, check_strict_switching,
                       check_switch_nonvanishing, integrate_reference_extremal)
from .geometry import ProblemDefinition
from .hamflow import DEFAULT_SWEEP, clarke_invertibility, switch_time_differentials
from .pullback import compute_pullback
from .secondvar import check_bracket_identities, second_variation_report

CONDITIONS = ("NT", "SS", "PMP-boundary", "RA", "RS", "SecondVar")
REPORT_VERSION = 1


@dataclass
class VerifyOptions:
    margin_threshold: float = MARGIN_THRESHOLD
    rtol: float = 1e-10
    atol: float = 1e-12
    boundary_tol: Optional[float] = None
    ra_radius: Optional[float] = None
    ra_samples: int = 401
    fd_step: float = 1e-5
    richardson: bool = True
    differential_step: float = 1e-5
    clarke_grid: int = 21
    clarke_c: float = 0.0
    clarke_K: Optional[list] = None
    clarke_sweep: Optional[tuple] = DEFAULT_SWEEP
    run_differentials: bool = True
    run_clarke: bool = True

    def __post_init__(self):
        for name in ("margin_threshold", "rtol", "atol", "fd_step", "differential_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.clarke_grid < 2:
            raise ValueError("clarke_grid must be at least 2")


@dataclass
class VerificationReport:
    problem: dict
    schedule: dict
    options: dict
    assumptions: list = field(default_factory=list)
    zero_structure: dict = field(default_factory=dict)
    second_variation: Optional[dict] = None
    pullback: Optional[dict] = None
    identities: list = field(default_factory=list)
    differentials: Optional[dict] = None
    clarke: Optional[dict] = None
    hygiene: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def condition(self, cid: str) -> Optional[dict]:
        for a in self.assumptions:
            if a["id"] == cid:
                return a
        return None

    @property
    def failing(self) -> list:
        out = []
        for cid in CONDITIONS:
            a = self.condition(cid)
            if a is None or a["verdict"] != "pass":
                out.append(cid)
        return out

    @property
    def certified(self) -> bool:
        return not self.failing

    @property
    def verdict(self) -> str:
        if self.certified:
            return "strict strong-local minimizer certified"
        return "not certified: " + ", ".join(self.failing)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {"version": REPORT_VERSION, "problem": self.problem, "schedule": self.schedule,
               "options": self.options, "config": self.config,
               "assumptions": self.assumptions, "zero_structure": self.zero_structure,
               "second_variation": self.second_variation, "pullback": self.pullback,
               "identities": self.identities, "differentials": self.differentials,
               "clarke": self.clarke, "hygiene": self.hygiene, "skipped": self.skipped,
               "certified": self.certified, "failing": self.failing, "verdict": self.verdict}
        if include_timings:
            out["timings"] = self.timings
        return _jsonable(out)


class _Stages:
    def __init__(self, report: VerificationReport):
        self.report = report

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except VerificationError as exc:
            raise StageError(name, exc) from exc
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.report.timings[name] = time.perf_counter() - start


def verify(problem: ProblemDefinition, schedule: ReferenceSchedule,
           options: Optional[VerifyOptions] = None, config: Optional[dict] = None
           ) -> VerificationReport:
    opts = options or VerifyOptions()
    thr = opts.margin_threshold
    report = VerificationReport({"name": problem.name, "n": problem.n,
                                 "parameters": dict(problem.parameters)},
                                schedule.to_dict(), asdict(opts), config=config or {})
    st = _Stages(report)

    path = st.run("extremal", integrate_reference_extremal, problem, schedule, rtol=opts.rtol,
                  atol=opts.atol, nt_threshold=thr, strict=False)
    report.zero_structure = path.zero_structure.to_dict()
    report.zero_structure["endpoint_zeros"] = list(path.endpoint_zeros)
    report.zero_structure["zero_arc_zeros"] = list(path.zero_arc_zeros)

    checks = [
        st.run("assumptions", check_nontangency, path, thr),
        st.run("assumptions", check_switch_nonvanishing, path, thr),
        st.run("assumptions", check_boundary, path, schedule, opts.boundary_tol),
        st.run("assumptions", check_strict_maximality, path, thr, opts.ra_radius, opts.ra_samples),
        st.run("assumptions", check_strict_switching, path, thr),
    ]
    report.hygiene["hamiltonian_drift"] = path.hamiltonian_drift()
    n = problem.n
    report.hygiene["costate_jump"] = max(
        float(np.max(np.abs(a.trajectory.y1[n:] - b.trajectory.y0[n:])))
        for a, b in zip(path.pieces[:-1], path.pieces[1:])) if len(path.pieces) > 1 else 0.0

    pb = st.run("pullback", compute_pullback, problem, path, step=opts.fd_step,
                richardson=opts.richardson)
    report.pullback = pb.to_dict()
    sv = st.run("secondvar", second_variation_report, pb, path.zero_structure, thr)
    report.second_variation = sv.to_dict()
    checks.append(sv.assumption_report())
    report.assumptions = [c.to_dict() for c in checks]

    ids = st.run("identities", check_bracket_identities, path, pb)
    report.identities = [r.to_dict() for r in ids]

    rs = report.condition("RS")
    nt = report.condition("NT")
    degenerate = [c for c, a in (("RS", rs), ("NT", nt)) if a["verdict"] != "pass"]
    if degenerate:
        reason = f"requires {' and '.join(degenerate)} to pass"
        report.skipped["differentials"] = reason
        report.skipped["clarke"] = reason
        return report

    if opts.run_differentials or opts.run_clarke:
        diffs = st.run("differentials", switch_time_differentials, path, pb,
                       opts.differential_step, thr)
        if opts.run_differentials:
            report.differentials = diffs.to_dict()
        if opts.run_clarke:
            K = None if opts.clarke_K is None else np.asarray(opts.clarke_K, dtype=float)
            clarke = st.run("clarke", clarke_invertibility, pb, diffs.formula, K, opts.clarke_c,
                            opts.clarke_grid, opts.clarke_sweep, thr)
            report.clarke = clarke.to_dict()
    return report
