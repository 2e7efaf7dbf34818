"""Shared, session-cached reference objects (each is expensive to rebuild)."""

import sys

import numpy as np
import pytest

from l1verify import vehicle_bench as vb
from l1verify.extremal import integrate_reference_extremal, shoot_extremal
from l1verify.pullback import compute_pullback
from l1verify.synthetic import crossing_problem

CROSSING_GUESS = (np.array([1.94, 0.888]), 1.32, 1.98)


@pytest.fixture(scope="session")
def vehicle():
    inst = vb.VehicleInstance(1.0, 1.0, 2.3)
    orc = vb.oracle(inst)
    problem = vb.build_problem(inst.alpha)
    schedule = vb.reference_schedule(inst, orc)
    path = integrate_reference_extremal(problem, schedule)
    return {"instance": inst, "oracle": orc, "problem": problem, "schedule": schedule,
            "path": path}


@pytest.fixture(scope="session")
def vehicle_pullback(vehicle):
    return compute_pullback(vehicle["problem"], vehicle["path"])


def _crossing(kappa):
    problem = crossing_problem(kappa=kappa, b=0.1)
    shot = shoot_extremal(problem, np.zeros(2), np.array([1.0, 0.0]), 2.3, 1, -1, CROSSING_GUESS)
    path = integrate_reference_extremal(problem, shot.schedule)
    return {"problem": problem, "schedule": shot.schedule, "path": path, "shot": shot}


@pytest.fixture(scope="session")
def crossing():
    """Nonlinear drift, psi crossing zero once on each bang arc."""
    return _crossing(0.3)


@pytest.fixture(scope="session")
def crossing_linear():
    return _crossing(0.0)


@pytest.fixture(scope="session")
def crossing_pullback(crossing):
    return compute_pullback(crossing["problem"], crossing["path"])


def pytest_terminal_summary(terminalreporter):
    lines = []
    for module in list(sys.modules.values()):
        lines.extend(getattr(module, "ACCEPTANCE_LINES", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
