import numpy as np
import pytest

from l1verify import vehicle_bench as vb
from l1verify.errors import StructureMismatch
from l1verify.extremal import integrate_reference_extremal
from l1verify.hamflow import (clarke_invertibility, clarke_margin_core, differentials_fd,
                              differentials_formula, maximized_flow, switch_time_differentials)
from l1verify.pullback import compute_pullback


@pytest.fixture(scope="module")
def vehicle_diffs(vehicle, vehicle_pullback):
    return switch_time_differentials(vehicle["path"], vehicle_pullback)


@pytest.fixture(scope="module")
def crossing_diffs(crossing, crossing_pullback):
    return switch_time_differentials(crossing["path"], crossing_pullback)


@pytest.mark.parametrize("which", ["vehicle", "crossing"])
def test_maximized_flow_reproduces_reference(which, vehicle, crossing):
    path = (vehicle if which == "vehicle" else crossing)["path"]
    sch, zs = path.schedule, path.zero_structure
    state = maximized_flow(path.problem, sch.u1, sch.u3, path.ell0, sch.T, a0=zs.a0,
                           expected=zs, endpoint_window=1e-3 * sch.T)
    assert state.crossing_log["tau1"] == pytest.approx(sch.tau1, abs=1e-9)
    assert state.crossing_log["tau2"] == pytest.approx(sch.tau2, abs=1e-9)
    assert state.crossing_log["s1"] == pytest.approx(list(zs.s1), abs=1e-9)
    assert state.crossing_log["s3"] == pytest.approx(list(zs.s3), abs=1e-9)
    assert np.allclose(state.point, path.ellT, atol=1e-8)


def test_maximized_flow_structure_mismatch(crossing):
    path = crossing["path"]
    sch, zs = path.schedule, path.zero_structure
    wrong = type(zs)(zs.s1, (), zs.a0, zs.a2)
    with pytest.raises(StructureMismatch):
        maximized_flow(path.problem, sch.u1, sch.u3, path.ell0, sch.T, a0=zs.a0, expected=wrong,
                       endpoint_window=1e-3 * sch.T)


@pytest.mark.parametrize("which", ["vehicle", "crossing"])
def test_formula_matches_finite_differences(which, vehicle_diffs, crossing_diffs):
    rep = vehicle_diffs if which == "vehicle" else crossing_diffs
    assert rep.finite_difference is not None
    assert rep.max_deviation < 1e-4, rep.relative_deviation


def test_crossing_rows_present_and_printed_coefficient_off(crossing_diffs):
    rows = crossing_diffs.formula.rows()
    assert {"tau1", "tau2", "s1_1", "s3_1"} <= set(rows)
    # the printed sign of the crossing correction does not reproduce the finite differences
    assert max(crossing_diffs.printed_deviation.values()) > 0.1


@pytest.mark.parametrize("which", ["vehicle", "crossing"])
def test_time_translation(which, vehicle, crossing, vehicle_diffs, crossing_diffs):
    # starting further along the extremal shifts every switching time by the same amount
    path = (vehicle if which == "vehicle" else crossing)["path"]
    diffs = (vehicle_diffs if which == "vehicle" else crossing_diffs).formula
    v = path.pieces[0].hamiltonian.vector_field(path.ell0)
    for row in diffs.rows().values():
        assert row @ v == pytest.approx(-1.0, abs=1e-6)


def test_first_switch_sensitivity_identity(vehicle, vehicle_pullback, vehicle_diffs):
    # <d tau1, (g1 - g2, 0)> = -1 / {H1, H2}(l1)
    g1, g2, _ = vehicle_pullback.g
    d = vehicle_diffs.formula.dtau1
    assert d[:2] @ (g1 - g2) == pytest.approx(-1.0 / vehicle["oracle"].bracket12, rel=1e-7)


def test_clarke_identity_at_zero():
    I = np.eye(3)
    jump = np.outer([1.0, 2.0, 0.5], [0.3, -1.0, 2.0])
    m1, a1, c1, m2, a2, c2, grid = clarke_margin_core(I, jump, I, jump, 11)
    assert c1[0] == 1.0 and c2[0] == 1.0 and grid[0] == 0.0


@pytest.mark.parametrize("a_star", [0.25, 0.5, 0.8])
def test_clarke_detects_designed_singularity(a_star):
    # I + a u v^T is singular exactly when a v.u = -1
    u, v = np.array([1.0, 2.0]), np.array([0.5, -0.2])
    jump = -np.outer(u, v) / (a_star * (v @ u))
    m1, a1, *_ = clarke_margin_core(np.eye(2), jump, np.eye(2), np.zeros((2, 2)), 21)
    assert m1 <= 1e-9
    assert a1 == pytest.approx(a_star, abs=1e-6)


@pytest.mark.parametrize("T", [2.2, 2.25, 2.3, 2.35, 2.39])
def test_vehicle_clarke_best_margin_positive(T):
    inst = vb.VehicleInstance(1.0, 1.0, T)
    problem = vb.build_problem(1.0)
    path = integrate_reference_extremal(problem, vb.reference_schedule(inst))
    pb = compute_pullback(problem, path)
    diffs = differentials_formula(path, pb)
    rep = clarke_invertibility(pb, diffs)
    assert rep.best[0] > 0.5 and rep.verdict == "pass"
    # with K = 0 the first switch degenerates exactly when {H1,H2}(l1) <= 1
    if vb.oracle(inst).bracket12 > 1.05:
        assert rep.switch1_margin > 1e-3
    else:
        assert rep.switch1_margin < 1e-6


def test_fd_step_shrinks_near_degenerate_switch():
    inst = vb.VehicleInstance(1.0, 1.0, 2.4)
    problem = vb.build_problem(1.0)
    path = integrate_reference_extremal(problem, vb.reference_schedule(inst))
    rep = switch_time_differentials(path, compute_pullback(problem, path))
    assert rep.finite_difference is not None and rep.fd_step < 1e-5
    assert rep.max_deviation < 1e-3


def test_fd_uses_requested_step(vehicle):
    a = differentials_fd(vehicle["path"], step=1e-5)
    b = differentials_fd(vehicle["path"], step=2e-5)
    assert np.allclose(a.dtau1, b.dtau1, rtol=1e-6, atol=1e-8)
