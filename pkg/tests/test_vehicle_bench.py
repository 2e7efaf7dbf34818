import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from l1verify import vehicle_bench as vb
from l1verify.errors import BranchInapplicable
from l1verify.extremal import check_strict_switching, integrate_reference_extremal


def bang_bang_min_time(alpha, X):
    """Independent minimum-time oracle: full thrust for t_a, full braking until rest."""
    def brake_time(t_a):
        v = (1 - math.exp(-alpha * t_a)) / alpha
        return math.log(1 + alpha * v) / alpha

    def reach(t_a):
        v = (1 - math.exp(-alpha * t_a)) / alpha
        x_a = t_a / alpha - (1 - math.exp(-alpha * t_a)) / alpha ** 2
        t_b = brake_time(t_a)
        # braking from speed v: x2 = (v + 1/alpha) e^{-alpha s} - 1/alpha
        x_b = (v + 1 / alpha) * (1 - math.exp(-alpha * t_b)) / alpha - t_b / alpha
        return x_a + x_b - X

    t_a = brentq(reach, 1e-9, 50.0, xtol=1e-15)
    return t_a + brake_time(t_a)


@pytest.mark.parametrize("alpha,X", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)])
def test_t_min_against_independent_solution(alpha, X):
    assert vb.t_min(alpha, X) == pytest.approx(bang_bang_min_time(alpha, X), rel=1e-12)


def test_t_min_printed_form():
    e = math.sqrt(1 - math.exp(-1))
    assert vb.t_min(1.0, 1.0) == pytest.approx(math.log((1 + e) / (1 - e)), rel=1e-14)


def test_oracle_values_unit_case(vehicle):
    orc = vehicle["oracle"]
    assert orc.T_min == pytest.approx(2.1700770038967754, rel=1e-12)
    assert orc.T_lim == pytest.approx(2.4010176688442697, rel=1e-12)
    assert orc.tau1 == pytest.approx(1.3234426637128618, abs=1e-12)
    assert orc.tau2 == pytest.approx(1.976557336287138, abs=1e-12)
    assert 0 < orc.tau1 < orc.tau2 < 2.3 and orc.p1 > 0


def test_bracket_closed_forms(vehicle):
    # the {H1,H2} value equals the corrected closed form; the printed variant does not
    orc = vehicle["oracle"]
    rs = check_strict_switching(vehicle["path"])
    assert rs.details["bracket_tau1"] == pytest.approx(orc.bracket12, rel=1e-9)
    assert rs.details["bracket_tau2"] == pytest.approx(orc.bracket23, rel=1e-9)
    assert abs(orc.bracket12_printed - orc.bracket12) > 0.1


@pytest.mark.parametrize("T", [2.1, 2.17, 2.45])
def test_branch_inapplicable(T):
    with pytest.raises(BranchInapplicable):
        vb.oracle(vb.VehicleInstance(1.0, 1.0, T))


def test_t_lim_is_admissible():
    orc = vb.oracle(vb.VehicleInstance(1.0, 1.0, vb.t_lim(1.0, 1.0)))
    assert abs(orc.bracket12) < 1e-9


def test_monotone_degeneration():
    Tmin, Tlim = vb.t_min(1.0, 1.0), vb.t_lim(1.0, 1.0)
    Ts = np.linspace(Tmin + 0.05 * (Tlim - Tmin), Tlim, 10)
    values = []
    for T in Ts:
        inst = vb.VehicleInstance(1.0, 1.0, float(T))
        path = integrate_reference_extremal(vb.build_problem(1.0), vb.reference_schedule(inst),
                                            strict=False)
        values.append(check_strict_switching(path).details["bracket_tau1"])
    assert all(a > b for a, b in zip(values, values[1:]))
    mid = vb.oracle(vb.VehicleInstance(1.0, 1.0, 0.5 * (Tmin + Tlim))).bracket12
    assert abs(values[-1]) < 1e-3 * mid


def test_zero_arc_shrinks_near_t_min():
    Tmin = vb.t_min(1.0, 1.0)
    gaps = [vb.oracle(vb.VehicleInstance(1.0, 1.0, Tmin + d)) for d in (1e-2, 1e-4, 1e-6)]
    widths = [o.tau2 - o.tau1 for o in gaps]
    assert all(w > 0 for w in widths) and widths[0] > widths[1] > widths[2]
    assert widths[-1] < 1e-2
    vb.reference_schedule(vb.VehicleInstance(1.0, 1.0, Tmin + 1e-6))


def test_cost_sign_guard(vehicle):
    rep = vb.end_to_end_verify(vehicle["instance"])
    assert rep.hygiene["psi_sign_guard"] and rep.hygiene["min_psi_along_path"] >= -1e-9


def _integrated_cost(alpha, controls, breaks):
    y = np.zeros(3)
    for u, a, b in zip(controls, breaks[:-1], breaks[1:]):
        sol = solve_ivp(lambda t, s: [s[1], u - alpha * s[1], abs(u * s[1])], (a, b), y,
                        method="DOP853", rtol=1e-12, atol=1e-14)
        y = sol.y[:, -1]
    return y[2], y[:2]


def test_probe_cost_against_quadrature(vehicle):
    inst, orc = vehicle["instance"], vehicle["oracle"]
    w = (0.03, -0.02)
    cost, end = vb.probe_cost(inst, orc.tau1 + 0.01, orc.tau2 - 0.005, w)
    mid = 0.5 * (orc.tau1 + 0.01 + orc.tau2 - 0.005)
    ref_cost, ref_end = _integrated_cost(1.0, [1.0, w[0], w[1], -1.0],
                                         [0.0, orc.tau1 + 0.01, mid, orc.tau2 - 0.005, inst.T])
    assert cost == pytest.approx(ref_cost, rel=1e-10)
    assert np.allclose(end, ref_end, atol=1e-10)


def test_reference_cost_from_path(vehicle):
    # cost = x1(tau1) + X - x1(tau2) since x2 >= 0 on both bang arcs
    path, orc = vehicle["path"], vehicle["oracle"]
    cost, _ = vb.probe_cost(vehicle["instance"], orc.tau1, orc.tau2)
    assert cost == pytest.approx(path.state(orc.tau1)[0] + 1.0 - path.state(orc.tau2)[0],
                                 rel=1e-9)


def test_probe_rows(vehicle):
    inst = vehicle["instance"]
    res = vb.perturbation_probe(inst, offsets=[(0.0, 0.0), (0.5, -0.5), (1e-3, 2e-3)])
    zero, swapped, small = res.rows
    assert zero["feasible"] and zero["terminal_gap"] < 1e-12 and abs(zero["difference"]) < 1e-14
    assert not swapped["feasible"] and "order" in swapped["reason"]
    assert small["feasible"] and small["difference"] >= -1e-9 and small["endpoint_error"] < 1e-10
