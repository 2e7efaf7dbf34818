import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from l1verify.geometry import VectorField, linear_field
from l1verify.odeflow import (EventSpec, integrate, locate_zeros, variational_flow,
                              write_trajectory_csv)

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
DAMPED = np.array([[0.0, 1.0], [-2.0, -0.3]])


def pendulum():
    return VectorField(lambda x: np.array([x[1], -np.sin(x[0])]),
                       lambda x: np.array([[0.0, 1.0], [-np.cos(x[0]), 0.0]]))


def test_linear_flow_matches_matrix_exponential():
    x0 = np.array([1.0, -0.5])
    traj, _ = integrate(linear_field(DAMPED), x0, 0.0, 3.0)
    assert np.allclose(traj.y1, expm(3.0 * DAMPED) @ x0, atol=1e-9)
    assert np.allclose(traj(1.7), expm(1.7 * DAMPED) @ x0, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.05, 1.5))
def test_flow_semigroup(s, t):
    x0 = np.array([0.8, 0.1])
    whole, _ = integrate(pendulum(), x0, 0.0, s + t, rtol=1e-12, atol=1e-14)
    first, _ = integrate(pendulum(), x0, 0.0, s, rtol=1e-12, atol=1e-14)
    second, _ = integrate(pendulum(), first.y1, s, s + t, rtol=1e-12, atol=1e-14)
    assert np.allclose(whole.y1, second.y1, atol=1e-9)


def test_event_location_and_direction():
    # x = (sin t, cos t): x1 crosses zero downwards at pi, upwards at 2 pi
    ev = EventSpec(lambda t, y: y[0], direction="any", name="x1")
    _, hits = integrate(linear_field(ROT), np.array([0.0, 1.0]), 0.0, 7.0, [ev])
    times = [h.t for h in hits]
    assert times == pytest.approx([np.pi, 2 * np.pi], abs=1e-10)
    assert [h.direction for h in hits] == [-1, 1]
    up = EventSpec(lambda t, y: y[0], direction="up", name="x1")
    _, hits = integrate(linear_field(ROT), np.array([0.0, 1.0]), 0.0, 7.0, [up])
    assert [h.t for h in hits] == pytest.approx([2 * np.pi], abs=1e-10)


def test_ignore_window_and_terminal_event():
    ev = EventSpec(lambda t, y: y[0], terminal=True, ignore_window=1e-6)
    traj, hits = integrate(linear_field(ROT), np.array([0.0, 1.0]), 0.0, 7.0, [ev])
    assert len(hits) == 1 and hits[0].t == pytest.approx(np.pi, abs=1e-10)
    assert traj.t1 == pytest.approx(np.pi, abs=1e-10)


def test_variational_flow_matches_expm():
    lin = variational_flow(linear_field(DAMPED), np.array([1.0, 0.0]), 0.0, 2.0)
    assert np.allclose(lin.matrix, expm(2.0 * DAMPED), atol=1e-9)


def test_variational_flow_matches_finite_differences():
    # mixed tolerance 1e-5 on a nonlinear field
    x0, T, h = np.array([0.9, 0.2]), 2.5, 1e-6
    lin = variational_flow(pendulum(), x0, 0.0, T, rtol=1e-12, atol=1e-14)
    fd = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        plus, _ = integrate(pendulum(), x0 + e, 0.0, T, rtol=1e-12, atol=1e-14)
        minus, _ = integrate(pendulum(), x0 - e, 0.0, T, rtol=1e-12, atol=1e-14)
        fd[:, k] = (plus.y1 - minus.y1) / (2 * h)
    assert np.all(np.abs(lin.matrix - fd) <= 1e-5 * (1 + np.abs(fd)))


def test_locate_zeros_interior_and_endpoint():
    traj, _ = integrate(linear_field(ROT), np.array([0.0, 1.0]), 0.0, 2 * np.pi)
    res = locate_zeros(traj, lambda t, y: y[0])
    assert res.interior == pytest.approx([np.pi], abs=1e-10)
    assert res.endpoint == pytest.approx([0.0, 2 * np.pi], abs=1e-8)


def test_trajectory_csv_format_and_determinism():
    traj, _ = integrate(linear_field(ROT), np.array([0.0, 1.0]), 0.0, 1.0)
    out = []
    for _ in range(2):
        buf = io.StringIO()
        write_trajectory_csv(buf, traj, 1, samples=11, with_costate=True)
        out.append(buf.getvalue())
    lines = out[0].splitlines()
    assert lines[0] == "t,x1,p1" and len(lines) == 12
    assert out[0] == out[1]


def test_backwards_span_rejected():
    with pytest.raises(ValueError):
        integrate(linear_field(ROT), np.zeros(2), 1.0, 0.0)
