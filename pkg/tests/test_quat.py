import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kubgen import quat

unit_quats = st.builds(
    lambda w, x, y, z: quat.normalize(np.array([w, x, y, z])),
    *[st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3) for _ in range(4)],
)
vectors = st.builds(
    lambda x, y, z: np.array([x, y, z]),
    *[st.floats(-10, 10) for _ in range(3)],
)


def test_identity_rotation():
    v = np.array([1.0, 2.0, 3.0])
    assert np.allclose(quat.rotate(quat.IDENTITY, v), v)


def test_axis_angle_quarter_turn_z():
    q = quat.from_axis_angle((0, 0, 1), math.pi / 2)
    v = quat.rotate(q, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(v, [0.0, 1.0, 0.0], atol=1e-12)


def test_rotate_matches_matrix():
    q = quat.from_axis_angle((1, 2, 3), 0.7)
    v = np.array([0.3, -1.2, 2.5])
    assert np.allclose(quat.rotate(q, v), quat.to_matrix(q) @ v, atol=1e-12)


@given(unit_quats, vectors)
def test_rotation_preserves_length(q, v):
    assert math.isclose(
        np.linalg.norm(quat.rotate(q, v)), np.linalg.norm(v), rel_tol=1e-9, abs_tol=1e-9
    )


@given(unit_quats, vectors)
def test_rotate_inverse_roundtrip(q, v):
    assert np.allclose(quat.rotate_inverse(q, quat.rotate(q, v)), v, atol=1e-9)


@given(unit_quats)
def test_matrix_roundtrip(q):
    q2 = quat.from_matrix(quat.to_matrix(q))
    # q and -q are the same rotation
    assert np.allclose(q2, q, atol=1e-8) or np.allclose(q2, -q, atol=1e-8)


def test_multiply_composes():
    a = quat.from_axis_angle((0, 0, 1), 0.4)
    b = quat.from_axis_angle((1, 0, 0), 1.1)
    v = np.array([0.5, 0.6, -0.7])
    assert np.allclose(
        quat.rotate(quat.multiply(a, b), v), quat.rotate(a, quat.rotate(b, v)), atol=1e-12
    )


def test_slerp_endpoints_exact():
    a = quat.from_axis_angle((0, 1, 0), 0.3)
    b = quat.from_axis_angle((0, 1, 0), 2.1)
    assert np.array_equal(quat.slerp(a, b, 0.0), a)
    assert np.array_equal(quat.slerp(a, b, 1.0), b)


def test_slerp_halfway_is_mean_angle():
    a = quat.IDENTITY
    b = quat.from_axis_angle((0, 0, 1), 1.0)
    mid = quat.slerp(a, b, 0.5)
    expected = quat.from_axis_angle((0, 0, 1), 0.5)
    assert np.allclose(mid, expected, atol=1e-12)


def test_slerp_takes_short_arc():
    a = quat.from_axis_angle((0, 0, 1), 0.1)
    b = -quat.from_axis_angle((0, 0, 1), 0.2)  # same rotation, flipped sign
    mid = quat.slerp(a, b, 0.5)
    v = quat.rotate(mid, np.array([1.0, 0.0, 0.0]))
    angle = math.atan2(v[1], v[0])
    assert math.isclose(angle, 0.15, abs_tol=1e-9)


@given(unit_quats, unit_quats, st.floats(0, 1))
def test_slerp_stays_unit(a, b, t):
    assert math.isclose(np.linalg.norm(quat.slerp(a, b, t)), 1.0, abs_tol=1e-9)


def test_integrate_angular_small_step_matches_axis_angle():
    omega = np.array([0.0, 0.0, 2.0])
    q = quat.IDENTITY
    dt = 1e-4
    q2 = quat.integrate_angular(q, omega, dt)
    expected = quat.from_axis_angle((0, 0, 1), 2.0 * dt)
    assert np.allclose(q2, expected, atol=1e-9)


def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        quat.normalize(np.zeros(4))
