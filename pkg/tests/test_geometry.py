import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from workcell.errors import WorkcellError
from workcell.geometry import (
    Orientation,
    Pose,
    Position,
    compose,
    invert,
    poses_close,
    transform,
)


def rotation_matrix_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def quat_matrix(q):
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


unit_quaternions = st.tuples(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).filter(lambda t: 0.1 < sum(c * c for c in t) ** 0.5 < 10).map(lambda t: Orientation(*t))


def test_compose_with_inverse_is_identity():
    p = Pose(Position(0.3, -0.2, 1.1), Orientation.from_axis_angle((1, 2, 3), 0.8))
    identity = compose(p, invert(p))
    assert poses_close(identity, Pose(), 1e-9, 1e-9)


def test_transform_identity_passthrough():
    assert transform(Pose(), Position(1, 2, 3)) == Position(1, 2, 3)


def test_compose_z_rotations_adds_angles():
    # oracle: rotation matrices
    a = Pose(orientation=Orientation.from_yaw(math.radians(30)))
    b = Pose(orientation=Orientation.from_yaw(math.radians(60)))
    combined = compose(a, b)
    expected = rotation_matrix_z(math.radians(90))
    assert np.allclose(quat_matrix(combined.orientation), expected, atol=1e-9)


def test_compose_matches_matrix_oracle():
    rng = np.random.default_rng(42)
    for _ in range(50):
        qa = Orientation.from_axis_angle(tuple(rng.normal(size=3)), rng.uniform(-3, 3))
        qb = Orientation.from_axis_angle(tuple(rng.normal(size=3)), rng.uniform(-3, 3))
        ta, tb = Position(*rng.normal(size=3)), Position(*rng.normal(size=3))
        got = compose(Pose(ta, qa), Pose(tb, qb))
        ra, rb = quat_matrix(qa), quat_matrix(qb)
        expected_rot = ra @ rb
        expected_pos = ra @ np.array([tb.x, tb.y, tb.z]) + np.array([ta.x, ta.y, ta.z])
        assert np.allclose(quat_matrix(got.orientation), expected_rot, atol=1e-9)
        assert np.allclose(
            [got.position.x, got.position.y, got.position.z], expected_pos, atol=1e-9
        )


def test_compose_associative():
    rng = np.random.default_rng(7)
    poses = [
        Pose(Position(*rng.normal(size=3)),
             Orientation.from_axis_angle(tuple(rng.normal(size=3)), rng.uniform(0.1, 3)))
        for _ in range(3)
    ]
    left = compose(compose(poses[0], poses[1]), poses[2])
    right = compose(poses[0], compose(poses[1], poses[2]))
    assert poses_close(left, right, 1e-9, 1e-9)


def test_non_finite_rejected():
    with pytest.raises(WorkcellError) as err:
        Position(float("nan"), 0, 0)
    assert err.value.code == "NUMERIC_ERROR"
    with pytest.raises(WorkcellError):
        Orientation(float("inf"), 0, 0, 0)


def test_orientation_normalized_on_construction():
    q = Orientation(2.0, 0.0, 0.0, 0.0)
    assert q.w == 1.0
    norm = math.sqrt(q.w**2 + q.x**2 + q.y**2 + q.z**2)
    assert abs(norm - 1.0) <= 1e-9


@given(unit_quaternions)
def test_orientation_equality_sign_invariant(q):
    assert q == q.negate()
    assert hash(q) == hash(q.negate())


def test_rotate_matches_matrix():
    q = Orientation.from_axis_angle((0.3, -1.0, 0.5), 1.2)
    p = Position(0.4, 0.1, -0.7)
    got = q.rotate(p)
    expected = quat_matrix(q) @ np.array([0.4, 0.1, -0.7])
    assert np.allclose([got.x, got.y, got.z], expected, atol=1e-12)


def test_yaw_roundtrip():
    for angle in (-3.0, -1.2, 0.0, 0.4, 2.9):
        assert abs(Orientation.from_yaw(angle).yaw() - angle) < 1e-12


def test_pose_json_roundtrip():
    p = Pose(Position(1.5, -2.25, 0.125), Orientation.from_axis_angle((1, 1, 0), 0.9))
    assert Pose.from_dict(p.to_dict()) == p
