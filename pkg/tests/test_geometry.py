import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mvtr.geometry import RigidTransform, UnitQuat, Vec3, compose, invert, transform_close


def random_transform(rng) -> RigidTransform:
    axis = Vec3(*(rng.uniform(-1, 1, 3)))
    angle = rng.uniform(-math.pi, math.pi)
    t = Vec3(*(rng.uniform(-2, 2, 3)))
    return RigidTransform(UnitQuat.from_axis_angle(axis, angle), t)


def test_identity_compose():
    rng = np.random.default_rng(0)
    t = random_transform(rng)
    assert transform_close(compose(RigidTransform.identity(), t), t, 0, 0)
    assert transform_close(compose(t, RigidTransform.identity()), t, 1e-15, 1e-9)


def test_compose_invert_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(100):
        t = random_transform(rng)
        assert transform_close(compose(t, invert(t)), RigidTransform.identity())
        assert transform_close(compose(invert(t), t), RigidTransform.identity())
        assert transform_close(invert(invert(t)), t)


def test_compose_matches_homogeneous_matrix_oracle():
    # rot 90 deg about z with translation (1,0,0), composed with pure translation (0,1,0)
    a = RigidTransform(UnitQuat.from_axis_angle(Vec3(0, 0, 1), math.pi / 2), Vec3(1, 0, 0))
    b = RigidTransform(UnitQuat.identity(), Vec3(0, 1, 0))
    got = compose(a, b)
    oracle = a.to_matrix() @ b.to_matrix()
    assert np.allclose(got.to_matrix(), oracle, atol=1e-12)
    # rotating (0,1,0) by 90 deg about z gives (-1,0,0); plus (1,0,0) -> origin
    assert got.translation.norm() < 1e-12
    assert got.rotation.angle_to(a.rotation) < 1e-12


def test_compose_random_matches_matrix_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b = random_transform(rng), random_transform(rng)
        assert np.allclose(compose(a, b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        a, b, c = (random_transform(rng) for _ in range(3))
        assert transform_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9, 1e-9)


def test_quat_canonical_form():
    q = UnitQuat.of(-1.0, 0.0, 0.0, 0.0)
    assert q.w == 1.0
    with pytest.raises(ValueError):
        UnitQuat(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        UnitQuat(0.5, 0.5, 0.0, 0.0)  # not unit norm


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = UnitQuat.from_axis_angle(Vec3(*rng.uniform(-1, 1, 3)), rng.uniform(-3, 3))
        v = Vec3(*rng.uniform(-2, 2, 3))
        assert np.allclose(q.rotate(v).as_array(), q.to_matrix() @ v.as_array(), atol=1e-12)


def test_matrix_roundtrip_including_near_pi():
    rng = np.random.default_rng(5)
    angles = list(rng.uniform(-math.pi, math.pi, 50)) + [math.pi, math.pi - 1e-8, -math.pi]
    for ang in angles:
        q = UnitQuat.from_axis_angle(Vec3(*rng.uniform(-1, 1, 3)), ang)
        q2 = UnitQuat.from_matrix(q.to_matrix())
        assert q.angle_to(q2) < 1e-6


def test_vec3_rejects_nonfinite():
    with pytest.raises(ValueError):
        Vec3(float("nan"), 0, 0)
    with pytest.raises(ValueError):
        Vec3(float("inf"), 0, 0)


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
    st.floats(-math.pi, math.pi),
)
@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_axis_angle_preserves_norm(ax, ay, az, angle):
    if abs(ax) + abs(ay) + abs(az) < 1e-6:
        return
    q = UnitQuat.from_axis_angle(Vec3(ax, ay, az), angle)
    v = Vec3(0.3, -0.2, 0.9)
    assert math.isclose(q.rotate(v).norm(), v.norm(), rel_tol=1e-12)
