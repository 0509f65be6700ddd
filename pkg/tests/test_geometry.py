import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from evrate.geometry import (
    SUPPORTED_SEQUENCES,
    BehindCameraError,
    CameraModel,
    EulerAngles,
    GeometryError,
    UnsupportedSequenceError,
    boresight_attitude,
    is_rotation,
    project_pinhole,
    radec_to_unit,
    rotation_from_euler,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)


def test_identity_euler():
    np.testing.assert_allclose(rotation_from_euler(EulerAngles(0, 0, 0)), np.eye(3), atol=1e-15)


def test_yaw_90_maps_x_to_y():
    R = rotation_from_euler(EulerAngles(math.pi / 2, 0, 0, "3-2-1"))
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(R @ [0, 0, 1], [0, 0, 1], atol=1e-15)


@pytest.mark.parametrize("seq", SUPPORTED_SEQUENCES)
def test_all_twelve_sequences_match_scipy(seq):
    # scipy's intrinsic upper-case sequences compose the same way
    rng = np.random.default_rng(SUPPORTED_SEQUENCES.index(seq))
    axes = "".join("XYZ"[int(c) - 1] for c in seq.split("-"))
    for a in rng.uniform(-math.pi, math.pi, (20, 3)):
        ours = rotation_from_euler(EulerAngles(*a, sequence=seq))
        ref = Rotation.from_euler(axes, a).as_matrix()
        np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_twelve_sequences_listed():
    assert len(SUPPORTED_SEQUENCES) == 12


@pytest.mark.parametrize("seq", ["3-3-1", "1-2-4", "12", "xyz"])
def test_unsupported_sequence(seq):
    with pytest.raises(UnsupportedSequenceError):
        EulerAngles(0.1, 0.2, 0.3, seq)


@given(angle, angle, angle, st.sampled_from(SUPPORTED_SEQUENCES))
def test_euler_orthonormal(y, p, r, seq):
    R = rotation_from_euler(EulerAngles(y, p, r, seq))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert is_rotation(R)


@given(angle, angle, angle, angle, angle, angle)
def test_products_and_inverses_stay_orthonormal(a, b, c, d, e, f):
    R1 = rotation_from_euler(EulerAngles(a, b, c))
    R2 = rotation_from_euler(EulerAngles(d, e, f))
    for M in (R1 @ R2, R1.T, R2.T @ R1, np.linalg.inv(R1)):
        assert is_rotation(M, tol=1e-9)


@pytest.mark.parametrize("alpha,delta,expected", [
    (0.0, 0.0, [1, 0, 0]),
    (90.0, 0.0, [0, 1, 0]),
    (0.0, 90.0, [0, 0, 1]),
    (180.0, -90.0, [0, 0, -1]),
])
def test_radec_axis_cases(alpha, delta, expected):
    np.testing.assert_allclose(radec_to_unit(math.radians(alpha), math.radians(delta)), expected, atol=1e-15)


def test_boresight_at_origin():
    R = boresight_attitude(0.0, 0.0, 0.0)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 0, 1], atol=1e-15)
    assert is_rotation(R)


@pytest.mark.parametrize("delta", [math.pi / 2, -math.pi / 2])
def test_boresight_at_pole(delta):
    R = boresight_attitude(0.3, delta, 1.0)
    assert is_rotation(R)
    np.testing.assert_allclose(R[2], radec_to_unit(0.3, delta), atol=1e-15)


@given(st.floats(0, 2 * math.pi), st.floats(-math.pi / 2, math.pi / 2), st.floats(0, 2 * math.pi))
def test_boresight_round_trip(alpha, delta, roll):
    R = boresight_attitude(alpha, delta, roll)
    assert is_rotation(R)
    v = radec_to_unit(alpha, delta)
    back = R.T @ [0, 0, 1]
    assert np.linalg.norm(back - v) < 1e-10
    np.testing.assert_allclose(R @ v, [0, 0, 1], atol=1e-10)


def test_roll_turns_about_boresight():
    R0 = boresight_attitude(1.0, 0.4, 0.0)
    R1 = boresight_attitude(1.0, 0.4, 0.5)
    np.testing.assert_allclose(R0[2], R1[2], atol=1e-15)
    assert math.isclose(float(R0[0] @ R1[0]), math.cos(0.5), abs_tol=1e-12)


def test_camera_fov_defaults():
    cam = CameraModel()
    # nominal desk camera, about 24.7 x 18.7 deg
    assert math.isclose(math.degrees(cam.fov_x), 24.7, abs_tol=0.1)
    assert math.isclose(math.degrees(cam.fov_y), 18.7, abs_tol=0.1)
    assert cam.fov_x == 2 * math.atan(640 / (2 * 1464.0))


@pytest.mark.parametrize("kw", [dict(focal_length=0), dict(width=8), dict(height=15), dict(event_threshold=0)])
def test_camera_validation(kw):
    with pytest.raises(GeometryError):
        CameraModel(**kw)


def test_project_boresight():
    pt = project_pinhole([0, 0, 1], CameraModel(focal_length=1000))
    assert (pt.x, pt.y, pt.on_sensor) == (0.0, 0.0, True)


def test_project_off_axis():
    v = np.array([0.1, 0.0, math.sqrt(1 - 0.01)])
    pt = project_pinhole(v, CameraModel(focal_length=1000))
    assert math.isclose(pt.x, 100.50378152592121, rel_tol=1e-14)
    assert pt.y == 0.0


def test_project_behind_camera():
    with pytest.raises(BehindCameraError):
        project_pinhole([0, 0, -1], CameraModel())


def test_on_sensor_flag():
    cam = CameraModel(focal_length=100, width=100, height=100)
    assert project_pinhole([0.49, 0, 1], cam).on_sensor
    assert not project_pinhole([0.51, 0, 1], cam).on_sensor


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.1, 10.0))
def test_projection_scale_invariant(x, y, scale):
    cam = CameraModel()
    v = np.array([x, y, 1.0])
    a = project_pinhole(v / np.linalg.norm(v), cam)
    b = project_pinhole(scale * v, cam)
    assert math.isclose(a.x, b.x, rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(a.y, b.y, rel_tol=1e-12, abs_tol=1e-9)


def test_pixel_round_trip():
    cam = CameraModel()
    col, row = cam.to_pixel(12.25, -7.5)
    assert (float(col), float(row)) == (12.25 + 319.5, -7.5 + 239.5)
    x, y = cam.from_pixel(col, row)
    assert (float(x), float(y)) == (12.25, -7.5)
