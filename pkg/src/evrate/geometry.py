"""Reference-frame rotations, Euler sequences and the pinhole camera."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-10


class GeometryError(ValueError):
    pass


class UnsupportedSequenceError(GeometryError):
    pass


class BehindCameraError(GeometryError):
    pass


def radec_to_unit(alpha, delta) -> np.ndarray:
    """Unit vector(s) for right ascension / declination in radians.

    Scalars give shape (3,), arrays of shape (n,) give (n, 3).
    """
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float)
    cd = np.cos(delta)
    return np.stack([cd * np.cos(alpha), cd * np.sin(alpha), np.sin(delta)], axis=-1)


def is_rotation(R, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def check_rotation(R, tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise GeometryError("matrix is not a proper rotation")
    return R


def axis_rotation(axis: int, angle: float) -> np.ndarray:
    """Active rotation by ``angle`` about body axis 1, 2 or 3."""
    c, s = math.cos(angle), math.sin(angle)
    if axis == 1:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 2:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == 3:
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise UnsupportedSequenceError(f"axis must be 1, 2 or 3, got {axis}")


def _parse_sequence(sequence: str) -> tuple[int, int, int]:
    digits = tuple(int(ch) for ch in str(sequence) if ch.isdigit())
    if len(digits) != 3 or any(d not in (1, 2, 3) for d in digits):
        raise UnsupportedSequenceError(f"bad rotation sequence {sequence!r}")
    if digits[0] == digits[1] or digits[1] == digits[2]:
        raise UnsupportedSequenceError(f"consecutive repeated axis in {sequence!r}")
    return digits  # type: ignore[return-value]


SUPPORTED_SEQUENCES = tuple(
    f"{a}-{b}-{c}"
    for a in (1, 2, 3)
    for b in (1, 2, 3)
    for c in (1, 2, 3)
    if a != b and b != c
)


@dataclass(frozen=True)
class EulerAngles:
    """Three successive body-axis rotations.

    ``yaw`` is applied first about the first axis of ``sequence``, then
    ``pitch`` about the second and ``roll`` about the third. For the
    default 3-2-1 order that is the usual yaw/pitch/roll set.
    """

    yaw: float
    pitch: float
    roll: float
    sequence: str = "3-2-1"

    def __post_init__(self):
        _parse_sequence(self.sequence)


def rotation_from_euler(angles: EulerAngles) -> np.ndarray:
    """Body-to-reference rotation for an Euler sequence.

    The columns of the result are the body axes expressed in the reference
    frame, so with 3-2-1 and a yaw of 90 deg the body x axis maps onto the
    reference y axis. Transpose for the reference-to-body direction cosines.
    """
    a1, a2, a3 = _parse_sequence(angles.sequence)
    return (
        axis_rotation(a1, angles.yaw)
        @ axis_rotation(a2, angles.pitch)
        @ axis_rotation(a3, angles.roll)
    )


def boresight_attitude(alpha_b: float, delta_b: float, roll_about_boresight: float = 0.0) -> np.ndarray:
    """Inertial-to-camera rotation whose +Z axis points at (alpha_b, delta_b).

    With zero roll the camera x axis points east (increasing right
    ascension). At the celestial poles east is undefined and the inertial
    x axis is used as reference instead.
    """
    c3 = radec_to_unit(alpha_b, delta_b)
    east = np.cross([0.0, 0.0, 1.0], c3)
    n = np.linalg.norm(east)
    if n < 1e-9:
        east = np.cross(c3, np.cross([1.0, 0.0, 0.0], c3))
        n = np.linalg.norm(east)
    east = east / n
    north = np.cross(c3, east)
    cr, sr = math.cos(roll_about_boresight), math.sin(roll_about_boresight)
    c1 = cr * east + sr * north
    c2 = -sr * east + cr * north
    return np.vstack([c1, c2, c3])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole event camera.

    Focal length is in pixels. Focal-plane coordinates have their origin
    at the optical centre (the middle of the sensor), +x along columns and
    +y along rows.
    """

    focal_length: float = 1464.0
    width: int = 640
    height: int = 480
    limit_magnitude: float = 6.0
    event_threshold: float = 0.2

    def __post_init__(self):
        if not self.focal_length > 0:
            raise GeometryError("focal length must be positive")
        if self.width < 16 or self.height < 16:
            raise GeometryError("sensor must be at least 16x16 pixels")
        if not self.event_threshold > 0:
            raise GeometryError("event threshold must be positive")

    @property
    def fov_x(self) -> float:
        return 2.0 * math.atan(self.width / (2.0 * self.focal_length))

    @property
    def fov_y(self) -> float:
        return 2.0 * math.atan(self.height / (2.0 * self.focal_length))

    @property
    def half_diagonal_fov(self) -> float:
        return math.atan(math.hypot(self.width, self.height) / (2.0 * self.focal_length))

    @property
    def center(self) -> tuple[float, float]:
        """Pixel-index coordinates of the optical centre."""
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0

    def on_sensor(self, x, y, margin: float = 0.0):
        x = np.asarray(x)
        y = np.asarray(y)
        hw, hh = self.width / 2.0 + margin, self.height / 2.0 + margin
        return (x >= -hw) & (x < hw) & (y >= -hh) & (y < hh)

    def to_pixel(self, x, y):
        """Focal-plane coordinates to continuous column/row indices."""
        cx, cy = self.center
        return np.asarray(x) + cx, np.asarray(y) + cy

    def from_pixel(self, col, row):
        cx, cy = self.center
        return np.asarray(col, dtype=float) - cx, np.asarray(row, dtype=float) - cy


@dataclass(frozen=True)
class FocalPlanePoint:
    x: float
    y: float
    on_sensor: bool


def project_points(v_cam, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised pinhole projection of an (n, 3) array; requires Z > 0."""
    v = np.atleast_2d(np.asarray(v_cam, dtype=float))
    z = v[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind the camera (Z <= 0)")
    f = camera.focal_length
    return f * v[:, 0] / z, f * v[:, 1] / z


def project_pinhole(v_cam, camera: CameraModel) -> FocalPlanePoint:
    v = np.asarray(v_cam, dtype=float)
    if v.shape != (3,):
        raise GeometryError("expected a single 3-vector")
    x, y = project_points(v, camera)
    x, y = float(x[0]), float(y[0])
    return FocalPlanePoint(x, y, bool(camera.on_sensor(x, y)))
