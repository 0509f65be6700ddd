"""Apparent star motion under pure camera rotation."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

DEFAULT_MAX_RATE = math.radians(30.0)


class AngularRates(NamedTuple):
    """Camera-frame angular velocity in rad/s (p, q, r about axes 1, 2, 3)."""

    p: float
    q: float
    r: float

    @classmethod
    def from_deg(cls, p: float, q: float, r: float) -> "AngularRates":
        return cls(math.radians(p), math.radians(q), math.radians(r))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def check(self, max_rate: float = DEFAULT_MAX_RATE) -> "AngularRates":
        w = self.as_array()
        if not np.all(np.isfinite(w)):
            raise ValueError("angular rates must be finite")
        if np.max(np.abs(w)) > max_rate * (1 + 1e-12):
            raise ValueError("angular rate component exceeds configured maximum")
        return self


class MotionFieldSample(NamedTuple):
    """Image velocity (u, v) in px/s measured at focal-plane point (x, y)."""

    x: float
    y: float
    u: float
    v: float
    weight: float = 1.0


def skew(rates) -> np.ndarray:
    p, q, r = np.asarray(rates, dtype=float)
    return np.array([[0.0, -r, q], [r, 0.0, -p], [-q, p, 0.0]])


def coordinate_rates(v_cam, rates) -> np.ndarray:
    """Rate of change of camera-frame star coordinates, -omega x v.

    Works on a single 3-vector or an (n, 3) stack.
    """
    v = np.asarray(v_cam, dtype=float)
    p, q, r = np.asarray(rates, dtype=float)
    X, Y, Z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([r * Y - q * Z, -r * X + p * Z, q * X - p * Y], axis=-1)


def motion_matrix(x: float, y: float, f: float) -> np.ndarray:
    """2x3 matrix F(x, y) mapping (p, q, r) to the image velocity (u, v)."""
    if not f > 0:
        raise ValueError("focal length must be positive")
    return np.array(
        [[x * y, -(f * f + x * x), y * f], [f * f + y * y, -x * y, -x * f]]
    ) / f


def motion_matrices(x, y, f: float) -> np.ndarray:
    """Stack of F matrices, shape (n, 2, 3)."""
    if not f > 0:
        raise ValueError("focal length must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    F = np.empty((x.size, 2, 3))
    F[:, 0, 0] = x * y
    F[:, 0, 1] = -(f * f + x * x)
    F[:, 0, 2] = y * f
    F[:, 1, 0] = f * f + y * y
    F[:, 1, 1] = -x * y
    F[:, 1, 2] = -x * f
    return F / f


def motion_field(x, y, f: float, rates) -> tuple:
    """Image velocity (u, v) in px/s; accepts scalars or arrays for x, y."""
    w = np.asarray(rates, dtype=float)
    F = motion_matrices(x, y, f)
    uv = F @ w
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(uv[0, 0]), float(uv[0, 1])
    return uv[:, 0], uv[:, 1]


def motion_field_expanded(x, y, f: float, rates):
    """Scalar form of :func:`motion_field`, kept as an independent code path."""
    p, q, r = (float(c) for c in rates)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (r * y * f + p * x * y - q * (f * f + x * x)) / f
    v = (-r * x * f + p * (f * f + y * y) - q * x * y) / f
    return u, v


def rotation_exp(rotvec) -> np.ndarray:
    """Matrix exponential of skew(rotvec) (Rodrigues)."""
    w = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(w))
    K = skew(w)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + math.sin(theta) / theta * K + (1.0 - math.cos(theta)) / theta**2 * K @ K


def propagate_attitude(attitude0, rates, t: float) -> np.ndarray:
    """Inertial-to-camera attitude after spinning at constant camera-frame
    ``rates`` for ``t`` seconds.

    Star coordinates then evolve as dv/dt = -skew(rates) v, which is the
    convention :func:`coordinate_rates` and :func:`motion_field` assume.
    """
    return rotation_exp(-np.asarray(rates, dtype=float) * t) @ np.asarray(attitude0, dtype=float)
