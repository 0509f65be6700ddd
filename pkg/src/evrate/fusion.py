"""Dual-camera rate fusion and the transform to the inertial frame.

Each camera measures its own pitch and yaw rates (p, q) well and its roll
rate r poorly. Fusion keeps the four well-observed channels of the two
cameras and solves for the body rate in the camera-A frame by least
squares. With the default orthogonal mounting this reduces to

    p_f = (p1 + p2) / 2,   q_f = q1,   r_f = -q2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import RateEstimate
from .geometry import check_rotation
from .kinematics import AngularRates

# Columns are camera-B axes written in camera-A coordinates:
# c_B1 = c_A1, c_B2 = -c_A3, c_B3 = c_A2.
DEFAULT_B_TO_A = np.array([[1.0, 0.0, 0.0],
                           [0.0, 0.0, 1.0],
                           [0.0, -1.0, 0.0]])


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class DualMounting:
    """Fixed rotation taking camera-B coordinates to camera-A coordinates."""

    R_B_to_A: np.ndarray = field(default_factory=lambda: DEFAULT_B_TO_A.copy())

    def __post_init__(self):
        R = np.array(self.R_B_to_A, dtype=float)
        check_rotation(R, tol=1e-9)
        R.setflags(write=False)
        object.__setattr__(self, "R_B_to_A", R)

    def b_to_a(self, vec) -> np.ndarray:
        return self.R_B_to_A @ np.asarray(vec, dtype=float)

    def a_to_b(self, vec) -> np.ndarray:
        return self.R_B_to_A.T @ np.asarray(vec, dtype=float)

    def attitude_b(self, attitude_a) -> np.ndarray:
        """Inertial-to-camera-B rotation given inertial-to-camera-A."""
        return self.R_B_to_A.T @ np.asarray(attitude_a, dtype=float)


@dataclass(frozen=True)
class FusedRates:
    rates: AngularRates  # rad/s in the fusion frame
    covariance: np.ndarray  # 3x3, (rad/s)^2
    frame: str = "A"


def _as_parts(est) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(est, RateEstimate):
        return np.asarray(est.rates, dtype=float), np.asarray(est.covariance, dtype=float)
    rates = np.asarray(est, dtype=float)
    return rates, np.zeros((3, 3))


def _fuse(za, ca, zb, cb, G_a, G_b, weighting: str) -> tuple[np.ndarray, np.ndarray]:
    # Rows of G map the fused rate onto the p and q channels of each camera.
    G = np.vstack([G_a[:2], G_b[:2]])
    z = np.concatenate([za[:2], zb[:2]])
    if weighting == "equal":
        W = np.eye(4)
    elif weighting == "inverse-variance":
        W = np.zeros((4, 4))
        for sl, C in ((slice(0, 2), ca), (slice(2, 4), cb)):
            block = C[:2, :2]
            if not np.all(np.isfinite(block)) or np.linalg.det(block) <= 0:
                raise FusionError("inverse-variance weighting needs positive definite p/q covariances")
            W[sl, sl] = np.linalg.inv(block)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    N = G.T @ W @ G
    if np.linalg.cond(N) > 1e10:
        raise FusionError("mounting leaves the fused rate unobservable from the p/q channels")
    A4 = np.linalg.solve(N, G.T @ W)  # 3 x 4
    # Full map from (p1, q1, r1, p2, q2, r2); roll columns stay zero.
    M = np.zeros((3, 6))
    M[:, 0:2] = A4[:, 0:2]
    M[:, 3:5] = A4[:, 2:4]
    rates = A4 @ z
    C = np.zeros((6, 6))
    C[:3, :3] = ca
    C[3:, 3:] = cb
    cov = M @ C @ M.T
    return rates, 0.5 * (cov + cov.T)


def fuse(estimate_a, estimate_b, mounting: DualMounting | None = None,
         weighting: str = "equal") -> FusedRates:
    """Fused body rate in the camera-A frame.

    Inputs are RateEstimate objects or plain (p, q, r) triples, each in its
    own camera frame. ``weighting`` is "equal" (plain average of the shared
    channel) or "inverse-variance".
    """
    mounting = mounting or DualMounting()
    za, ca = _as_parts(estimate_a)
    zb, cb = _as_parts(estimate_b)
    rates, cov = _fuse(za, ca, zb, cb, np.eye(3), mounting.R_B_to_A.T, weighting)
    return FusedRates(AngularRates(*map(float, rates)), cov, "A")


def fuse_b_frame(estimate_a, estimate_b, mounting: DualMounting | None = None,
                 weighting: str = "equal") -> FusedRates:
    """The same fusion expressed in the camera-B frame.

    For the default mounting: p_f = (p1 + p2) / 2, q_f = q2, r_f = q1.
    """
    mounting = mounting or DualMounting()
    za, ca = _as_parts(estimate_a)
    zb, cb = _as_parts(estimate_b)
    rates, cov = _fuse(za, ca, zb, cb, mounting.R_B_to_A, np.eye(3), weighting)
    return FusedRates(AngularRates(*map(float, rates)), cov, "B")


def rates_to_inertial(rates, attitude) -> np.ndarray:
    """Camera-frame rates to inertial components, with ``attitude`` the
    inertial-to-camera rotation."""
    R = np.asarray(attitude, dtype=float)
    check_rotation(R)
    return R.T @ np.asarray(rates, dtype=float)
