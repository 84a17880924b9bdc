"""Residual and Jacobian blocks for wheel odometry, landmark sightings and pose priors.

Conventions used throughout:

* Odometry is differential drive. ``v_l``/``v_r`` are per-interval wheel
  displacements in meters, so no time step appears anywhere.
* The odometry prediction is the global-frame pose difference
  ``x_curr - x_prev``; its Jacobian is constant.
* Landmark sightings use the robot-frame convention
  ``dx = c*(lx-rx) + s*(ly-ry)``, ``dy = s*(lx-rx) - c*(ly-ry)``
  (the lateral axis is reflected). That map is its own inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from msam.core import Landmark2, Pose2, wrap_angle
from msam.errors import InvalidInputError, ParameterError


@dataclass(frozen=True)
class WheelOdometry:
    """Wheel displacements for the interval starting at pose ``state_id``."""

    state_id: int
    v_l: float
    v_r: float

    def __post_init__(self):
        object.__setattr__(self, "state_id", int(self.state_id))
        object.__setattr__(self, "v_l", float(self.v_l))
        object.__setattr__(self, "v_r", float(self.v_r))
        if not (math.isfinite(self.v_l) and math.isfinite(self.v_r)):
            raise InvalidInputError(f"non-finite odometry {self}")


@dataclass(frozen=True)
class LandmarkMeasurement:
    state_id: int
    tag_id: int
    dx: float
    dy: float

    def __post_init__(self):
        for k, cast in (("state_id", int), ("tag_id", int), ("dx", float), ("dy", float)):
            object.__setattr__(self, k, cast(getattr(self, k)))
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise InvalidInputError(f"non-finite measurement {self}")


@dataclass(frozen=True)
class Dataset:
    """One robot's synchronized odometry and landmark sightings.

    Odometry entry ``k`` moves the robot from pose ``k`` to pose ``k + 1``,
    so a dataset with ``n`` odometry entries has ``n + 1`` poses.
    """

    robot_id: int
    odometry: tuple[WheelOdometry, ...]
    measurements: tuple[LandmarkMeasurement, ...]
    params: "RobotParams"

    def __post_init__(self):
        object.__setattr__(self, "odometry", tuple(self.odometry))
        object.__setattr__(self, "measurements", tuple(self.measurements))
        ids = [o.state_id for o in self.odometry]
        if ids != list(range(len(ids))):
            raise InvalidInputError("odometry state ids must be dense and increasing from 0")
        for m in self.measurements:
            if not 0 <= m.state_id <= self.n_poses - 1:
                raise InvalidInputError(f"measurement refers to missing state {m.state_id}")

    @property
    def n_poses(self) -> int:
        return len(self.odometry) + 1

    @property
    def tags(self) -> set[int]:
        return {m.tag_id for m in self.measurements}


def _positive(name, values):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{name} entries must be finite and > 0, got {values!r}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class NoiseModel:
    sigma_odom: tuple[float, float, float] = (0.05, 0.05, 0.02)
    sigma_meas: tuple[float, float] = (0.10, 0.10)
    sigma_prior: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)

    def __post_init__(self):
        for name, n in (("sigma_odom", 3), ("sigma_meas", 2), ("sigma_prior", 3)):
            vals = _positive(name, getattr(self, name))
            if len(vals) != n:
                raise ParameterError(f"{name} needs {n} entries, got {len(vals)}")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class RobotParams:
    wheel_base: float = 0.5
    odom_subsample: int = 5

    def __post_init__(self):
        if not (math.isfinite(self.wheel_base) and self.wheel_base > 0):
            raise ParameterError(f"wheel_base must be > 0, got {self.wheel_base!r}")
        if int(self.odom_subsample) != self.odom_subsample or self.odom_subsample < 1:
            raise ParameterError(f"odom_subsample must be a positive integer, got {self.odom_subsample!r}")


def motion_delta(odom: WheelOdometry, theta: float, params: RobotParams) -> tuple[float, float, float]:
    """Pose change ``(dx, dy, dtheta)`` produced by one odometry interval.

    Translation runs along ``theta`` (the heading at the start of the
    interval); rotation is ``(v_r - v_l) / wheel_base``.
    """
    if not params.wheel_base > 0:
        raise ParameterError("wheel_base must be > 0")
    d = 0.5 * (odom.v_r + odom.v_l)
    return (d * math.cos(theta), d * math.sin(theta), (odom.v_r - odom.v_l) / params.wheel_base)


def odometry_residual(
    x_prev: Pose2,
    x_curr: Pose2,
    odom: WheelOdometry,
    params: RobotParams,
    theta_lin: float | None = None,
) -> np.ndarray:
    """Predicted-minus-observed pose change; ``theta_lin`` defaults to ``x_prev.theta``."""
    if theta_lin is None:
        theta_lin = x_prev.theta
    z = motion_delta(odom, theta_lin, params)
    return np.array(
        [
            z[0] - (x_curr.x - x_prev.x),
            z[1] - (x_curr.y - x_prev.y),
            wrap_angle(z[2] - (x_curr.theta - x_prev.theta)),
        ]
    )


_ODOMETRY_JACOBIAN = np.hstack([-np.eye(3), np.eye(3)])
_ODOMETRY_JACOBIAN.flags.writeable = False


def odometry_jacobian() -> np.ndarray:
    """d(x_curr - x_prev) / d(x_prev, x_curr), a constant 3x6 block."""
    return _ODOMETRY_JACOBIAN.copy()


def measurement_predict(pose: Pose2, lm: Landmark2) -> tuple[float, float]:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex, ey = lm.x - pose.x, lm.y - pose.y
    return (c * ex + s * ey, s * ex - c * ey)


def measurement_jacobian(pose: Pose2, lm: Landmark2) -> np.ndarray:
    """2x5 partials of the sighting w.r.t. ``(r_x, r_y, r_theta, l_x, l_y)``."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex, ey = lm.x - pose.x, lm.y - pose.y
    return np.array(
        [
            [-c, -s, -s * ex + c * ey, c, s],
            [-s, c, c * ex + s * ey, s, -c],
        ]
    )


def landmark_init(pose: Pose2, z: LandmarkMeasurement) -> Landmark2:
    """Global landmark position implied by one sighting from ``pose``."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Landmark2(
        z.tag_id,
        pose.x + z.dx * c + z.dy * s,
        pose.y + z.dx * s - z.dy * c,
    )


def prior_residual(x: Pose2, prior: Pose2) -> np.ndarray:
    return np.array([prior.x - x.x, prior.y - x.y, wrap_angle(prior.theta - x.theta)])


def prior_jacobian() -> np.ndarray:
    return -np.eye(3)


# Batched forms used by the solver. They must agree with the scalar functions above.


def motion_deltas(v_l, v_r, theta, wheel_base) -> np.ndarray:
    v_l, v_r, theta = (np.asarray(a, dtype=float) for a in (v_l, v_r, theta))
    d = 0.5 * (v_r + v_l)
    return np.stack([d * np.cos(theta), d * np.sin(theta), (v_r - v_l) / wheel_base], axis=-1)


def predict_measurements(poses: np.ndarray, points: np.ndarray) -> np.ndarray:
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    ex, ey = points[:, 0] - poses[:, 0], points[:, 1] - poses[:, 1]
    return np.stack([c * ex + s * ey, s * ex - c * ey], axis=-1)


def measurement_jacobians(poses: np.ndarray, points: np.ndarray) -> np.ndarray:
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    ex, ey = points[:, 0] - poses[:, 0], points[:, 1] - poses[:, 1]
    J = np.empty((len(poses), 2, 5))
    J[:, 0] = np.stack([-c, -s, -s * ex + c * ey, c, s], axis=-1)
    J[:, 1] = np.stack([-s, c, c * ex + s * ey, s, -c], axis=-1)
    return J


def init_landmarks(poses: np.ndarray, z: np.ndarray) -> np.ndarray:
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    return np.stack(
        [poses[:, 0] + z[:, 0] * c + z[:, 1] * s, poses[:, 1] + z[:, 0] * s - z[:, 1] * c],
        axis=-1,
    )


def dead_reckon(odometry, params: RobotParams, start: Pose2 | None = None) -> np.ndarray:
    """Chain :func:`motion_delta` from ``start``; returns ``len(odometry) + 1`` poses."""
    start = start or Pose2(0.0, 0.0, 0.0)
    out = np.empty((len(odometry) + 1, 3))
    out[0] = start.as_array()
    for i, od in enumerate(odometry):
        d = motion_delta(od, out[i, 2], params)
        out[i + 1, 0] = out[i, 0] + d[0]
        out[i + 1, 1] = out[i, 1] + d[1]
        out[i + 1, 2] = wrap_angle(out[i, 2] + d[2])
    return out

