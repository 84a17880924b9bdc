"""Synthetic multi-robot datasets with ground truth.

Robots follow waypoint paths with the differential-drive model used by the
solver. Each coarse interval moves ``d`` along the current heading and then
turns by ``omega``. It is emitted as ``odom_rate_ratio`` odometry rows that
split the translation evenly and carry the whole turn in the last row. Rows
summed in groups of ``odom_rate_ratio`` therefore reproduce the coarse
motion exactly. Landmark sightings are only taken at coarse states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from msam import models
from msam.core import Se2Transform, wrap_angle, wrap_angles
from msam.errors import InvalidInputError
from msam.models import Dataset, LandmarkMeasurement, NoiseModel, RobotParams, WheelOdometry

LANDMARK_LAYOUTS = ("uniform", "corridor")


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario description; ``paths`` are world-frame waypoint lists, one per robot."""

    paths: tuple = ()
    n_landmarks: int = 50
    world_extent: tuple[float, float] = (40.0, 40.0)
    sensor_range: float = 6.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    odom_rate_ratio: int = 5
    step_length: float = 0.5
    max_turn: float = 0.35
    wheel_base: float = 0.5
    landmark_layout: str = "uniform"
    corridor_offset: tuple[float, float] = (0.8, 2.5)
    noiseless: bool = False

    def __post_init__(self):
        paths = tuple(tuple((float(x), float(y)) for x, y in p) for p in self.paths)
        object.__setattr__(self, "paths", paths)
        if self.n_landmarks < 0:
            raise InvalidInputError("n_landmarks must be >= 0")
        if not self.sensor_range > 0:
            raise InvalidInputError("sensor_range must be > 0")
        if self.odom_rate_ratio < 1 or not self.step_length > 0 or not self.max_turn > 0:
            raise InvalidInputError("odom_rate_ratio, step_length and max_turn must be positive")
        if self.landmark_layout not in LANDMARK_LAYOUTS:
            raise InvalidInputError(f"landmark_layout must be one of {LANDMARK_LAYOUTS}")

    @property
    def true_offset(self) -> Se2Transform:
        """Robot 2's start pose expressed in robot 1's start frame."""
        if len(self.paths) < 2:
            return Se2Transform.identity()
        return start_transform(self.paths[0]).inverse().compose(start_transform(self.paths[1]))


@dataclass
class GroundTruth:
    """True world-frame poses (one per odometry row, plus the start) and landmarks."""

    poses: dict[int, np.ndarray]
    landmarks: dict[int, np.ndarray]
    origin_distance: float
    true_offset: Se2Transform
    odom_rate_ratio: int

    def coarse_poses(self, robot_id: int) -> np.ndarray:
        return self.poses[robot_id][:: self.odom_rate_ratio]

    def in_frame_of(self, robot_id: int) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
        """Poses and landmarks re-expressed in ``robot_id``'s start frame."""
        start = self.poses[robot_id][0]
        T = Se2Transform(start[2], start[0], start[1]).inverse()
        poses = {}
        for r, p in self.poses.items():
            q = np.empty_like(p)
            q[:, :2] = T.apply(p[:, :2])
            q[:, 2] = wrap_angles(p[:, 2] + T.theta)
            poses[r] = q
        return poses, {t: T.apply(v) for t, v in self.landmarks.items()}


def start_transform(path) -> Se2Transform:
    (x0, y0), (x1, y1) = path[0], path[1]
    return Se2Transform(math.atan2(y1 - y0, x1 - x0), x0, y0)


def drive(path, step_length: float, max_turn: float) -> list[tuple[float, float]]:
    """Coarse ``(d, omega)`` controls that follow ``path`` from its first waypoint."""
    if len(path) < 2:
        raise InvalidInputError("each path needs at least 2 waypoints")
    x, y = path[0]
    theta = start_transform(path).theta
    controls = []
    target = 1
    guard = 0
    while target < len(path):
        guard += 1
        if guard > 1_000_000:
            raise InvalidInputError("path following did not terminate")
        tx, ty = path[target]
        dist = math.hypot(tx - x, ty - y)
        err = wrap_angle(math.atan2(ty - y, tx - x) - theta) if dist > 1e-12 else 0.0
        d = min(step_length, dist) if abs(err) < math.pi / 4 else 0.0
        x += d * math.cos(theta)
        y += d * math.sin(theta)
        if math.hypot(tx - x, ty - y) < 1e-9:
            x, y = tx, ty
            target += 1
        if target < len(path):
            tx, ty = path[target]
            omega = wrap_angle(math.atan2(ty - y, tx - x) - theta)
            omega = max(-max_turn, min(max_turn, omega))
        else:
            omega = 0.0
        if d == 0.0 and omega == 0.0:
            continue
        theta = wrap_angle(theta + omega)
        controls.append((d, omega))
    return controls


def _place_landmarks(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_landmarks
    if cfg.landmark_layout == "uniform" or not cfg.paths:
        w, h = cfg.world_extent
        return np.column_stack([rng.uniform(-w / 2, w / 2, n), rng.uniform(-h / 2, h / 2, n)])
    segments = [(np.array(a), np.array(b)) for p in cfg.paths for a, b in zip(p, p[1:])]
    lengths = np.array([np.linalg.norm(b - a) for a, b in segments])
    out = np.empty((n, 2))
    lo, hi = cfg.corridor_offset
    for i in range(n):
        k = rng.choice(len(segments), p=lengths / lengths.sum())
        a, b = segments[k]
        u = (b - a) / lengths[k]
        along = a + rng.uniform(0, 1) * (b - a)
        side = rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)
        out[i] = along + side * np.array([-u[1], u[0]])
    return out


def generate(cfg: ScenarioConfig) -> tuple[list[Dataset], GroundTruth]:
    """Simulate every robot in ``cfg.paths``; deterministic in ``cfg.seed``."""
    if not cfg.paths:
        raise InvalidInputError("scenario has no paths")
    rng = np.random.default_rng(cfg.seed)
    points = _place_landmarks(cfg, rng)
    landmarks = {t: points[t].copy() for t in range(cfg.n_landmarks)}
    so, sm = np.asarray(cfg.noise.sigma_odom), np.asarray(cfg.noise.sigma_meas)
    if cfg.noiseless:
        so, sm = so * 0.0, sm * 0.0
    n, wb = cfg.odom_rate_ratio, cfg.wheel_base
    params = RobotParams(wheel_base=wb, odom_subsample=n)

    datasets, true_poses = [], {}
    for robot_id, path in enumerate(cfg.paths):
        controls = drive(path, cfg.step_length, cfg.max_turn)
        start = start_transform(path).as_pose()
        odometry, measurements = [], []
        poses = [start.as_array()]
        row = 0
        for k in range(len(controls) + 1):
            pose = poses[-1]
            measurements += _sight(pose, row, points, cfg.sensor_range, sm, rng)
            if k == len(controls):
                break
            d, omega = controls[k]
            d_obs = d + rng.normal(0.0, so[0])
            w_obs = omega + rng.normal(0.0, so[2])
            for j in range(n):
                turn = omega if j == n - 1 else 0.0
                turn_obs = w_obs if j == n - 1 else 0.0
                odometry.append(
                    WheelOdometry(row, d_obs / n - 0.5 * wb * turn_obs, d_obs / n + 0.5 * wb * turn_obs)
                )
                c, s = math.cos(pose[2]), math.sin(pose[2])
                pose = np.array([pose[0] + d / n * c, pose[1] + d / n * s, wrap_angle(pose[2] + turn)])
                poses.append(pose)
                row += 1
        datasets.append(Dataset(robot_id, odometry, measurements, params))
        true_poses[robot_id] = np.array(poses)

    starts = [p[0] for p in true_poses.values()]
    dist = math.hypot(*(starts[1][:2] - starts[0][:2])) if len(starts) > 1 else 0.0
    return datasets, GroundTruth(true_poses, landmarks, dist, cfg.true_offset, n)


def _sight(pose, state_id, points, sensor_range, sigma, rng) -> list[LandmarkMeasurement]:
    if len(points) == 0:
        return []
    P = np.broadcast_to(pose, (len(points), 3))
    z = models.predict_measurements(P, points)
    dist = np.hypot(points[:, 0] - pose[0], points[:, 1] - pose[1])
    visible = np.flatnonzero((dist <= sensor_range) & (z[:, 0] >= 0.0))
    out = []
    for t in visible:
        noise = rng.normal(0.0, sigma)
        out.append(LandmarkMeasurement(state_id, int(t), z[t, 0] + noise[0], z[t, 1] + noise[1]))
    return out


# Loop-and-hallway layout: robot 1 circles a central block, robot 2 starts
# 38.05 m away, drives straight down a hallway into the loop and follows
# two of its sides. A bend before the shared part would turn robot 2's
# heading drift into a sideways offset of everything it maps afterwards.
LOOP_PATH = ((0.0, 0.0), (20.0, 0.0), (20.0, 12.0), (0.0, 12.0), (0.0, 0.0), (4.0, 0.0))
HALLWAY_PATH = ((-38.05, 0.0), (0.0, 0.0), (20.0, 0.0), (20.0, 12.0))


def two_robot_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    kwargs = dict(
        paths=(LOOP_PATH, HALLWAY_PATH),
        n_landmarks=50,
        landmark_layout="corridor",
        seed=seed,
    )
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "paths": [[list(p) for p in path] for path in cfg.paths],
        "n_landmarks": cfg.n_landmarks,
        "world_extent": list(cfg.world_extent),
        "sensor_range": cfg.sensor_range,
        "noise": {
            "sigma_odom": list(cfg.noise.sigma_odom),
            "sigma_meas": list(cfg.noise.sigma_meas),
            "sigma_prior": list(cfg.noise.sigma_prior),
        },
        "seed": cfg.seed,
        "odom_rate_ratio": cfg.odom_rate_ratio,
        "step_length": cfg.step_length,
        "max_turn": cfg.max_turn,
        "wheel_base": cfg.wheel_base,
        "landmark_layout": cfg.landmark_layout,
        "corridor_offset": list(cfg.corridor_offset),
        "noiseless": cfg.noiseless,
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    unknown = set(d) - set(ScenarioConfig.__dataclass_fields__)
    if unknown:
        raise InvalidInputError(f"unknown scenario keys: {sorted(unknown)}")
    if "noise" in d:
        d["noise"] = NoiseModel(**{k: tuple(v) for k, v in d["noise"].items()})
    for k in ("world_extent", "corridor_offset"):
        if k in d:
            d[k] = tuple(d[k])
    return ScenarioConfig(**d)

