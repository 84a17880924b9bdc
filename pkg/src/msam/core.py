"""Planar geometry primitives and the flat state vector layout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

import numpy as np

from msam.errors import InvalidInputError, VariableLookupError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise InvalidInputError(f"cannot wrap non-finite angle {a!r}")
    if -math.pi < a <= math.pi:
        return a
    out = math.remainder(a, TWO_PI)
    return math.pi if out <= -math.pi else out


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("cannot wrap non-finite angles")
    out = a.copy()
    outside = ~((a > -np.pi) & (a <= np.pi))
    if np.any(outside):
        out[outside] = [wrap_angle(v) for v in a[outside]]
    return out


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, v) -> Pose2:
        return cls(v[0], v[1], v[2])


@dataclass(frozen=True)
class Landmark2:
    tag_id: int
    x: float
    y: float

    def __post_init__(self):
        if int(self.tag_id) != self.tag_id or self.tag_id < 0:
            raise InvalidInputError(f"tag_id must be a non-negative integer, got {self.tag_id!r}")
        object.__setattr__(self, "tag_id", int(self.tag_id))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Se2Transform:
    """Rigid planar transform ``p -> R(theta) p + t``."""

    theta: float = 0.0
    t_x: float = 0.0
    t_y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "t_x", float(self.t_x))
        object.__setattr__(self, "t_y", float(self.t_y))

    @classmethod
    def identity(cls) -> Se2Transform:
        return cls(0.0, 0.0, 0.0)

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y])

    def as_matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform a single (2,) point or an (n, 2) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: Se2Transform) -> Se2Transform:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        t = self.rotation @ other.translation + self.translation
        return Se2Transform(self.theta + other.theta, t[0], t[1])

    def inverse(self) -> Se2Transform:
        t = -(self.rotation.T @ self.translation)
        return Se2Transform(-self.theta, t[0], t[1])

    def as_pose(self) -> Pose2:
        return Pose2(self.t_x, self.t_y, self.theta)

    def transform_pose(self, pose: Pose2) -> Pose2:
        p = self.apply([pose.x, pose.y])
        return Pose2(p[0], p[1], pose.theta + self.theta)


def apply_transform(T: Se2Transform, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError(f"point must be finite, got {p!r}")
    c, s = math.cos(T.theta), math.sin(T.theta)
    return (c * x - s * y + T.t_x, s * x + c * y + T.t_y)


@dataclass(frozen=True, order=True)
class PoseId:
    robot_id: int
    timestep: int


@dataclass(frozen=True, order=True)
class LandmarkId:
    tag_id: int


VarId = Union[PoseId, LandmarkId]


@dataclass(frozen=True, eq=False)
class StateVector:
    """Flat state: every robot's poses (ascending robot id), then landmarks by tag id.

    Poses occupy 3 scalars ``(x, y, theta)`` and landmarks 2 scalars ``(x, y)``.
    ``values`` is read-only; use :meth:`with_values` to derive a new state.
    """

    robot_poses: Mapping[int, int]
    landmark_tags: tuple[int, ...] = ()
    values: np.ndarray = None
    _robot_offset: dict = field(init=False, repr=False)
    _landmark_pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        robots = {int(r): int(n) for r, n in sorted(self.robot_poses.items())}
        if any(n < 0 for n in robots.values()):
            raise InvalidInputError("pose counts must be non-negative")
        tags = tuple(sorted(int(t) for t in self.landmark_tags))
        if len(set(tags)) != len(tags):
            raise InvalidInputError("landmark tag ids must be unique")
        offsets, cursor = {}, 0
        for r, n in robots.items():
            offsets[r] = cursor
            cursor += 3 * n
        object.__setattr__(self, "robot_poses", robots)
        object.__setattr__(self, "landmark_tags", tags)
        object.__setattr__(self, "_robot_offset", offsets)
        object.__setattr__(self, "_landmark_pos", {t: i for i, t in enumerate(tags)})
        dim = cursor + 2 * len(tags)
        vals = np.zeros(dim) if self.values is None else np.array(self.values, dtype=float)
        if vals.shape != (dim,):
            raise InvalidInputError(f"values must have shape ({dim},), got {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_poses(self) -> int:
        return sum(self.robot_poses.values())

    @property
    def landmark_offset(self) -> int:
        return 3 * self.n_poses

    @property
    def dim(self) -> int:
        return self.landmark_offset + 2 * len(self.landmark_tags)

    def index_of(self, var: VarId) -> int:
        if isinstance(var, PoseId):
            n = self.robot_poses.get(var.robot_id)
            if n is None or not 0 <= var.timestep < n:
                raise VariableLookupError(f"unknown variable {var}")
            return self._robot_offset[var.robot_id] + 3 * var.timestep
        if isinstance(var, LandmarkId):
            pos = self._landmark_pos.get(var.tag_id)
            if pos is None:
                raise VariableLookupError(f"unknown variable {var}")
            return self.landmark_offset + 2 * pos
        raise VariableLookupError(f"not a variable id: {var!r}")

    def variables(self) -> Iterator[VarId]:
        for r, n in self.robot_poses.items():
            for t in range(n):
                yield PoseId(r, t)
        for tag in self.landmark_tags:
            yield LandmarkId(tag)

    def variable_at(self, offset: int) -> VarId:
        """Inverse of :meth:`index_of` for any scalar offset inside a block."""
        if not 0 <= offset < self.dim:
            raise VariableLookupError(f"offset {offset} outside state of dimension {self.dim}")
        if offset >= self.landmark_offset:
            return LandmarkId(self.landmark_tags[(offset - self.landmark_offset) // 2])
        for r, start in self._robot_offset.items():
            if offset < start + 3 * self.robot_poses[r]:
                return PoseId(r, (offset - start) // 3)
        raise AssertionError("unreachable")

    def theta_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        mask[2 : self.landmark_offset : 3] = True
        return mask

    def with_values(self, values) -> StateVector:
        return StateVector(self.robot_poses, self.landmark_tags, values)

    def poses(self, robot_id: int) -> np.ndarray:
        """(n, 3) array of one robot's poses."""
        start = self.index_of(PoseId(robot_id, 0)) if self.robot_poses.get(robot_id) else 0
        n = self.robot_poses[robot_id]
        return self.values[start : start + 3 * n].reshape(n, 3)

    def pose(self, robot_id: int, timestep: int) -> Pose2:
        i = self.index_of(PoseId(robot_id, timestep))
        return Pose2.from_array(self.values[i : i + 3])

    def landmark(self, tag_id: int) -> Landmark2:
        i = self.index_of(LandmarkId(tag_id))
        return Landmark2(tag_id, self.values[i], self.values[i + 1])

    def landmarks(self) -> dict[int, np.ndarray]:
        block = self.values[self.landmark_offset :].reshape(-1, 2)
        return {t: block[i].copy() for i, t in enumerate(self.landmark_tags)}

    @classmethod
    def from_estimates(
        cls,
        poses: Mapping[int, np.ndarray],
        landmarks: Mapping[int, Iterable[float]],
    ) -> StateVector:
        robots = {int(r): len(p) for r, p in poses.items()}
        tags = sorted(int(t) for t in landmarks)
        parts = [np.asarray(poses[r], dtype=float).reshape(-1) for r in sorted(poses)]
        parts += [np.asarray(landmarks[t], dtype=float).reshape(2) for t in tags]
        vals = np.concatenate(parts) if parts else np.zeros(0)
        return cls(robots, tuple(tags), vals)


def index_of(sv: StateVector, var: VarId) -> int:
    return sv.index_of(var)
