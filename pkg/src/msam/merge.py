"""Local (single robot) and joint two-robot graph construction and solving."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from msam import models
from msam.core import LandmarkId, Pose2, PoseId, Se2Transform, StateVector
from msam.errors import InvalidInputError
from msam.models import Dataset, NoiseModel
from msam.solver import FactorGraph, SolveConfig, SolveResult, optimize

ORIGIN = Pose2(0.0, 0.0, 0.0)


@dataclass
class GlobalMap:
    """Solved trajectories and landmarks in one frame.

    ``origin_distance`` is the distance between the first poses of the first
    two robots (0 for a single-robot map).
    """

    trajectories: dict[int, np.ndarray]
    landmarks: dict[int, np.ndarray]
    origin_distance: float = 0.0
    converged: bool = True
    solve: SolveResult | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_state(cls, state: StateVector, converged: bool = True, solve=None) -> GlobalMap:
        traj = {r: state.poses(r).copy() for r in state.robot_poses}
        return cls(traj, state.landmarks(), origin_distance_of(traj), converged, solve)


def origin_distance_of(trajectories) -> float:
    robots = sorted(trajectories)
    if len(robots) < 2:
        return 0.0
    a, b = trajectories[robots[0]][0], trajectories[robots[1]][0]
    return math.hypot(b[0] - a[0], b[1] - a[1])


def add_robot_factors(graph: FactorGraph, robot_id: int, data: Dataset, noise: NoiseModel) -> None:
    """Odometry and landmark factors for one robot, in dataset order."""
    wb = data.params.wheel_base
    for k, od in enumerate(data.odometry):
        graph.add_odometry(PoseId(robot_id, k), PoseId(robot_id, k + 1), od, wb, noise.sigma_odom)
    for m in data.measurements:
        graph.add_measurement(PoseId(robot_id, m.state_id), LandmarkId(m.tag_id), m.dx, m.dy, noise.sigma_meas)


def initial_landmarks(poses: np.ndarray, data: Dataset) -> dict[int, np.ndarray]:
    """Landmark guesses from each tag's first sighting."""
    out = {}
    for m in data.measurements:
        if m.tag_id not in out:
            lm = models.landmark_init(Pose2.from_array(poses[m.state_id]), m)
            out[m.tag_id] = lm.xy
    return out


def _check(data: Dataset, which: str) -> None:
    if not data.odometry and not data.measurements:
        raise InvalidInputError(f"{which} dataset is empty")


def build_local_graph(data: Dataset, noise: NoiseModel, robot_id: int = 0) -> FactorGraph:
    _check(data, "robot")
    layout = StateVector({robot_id: data.n_poses}, tuple(sorted(data.tags)))
    graph = FactorGraph(layout)
    graph.add_prior(PoseId(robot_id, 0), ORIGIN, noise.sigma_prior)
    add_robot_factors(graph, robot_id, data, noise)
    return graph


def local_initial_estimate(data: Dataset, robot_id: int = 0) -> StateVector:
    poses = models.dead_reckon(data.odometry, data.params)
    return StateVector.from_estimates({robot_id: poses}, initial_landmarks(poses, data))


def solve_local(data: Dataset, noise: NoiseModel | None = None, cfg: SolveConfig | None = None, robot_id: int = 0) -> GlobalMap:
    """Full SLAM for one robot in its own start frame."""
    noise = noise or NoiseModel()
    graph = build_local_graph(data, noise, robot_id)
    res = optimize(graph, local_initial_estimate(data, robot_id), cfg)
    return GlobalMap.from_state(res.estimate, res.converged, res)


@dataclass(frozen=True)
class MergePlan:
    """Two robots' data plus robot 2's origin expressed in robot 1's frame."""

    robot1: Dataset
    robot2: Dataset
    prior2: Se2Transform
    shared_tags: frozenset[int] = field(init=False)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.prior2.theta, self.prior2.t_x, self.prior2.t_y)):
            raise InvalidInputError("prior2 must be finite")
        object.__setattr__(self, "shared_tags", frozenset(self.robot1.tags & self.robot2.tags))


# Robot ids inside the joint graph are positional, so a dataset can be merged with itself.
ROBOT1, ROBOT2 = 0, 1


def build_global_graph(plan: MergePlan, noise: NoiseModel) -> FactorGraph:
    """Both robots' factors over one shared landmark set, anchored at robot 1's origin.

    Robot 2's first pose gets a prior at ``prior2``; measurements stay in the
    robot-centric frames they were recorded in.
    """
    _check(plan.robot1, "robot 1")
    _check(plan.robot2, "robot 2")
    tags = tuple(sorted(plan.robot1.tags | plan.robot2.tags))
    layout = StateVector({ROBOT1: plan.robot1.n_poses, ROBOT2: plan.robot2.n_poses}, tags)
    graph = FactorGraph(layout)
    graph.add_prior(PoseId(ROBOT1, 0), ORIGIN, noise.sigma_prior)
    add_robot_factors(graph, ROBOT1, plan.robot1, noise)
    graph.add_prior(PoseId(ROBOT2, 0), plan.prior2.as_pose(), noise.sigma_prior)
    add_robot_factors(graph, ROBOT2, plan.robot2, noise)
    return graph


def global_initial_estimate(plan: MergePlan, local1: GlobalMap | None = None, local2: GlobalMap | None = None) -> StateVector:
    """Dead reckoning for both robots, robot 2 carried through ``prior2``.

    Landmarks seen by robot 1 start at robot 1's estimate; the rest at
    robot 2's estimate mapped into robot 1's frame. Solved local maps, when
    given, supply those estimates instead of first-sighting guesses.
    """
    p1 = models.dead_reckon(plan.robot1.odometry, plan.robot1.params)
    p2 = models.dead_reckon(plan.robot2.odometry, plan.robot2.params, start=plan.prior2.as_pose())
    lm1 = local1.landmarks if local1 is not None else initial_landmarks(p1, plan.robot1)
    if local2 is not None:
        lm2 = {t: plan.prior2.apply(v) for t, v in local2.landmarks.items()}
    else:
        lm2 = initial_landmarks(p2, plan.robot2)
    landmarks = dict(lm2)
    landmarks.update(lm1)
    wanted = plan.robot1.tags | plan.robot2.tags
    return StateVector.from_estimates({ROBOT1: p1, ROBOT2: p2}, {t: landmarks[t] for t in wanted})


def solve_global(
    plan: MergePlan,
    noise: NoiseModel | None = None,
    cfg: SolveConfig | None = None,
    local1: GlobalMap | None = None,
    local2: GlobalMap | None = None,
) -> GlobalMap:
    noise = noise or NoiseModel()
    graph = build_global_graph(plan, noise)
    res = optimize(graph, global_initial_estimate(plan, local1, local2), cfg)
    return GlobalMap.from_state(res.estimate, res.converged, res)
