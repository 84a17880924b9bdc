import math

import numpy as np
import pytest

from msam import io, merge, simgen
from msam.core import LandmarkId, PoseId, Se2Transform
from msam.errors import InvalidInputError
from msam.models import Dataset, LandmarkMeasurement, NoiseModel, RobotParams, WheelOdometry
from msam.solver import MeasurementFactor, OdometryFactor, PriorFactor, SolveConfig, assemble

NOISE = NoiseModel()
P = RobotParams()


def static_robot(rid, sightings):
    """One pose, no odometry; ``sightings`` = [(tag, dx, dy), ...]."""
    return Dataset(rid, (), tuple(LandmarkMeasurement(0, t, dx, dy) for t, dx, dy in sightings), P)


def two_robots(noiseless=True, seed=2):
    paths = (((0, 0), (6, 0), (6, 4), (0, 4), (0, 0)), ((-8, 1), (0, 1), (6, 1), (6, 3)))
    cfg = simgen.ScenarioConfig(
        paths=paths, n_landmarks=25, landmark_layout="corridor", seed=seed, noiseless=noiseless,
        noise=NoiseModel((0.02, 0.02, 0.01), (0.05, 0.05)),
    )
    ds, gt = simgen.generate(cfg)
    data = [io.subsample(d.odometry, d.measurements, d.params, i) for i, d in enumerate(ds)]
    return data, gt, cfg


def test_graph_structure():
    (d1, d2), _, cfg = two_robots()
    plan = merge.MergePlan(d1, d2, cfg.true_offset)
    g = merge.build_global_graph(plan, NOISE)
    assert plan.shared_tags == frozenset(d1.tags & d2.tags) and plan.shared_tags
    assert len(g.layout.landmark_tags) == len(d1.tags | d2.tags)
    assert g.count(PriorFactor) == 2
    assert g.count(OdometryFactor) == len(d1.odometry) + len(d2.odometry)
    assert g.count(MeasurementFactor) == len(d1.measurements) + len(d2.measurements)
    priors = [f for f in g.factors if isinstance(f, PriorFactor)]
    assert priors[0].var == PoseId(0, 0) and priors[0].value.as_array().tolist() == [0, 0, 0]
    T = cfg.true_offset
    assert priors[1].var == PoseId(1, 0)
    np.testing.assert_allclose(priors[1].value.as_array(), [T.t_x, T.t_y, T.theta])
    assert priors[1].sigma == NOISE.sigma_prior


def test_single_shared_tag_count():
    d1 = static_robot(0, [(1, 1, 0), (2, 2, 0)])
    d2 = static_robot(1, [(2, 1, 0), (3, 1, 1)])
    g = merge.build_global_graph(merge.MergePlan(d1, d2, Se2Transform()), NOISE)
    assert g.layout.landmark_tags == (1, 2, 3)


def test_disjoint_robots_identity_prior():
    d1 = static_robot(0, [(1, 1, 0)])
    d2 = static_robot(1, [(4, 2, 0)])
    g = merge.build_global_graph(merge.MergePlan(d1, d2, Se2Transform()), NOISE)
    assert len(g) == 1 + 1 + 1 + 1
    m = merge.solve_global(merge.MergePlan(d1, d2, Se2Transform()), NOISE)
    np.testing.assert_allclose(m.landmarks[1], [1, 0], atol=1e-9)
    np.testing.assert_allclose(m.landmarks[4], [2, 0], atol=1e-9)


def test_empty_dataset_rejected():
    with pytest.raises(InvalidInputError):
        merge.build_global_graph(merge.MergePlan(static_robot(0, [(1, 1, 0)]), Dataset(1, (), (), P), Se2Transform()), NOISE)
    with pytest.raises(InvalidInputError):
        merge.MergePlan(static_robot(0, []), static_robot(1, []), Se2Transform(math.nan, 0, 0))


def test_self_merge_keeps_landmarks(noisy_loop):
    ds, _, cfg = noisy_loop
    d = io.subsample(ds[0].odometry, ds[0].measurements, ds[0].params)
    tight = SolveConfig(rel_tol=1e-13, max_iterations=500)
    local = merge.solve_local(d, cfg.noise, tight)
    d2 = Dataset(1, d.odometry, d.measurements, d.params)
    m = merge.solve_global(merge.MergePlan(d, d2, Se2Transform()), cfg.noise, tight, local, local)
    assert set(m.landmarks) == set(local.landmarks)
    for t, v in local.landmarks.items():
        np.testing.assert_allclose(m.landmarks[t], v, atol=1e-6)
    assert m.origin_distance < 1e-6


def test_noiseless_exact_prior_matches_robot1_local():
    (d1, d2), gt, cfg = two_robots()
    local1 = merge.solve_local(d1, NOISE)
    m = merge.solve_global(merge.MergePlan(d1, d2, cfg.true_offset), NOISE)
    for t, v in local1.landmarks.items():
        np.testing.assert_allclose(m.landmarks[t], v, atol=1e-6)
    np.testing.assert_allclose(m.trajectories[0], local1.trajectories[0], atol=1e-6)
    assert m.origin_distance == pytest.approx(gt.origin_distance, abs=1e-6)
    assert len(m.landmarks) == len(d1.tags | d2.tags)


def test_weighted_toward_better_observed_robot():
    d1 = static_robot(0, [(5, 2.0, 0.0)] * 9)
    d2 = static_robot(1, [(5, 2.5, 0.0)])
    m = merge.solve_global(merge.MergePlan(d1, d2, Se2Transform()), NOISE)
    x = m.landmarks[5][0]
    assert abs(x - 2.0) < abs(x - 2.5)
    # weighted mean of the sightings, up to the slack of the origin priors
    assert x == pytest.approx((9 * 2.0 + 2.5) / 10, abs=1e-4)


def test_joint_residual_bounded_by_initialization():
    # the joint optimum can only be as good as or better than the stitched
    # local solutions plus robot 2's prior, evaluated at the initial point
    (d1, d2), _, cfg = two_robots(noiseless=False)
    l1, l2 = merge.solve_local(d1, NOISE), merge.solve_local(d2, NOISE, robot_id=1)
    plan = merge.MergePlan(d1, d2, cfg.true_offset)
    m = merge.solve_global(plan, NOISE, None, l1, l2)
    g = merge.build_global_graph(plan, NOISE)
    init = merge.global_initial_estimate(plan, l1, l2)
    assert m.solve.final_residual <= assemble(g, init).cost
    # sharing landmarks couples the robots, so the joint optimum is never
    # below the two separate optima
    assert m.solve.final_residual >= l1.solve.final_residual + l2.solve.final_residual - 1e-6
    assert len(m.landmarks) == len(d1.tags | d2.tags)


def test_initial_estimate_prefers_robot1():
    d1 = static_robot(0, [(5, 2.0, 0.0)])
    d2 = static_robot(1, [(5, 2.5, 0.0), (6, 1.0, 0.0)])
    T = Se2Transform(0.0, 10.0, 0.0)
    sv = merge.global_initial_estimate(merge.MergePlan(d1, d2, T))
    np.testing.assert_allclose(sv.landmarks()[5], [2.0, 0.0])
    np.testing.assert_allclose(sv.landmarks()[6], [11.0, 0.0])
    np.testing.assert_allclose(sv.pose(1, 0).as_array(), [10, 0, 0])


def test_origin_distance_of():
    assert merge.origin_distance_of({0: np.zeros((1, 3))}) == 0.0
    assert merge.origin_distance_of({0: np.zeros((2, 3)), 1: np.array([[3.0, 4.0, 1.0]])}) == 5.0


def test_local_frame_anchor(noisy_loop):
    ds, _, cfg = noisy_loop
    d = io.subsample(ds[0].odometry, ds[0].measurements, ds[0].params)
    m = merge.solve_local(d, cfg.noise)
    np.testing.assert_allclose(m.trajectories[0][0], [0, 0, 0], atol=1e-6)
    assert m.converged and m.origin_distance == 0.0
