"""Landmark-based SLAM for ground robots and two-robot map merging."""

from msam.align import AlignmentResult, Correspondence, RansacConfig, align_maps, ransac_align
from msam.core import Landmark2, LandmarkId, Pose2, PoseId, Se2Transform, StateVector, wrap_angle
from msam.merge import GlobalMap, MergePlan, build_global_graph, solve_global, solve_local
from msam.models import Dataset, LandmarkMeasurement, NoiseModel, RobotParams, WheelOdometry
from msam.solver import FactorGraph, SolveConfig, SolveResult, assemble, optimize, solve_normal_equations

__version__ = "0.1.0"
