"""``msam`` command line: simulate, solve, align, merge.

Exit codes: 0 success, 2 usage or bad input, 3 non-convergence,
4 alignment failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from msam import io, merge, simgen
from msam.align import RansacConfig, align_maps
from msam.errors import (
    AlignmentError,
    DegenerateSampleError,
    InsufficientDataError,
    MsamError,
    NonConvergenceError,
)
from msam.models import NoiseModel, RobotParams
from msam.solver import SolveConfig

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_ALIGN = 0, 2, 3, 4

log = logging.getLogger("msam")


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _pair(text: str) -> tuple[Path, Path]:
    parts = text.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected ODOM,MEAS, got {text!r}")
    return Path(parts[0]), Path(parts[1])


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text}")
    return v


def _params(args) -> RobotParams:
    return RobotParams(wheel_base=args.wheel_base, odom_subsample=args.subsample)


def _solve_cfg(args) -> SolveConfig:
    return SolveConfig(max_iterations=args.max_iters, heading_jacobian=args.exact_jacobian)


def _figures(m: merge.GlobalMap, args, label: str) -> None:
    layers = io.map_layers(m, label)
    if args.svg:
        io.render_svg(layers, args.svg)
    if args.png:
        from msam.plotting import render_png

        render_png(layers, args.png, title=label)


def _finish(m: merge.GlobalMap, args, label: str) -> None:
    io.export_map(m, args.out)
    _figures(m, args, label)


# --- commands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read scenario {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise CliError("scenario file must hold a JSON object")
        try:
            cfg = simgen.scenario_from_dict(doc)
        except (TypeError, ValueError) as exc:
            raise CliError(f"bad scenario {args.config}: {exc}") from None
    else:
        cfg = simgen.two_robot_scenario()
    if args.seed is not None:
        cfg = simgen.scenario_from_dict({**simgen.scenario_to_dict(cfg), "seed": args.seed})

    datasets, truth = simgen.generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, data in enumerate(datasets, start=1):
        io.write_dataset(data, out / f"robot{i}_odometry.csv", out / f"robot{i}_measurements.csv")
    T = truth.true_offset
    doc = {
        "scenario": simgen.scenario_to_dict(cfg),
        "origin_distance_m": truth.origin_distance,
        "true_offset": {"theta": T.theta, "t_x": T.t_x, "t_y": T.t_y},
        "robots": [{"id": r, "poses": truth.poses[r].tolist()} for r in sorted(truth.poses)],
        "landmarks": [{"tag_id": t, "x": float(v[0]), "y": float(v[1])} for t, v in sorted(truth.landmarks.items())],
    }
    io.atomic_write(out / "ground_truth.json", io.dumps(doc))
    print(f"wrote {len(datasets)} robot datasets to {out}")
    print(f"origin_distance_m: {truth.origin_distance:.6f}")
    return EXIT_OK


def _solve_one(odom, meas, args, robot_id=0):
    data = io.load_dataset(odom, meas, _params(args), robot_id)
    try:
        return merge.solve_local(data, NoiseModel(), _solve_cfg(args), robot_id)
    except NonConvergenceError as exc:
        return merge.GlobalMap.from_state(exc.result.estimate, False, exc.result)


def cmd_solve(args) -> int:
    m = _solve_one(args.odom, args.meas, args)
    _finish(m, args, Path(args.odom).stem)
    print(f"iterations: {m.solve.iterations}")
    print(f"final_residual: {m.solve.final_residual:.12g}")
    if not m.converged:
        print("solver did not converge; best estimate written", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_align(args) -> int:
    m1, m2 = io.load_map(args.map1), io.load_map(args.map2)
    cfg = RansacConfig(iterations=args.iters, inlier_threshold=args.threshold, seed=args.seed)
    try:
        res = align_maps(m1.landmarks, m2.landmarks, cfg)
    except (InsufficientDataError, AlignmentError, DegenerateSampleError) as exc:
        raise CliError(f"alignment failed: {exc}", EXIT_ALIGN) from None
    T = res.transform
    io.atomic_write(args.out, io.dumps(io.transform_to_dict(T, res.inlier_ids, res.mean_inlier_error)))
    print(f"theta: {T.theta:.9f} t_x: {T.t_x:.6f} t_y: {T.t_y:.6f}")
    print(f"inliers: {len(res.inlier_ids)} mean_inlier_error_m: {res.mean_inlier_error:.6f}")
    return EXIT_OK


def cmd_merge(args) -> int:
    prior = io.load_transform(args.prior)
    d1 = io.load_dataset(*args.robot1, _params(args), merge.ROBOT1)
    d2 = io.load_dataset(*args.robot2, _params(args), merge.ROBOT2)
    plan = merge.MergePlan(d1, d2, prior)
    noise, cfg = NoiseModel(), _solve_cfg(args)
    locals_ = []
    for data, rid in ((d1, merge.ROBOT1), (d2, merge.ROBOT2)):
        try:
            locals_.append(merge.solve_local(data, noise, cfg, rid))
        except NonConvergenceError:
            locals_.append(None)
    try:
        m = merge.solve_global(plan, noise, cfg, *locals_)
    except NonConvergenceError as exc:
        m = merge.GlobalMap.from_state(exc.result.estimate, False, exc.result)
    _finish(m, args, "merged")
    print(f"iterations: {m.solve.iterations}")
    print(f"landmarks: {len(m.landmarks)}")
    print(f"origin_distance_m: {m.origin_distance:.6f}")
    if not m.converged:
        print("solver did not converge; best estimate written", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _solver_flags(p) -> None:
    p.add_argument("--wheel-base", type=_positive_float, default=0.5, help="wheel separation [m]")
    p.add_argument("--subsample", type=_positive_int, default=5, help="odometry rows per solver state")
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--exact-jacobian", action="store_true", help="include heading terms in odometry rows")
    p.add_argument("--out", required=True, help="map JSON to write")
    p.add_argument("--svg", help="also render an SVG figure")
    p.add_argument("--png", help="also render a PNG figure (matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msam", description="Landmark SLAM and two-robot map merging.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic robot datasets")
    p.add_argument("--config", help="scenario JSON (default: built-in two-robot scenario)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="full SLAM for one robot")
    p.add_argument("--odom", required=True)
    p.add_argument("--meas", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("align", help="RANSAC transform between two maps")
    p.add_argument("--map1", required=True)
    p.add_argument("--map2", required=True)
    p.add_argument("--threshold", type=_positive_float, default=0.5, help="inlier distance [m]")
    p.add_argument("--iters", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("merge", help="joint solve of two robots")
    p.add_argument("--robot1", type=_pair, required=True, metavar="ODOM,MEAS")
    p.add_argument("--robot2", type=_pair, required=True, metavar="ODOM,MEAS")
    p.add_argument("--prior", required=True, help="transform JSON from 'msam align'")
    _solver_flags(p)
    p.set_defaults(func=cmd_merge)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"msam {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (MsamError, OSError, ValueError) as exc:
        print(f"msam {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
