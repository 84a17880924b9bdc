"""Dataset CSV ingestion, map JSON export and SVG rendering.

CSV schemas (UTF-8, LF line endings, header required)::

    odometry.csv      state_id,v_l,v_r          per-interval wheel displacements [m]
    measurements.csv  state_id,tag_id,dx,dy     robot-frame landmark offsets [m]

Odometry row ``s`` moves the robot from state ``s`` to state ``s + 1``.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import os
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from msam.core import Se2Transform
from msam.errors import ParseError, SyncError
from msam.merge import GlobalMap, origin_distance_of
from msam.models import Dataset, LandmarkMeasurement, RobotParams, WheelOdometry

ODOMETRY_HEADER = ["state_id", "v_l", "v_r"]
MEASUREMENT_HEADER = ["state_id", "tag_id", "dx", "dy"]


def atomic_write(path, data: str | bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"}
        with os.fdopen(fd, mode, **kwargs) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path, header, parsers):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected header " + ",".join(header), path, 1) from None
        if [c.strip() for c in first] != header:
            raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", path, 1)
        for rec in reader:
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", path, reader.line_num)
            try:
                values = tuple(p(c.strip()) for p, c in zip(parsers, rec))
            except ValueError as exc:
                raise ParseError(str(exc), path, reader.line_num) from None
            rows.append((reader.line_num, values))
    return rows


def _int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError(f"negative id {s!r}")
    return v


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {s!r}")
    return v


def read_odometry_csv(path) -> list[WheelOdometry]:
    rows = _read_rows(path, ODOMETRY_HEADER, (_int, _float, _float))
    out = []
    for line, (sid, vl, vr) in rows:
        if out and sid <= out[-1].state_id:
            raise ParseError(f"state_id {sid} is not increasing", path, line)
        out.append(WheelOdometry(sid, vl, vr))
    return out


def read_measurements_csv(path) -> list[LandmarkMeasurement]:
    rows = _read_rows(path, MEASUREMENT_HEADER, (_int, _int, _float, _float))
    return [LandmarkMeasurement(sid, tag, dx, dy) for _, (sid, tag, dx, dy) in rows]


def subsample(odometry, measurements, params: RobotParams, robot_id: int = 0) -> Dataset:
    """Group odometry rows by ``params.odom_subsample`` and re-attach sightings.

    Displacements inside a group are summed. Each sighting moves to the
    surviving state with the greatest original id not above its own, and
    states are renumbered densely from 0.
    """
    n = params.odom_subsample
    odometry = list(odometry)
    if not odometry:
        if measurements:
            raise SyncError("measurements present but no odometry to synchronize against")
        return Dataset(robot_id, (), (), params)
    groups = [odometry[i : i + n] for i in range(0, len(odometry), n)]
    surviving = [g[0].state_id for g in groups] + [odometry[-1].state_id + 1]
    merged = [
        WheelOdometry(k, math.fsum(o.v_l for o in g), math.fsum(o.v_r for o in g)) for k, g in enumerate(groups)
    ]
    attached = []
    for m in measurements:
        if m.state_id < surviving[0]:
            raise SyncError(f"measurement of tag {m.tag_id} at state {m.state_id} precedes the first odometry row")
        if m.state_id > surviving[-1]:
            raise SyncError(f"measurement of tag {m.tag_id} at state {m.state_id} is past the last odometry row")
        k = bisect.bisect_right(surviving, m.state_id) - 1
        attached.append(LandmarkMeasurement(k, m.tag_id, m.dx, m.dy))
    attached.sort(key=lambda m: m.state_id)
    return Dataset(robot_id, merged, attached, params)


def load_dataset(odometry_file, measurements_file, params: RobotParams | None = None, robot_id: int = 0) -> Dataset:
    params = params or RobotParams()
    return subsample(read_odometry_csv(odometry_file), read_measurements_csv(measurements_file), params, robot_id)


def write_dataset(data: Dataset, odometry_file, measurements_file) -> None:
    """Inverse of the CSV readers (floats written with full round-trip precision)."""
    lines = [",".join(ODOMETRY_HEADER)]
    lines += [f"{o.state_id},{o.v_l!r},{o.v_r!r}" for o in data.odometry]
    atomic_write(odometry_file, "\n".join(lines) + "\n")
    lines = [",".join(MEASUREMENT_HEADER)]
    lines += [f"{m.state_id},{m.tag_id},{m.dx!r},{m.dy!r}" for m in data.measurements]
    atomic_write(measurements_file, "\n".join(lines) + "\n")


def _g9(v) -> float:
    return float(f"{float(v):.9g}")


def map_to_dict(m: GlobalMap) -> dict:
    robots = [
        {"id": int(r), "poses": [[_g9(v) for v in p] for p in np.asarray(m.trajectories[r])]}
        for r in sorted(m.trajectories)
    ]
    landmarks = [
        {"tag_id": int(t), "x": _g9(m.landmarks[t][0]), "y": _g9(m.landmarks[t][1])} for t in sorted(m.landmarks)
    ]
    rounded = {r["id"]: np.asarray(r["poses"]).reshape(-1, 3) for r in robots}
    return {
        "robots": robots,
        "landmarks": landmarks,
        "origin_distance_m": _g9(origin_distance_of(rounded)),
        "converged": bool(m.converged),
    }


def dumps(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n"


def export_map(m: GlobalMap, path) -> None:
    """Write ``m`` as JSON; floats keep 9 significant digits.

    The stored origin distance is recomputed from the rounded poses so the
    file is self-consistent.
    """
    try:
        atomic_write(path, dumps(map_to_dict(m)))
    except OSError as exc:
        raise OSError(f"cannot write map to {path}: {exc}") from exc


def map_from_dict(doc: dict) -> GlobalMap:
    try:
        traj = {int(r["id"]): np.asarray(r["poses"], dtype=float).reshape(-1, 3) for r in doc["robots"]}
        lms = {int(l["tag_id"]): np.array([float(l["x"]), float(l["y"])]) for l in doc["landmarks"]}
        return GlobalMap(traj, lms, float(doc["origin_distance_m"]), bool(doc.get("converged", True)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed map document: {exc}") from None


def load_map(path) -> GlobalMap:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, exc.lineno) from None
    return map_from_dict(doc)


def transform_to_dict(T: Se2Transform, inliers=(), mean_inlier_error: float = 0.0) -> dict:
    return {
        "theta": T.theta,
        "t_x": T.t_x,
        "t_y": T.t_y,
        "inliers": sorted(int(i) for i in inliers),
        "mean_inlier_error_m": float(mean_inlier_error),
    }


def load_transform(path) -> Se2Transform:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
            return Se2Transform(float(doc["theta"]), float(doc["t_x"]), float(doc["t_y"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed transform file: {exc}", path) from None


# --- SVG -----------------------------------------------------------------

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _asterisk(parent, cx, cy, r, color, width, tag):
    g = ET.SubElement(parent, "g", {"class": "landmark asterisk", "data-tag": str(tag)})
    for k in range(3):
        a = math.pi * k / 3
        dx, dy = r * math.cos(a), r * math.sin(a)
        ET.SubElement(
            g,
            "line",
            {
                "x1": _fmt(cx - dx),
                "y1": _fmt(cy - dy),
                "x2": _fmt(cx + dx),
                "y2": _fmt(cy + dy),
                "stroke": color,
                "stroke-width": _fmt(width),
            },
        )


def _xy(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    if traj.size == 0:
        return np.zeros((0, 2))
    return np.atleast_2d(traj)[:, :2]


def render_svg(maps, path) -> None:
    """Overlay trajectories and landmarks of one or more maps in a single SVG.

    ``maps`` is a sequence of ``(label, trajectory, landmarks)`` where
    ``trajectory`` is an ``(n, 2+)`` array and ``landmarks`` maps tag id to
    ``(x, y)``. The first map's landmarks are drawn as circles, the others as
    asterisks. World ``y`` points up.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("render_svg needs at least one map")
    maps = [(label, _xy(traj), lms) for label, traj, lms in maps]
    pts = []
    for _, xy, lms in maps:
        pts += list(xy)
        pts += [np.asarray(v, dtype=float) for v in lms.values()]
    pts = np.array(pts) if pts else np.zeros((1, 2))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float(np.max(hi - lo)), 1.0)
    pad = 0.08 * span
    x0, y0 = lo[0] - pad, -hi[1] - pad
    w, h = (hi[0] - lo[0]) + 2 * pad, (hi[1] - lo[1]) + 2 * pad
    legend_h = 0.06 * span * len(maps)
    stroke = span / 400
    mark = span / 120
    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "version": "1.1",
            "viewBox": " ".join(_fmt(v) for v in (x0, y0 - legend_h, w, h + legend_h)),
            "width": "800",
            "height": _fmt(800 * (h + legend_h) / w),
        },
    )
    ET.SubElement(svg, "rect", {"x": _fmt(x0), "y": _fmt(y0 - legend_h), "width": _fmt(w), "height": _fmt(h + legend_h), "fill": "white"})
    for i, (label, traj, lms) in enumerate(maps):
        color = COLORS[i % len(COLORS)]
        g = ET.SubElement(svg, "g", {"class": "map", "data-label": str(label)})
        xy = traj
        if len(xy) == 1:
            xy = np.vstack([xy, xy])
        ET.SubElement(
            g,
            "polyline",
            {
                "class": "trajectory",
                "points": " ".join(f"{_fmt(p[0])},{_fmt(-p[1])}" for p in xy),
                "fill": "none",
                "stroke": color,
                "stroke-width": _fmt(stroke),
            },
        )
        for tag in sorted(lms):
            x, y = (float(v) for v in lms[tag])
            if i == 0:
                ET.SubElement(
                    g,
                    "circle",
                    {
                        "class": "landmark",
                        "data-tag": str(tag),
                        "cx": _fmt(x),
                        "cy": _fmt(-y),
                        "r": _fmt(mark),
                        "fill": "none",
                        "stroke": color,
                        "stroke-width": _fmt(stroke),
                    },
                )
            else:
                _asterisk(g, x, -y, mark, color, stroke, tag)
    legend = ET.SubElement(svg, "g", {"class": "legend"})
    font = 0.035 * span
    for i, (label, _, _) in enumerate(maps):
        ly = y0 - legend_h + (i + 0.8) * 0.06 * span
        ET.SubElement(
            legend,
            "line",
            {
                "x1": _fmt(x0 + pad * 0.3),
                "y1": _fmt(ly - font * 0.3),
                "x2": _fmt(x0 + pad * 0.3 + 2 * font),
                "y2": _fmt(ly - font * 0.3),
                "stroke": COLORS[i % len(COLORS)],
                "stroke-width": _fmt(stroke * 3),
            },
        )
        text = ET.SubElement(legend, "text", {"x": _fmt(x0 + pad * 0.3 + 2.5 * font), "y": _fmt(ly), "font-size": _fmt(font), "font-family": "sans-serif"})
        text.text = f"{label} ({'o' if i == 0 else '*'})"
    body = ET.tostring(svg, encoding="unicode")
    atomic_write(path, '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n")


def map_layers(m: GlobalMap, label: str = "map") -> list:
    """One render layer per robot; landmarks go with the first robot."""
    layers = []
    for i, r in enumerate(sorted(m.trajectories)):
        layers.append((f"{label} robot {r}", m.trajectories[r], m.landmarks if i == 0 else {}))
    return layers or [(label, np.zeros((0, 3)), m.landmarks)]
