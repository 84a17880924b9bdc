import json
import subprocess
import sys

import numpy as np
import pytest

from msam import cli, io, simgen
from msam.core import Se2Transform
from msam.merge import GlobalMap


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--seed", 3, "--out", out) == 0
    return out


def small_config(path, **kw):
    cfg = simgen.ScenarioConfig(
        paths=(((0, 0), (5, 0), (5, 4), (0, 4), (0, 0)),), n_landmarks=12, landmark_layout="corridor", seed=1, **kw
    )
    path.write_text(json.dumps(simgen.scenario_to_dict(cfg)))
    return path


def test_simulate_outputs(sim):
    names = sorted(p.name for p in sim.iterdir())
    assert names == [
        "ground_truth.json", "robot1_measurements.csv", "robot1_odometry.csv",
        "robot2_measurements.csv", "robot2_odometry.csv",
    ]
    truth = json.loads((sim / "ground_truth.json").read_text())
    assert truth["origin_distance_m"] == pytest.approx(38.05)


def test_simulate_deterministic(tmp_path, sim):
    assert run("simulate", "--seed", 3, "--out", tmp_path) == 0
    for p in sim.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_simulate_usage_errors(tmp_path):
    assert run("simulate", "--seed", 1) == 2
    (tmp_path / "bad.json").write_text('{"n_landmarks": -4, "paths": [[[0,0],[1,0]]]}')
    assert run("simulate", "--config", tmp_path / "bad.json", "--out", tmp_path / "o") == 2
    (tmp_path / "junk.json").write_text("[1, 2")
    assert run("simulate", "--config", tmp_path / "junk.json", "--out", tmp_path / "o") == 2
    assert run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "o") == 2


def test_solve_noiseless(tmp_path, capsys):
    cfg = small_config(tmp_path / "s.json", noiseless=True)
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    capsys.readouterr()
    rc = run(
        "solve", "--odom", tmp_path / "robot1_odometry.csv", "--meas", tmp_path / "robot1_measurements.csv",
        "--out", tmp_path / "m.json", "--svg", tmp_path / "m.svg", "--png", tmp_path / "m.png",
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "iterations:" in out
    residual = float(out.split("final_residual:")[1].split()[0])
    assert residual < 1e-10
    for name in ("m.json", "m.svg", "m.png"):
        assert (tmp_path / name).stat().st_size > 0
    assert json.loads((tmp_path / "m.json").read_text())["converged"] is True


def test_solve_unknown_flag_and_bad_input(tmp_path):
    assert run("solve", "--odom", "a", "--meas", "b", "--out", "c", "--bogus") == 2
    assert run("solve", "--odom", tmp_path / "missing.csv", "--meas", tmp_path / "m.csv", "--out", tmp_path / "o.json") == 2
    (tmp_path / "o.csv").write_text("state_id,v_l,v_r\n0,1,x\n")
    (tmp_path / "m.csv").write_text("state_id,tag_id,dx,dy\n")
    assert run("solve", "--odom", tmp_path / "o.csv", "--meas", tmp_path / "m.csv", "--out", tmp_path / "o.json") == 2
    assert run("solve", "--odom", "a", "--meas", "b", "--out", "c", "--wheel-base", "0") == 2


def test_solve_not_converged_exit_3(tmp_path, sim):
    rc = run(
        "solve", "--odom", sim / "robot1_odometry.csv", "--meas", sim / "robot1_measurements.csv",
        "--out", tmp_path / "m.json", "--max-iters", 1,
    )
    assert rc == 3
    assert json.loads((tmp_path / "m.json").read_text())["converged"] is False


def export(path, landmarks):
    io.export_map(GlobalMap({0: np.zeros((1, 3))}, {t: np.asarray(v, float) for t, v in landmarks.items()}), path)
    return path


def test_align_identity_and_planted(tmp_path):
    rng = np.random.default_rng(0)
    lms = {t: rng.uniform(-10, 10, 2) for t in range(10)}
    a = export(tmp_path / "a.json", lms)
    assert run("align", "--map1", a, "--map2", a, "--out", tmp_path / "t.json") == 0
    doc = json.loads((tmp_path / "t.json").read_text())
    assert abs(doc["theta"]) < 1e-9 and abs(doc["t_x"]) < 1e-9 and abs(doc["t_y"]) < 1e-9
    assert doc["inliers"] == list(range(10))
    T = Se2Transform(2.0, -4.0, 7.0)
    b = export(tmp_path / "b.json", {t: T.inverse().apply(v) for t, v in lms.items()})
    assert run("align", "--map1", a, "--map2", b, "--seed", 5, "--out", tmp_path / "t2.json") == 0
    assert io.load_transform(tmp_path / "t2.json").theta == pytest.approx(2.0, abs=1e-6)
    assert run("align", "--map1", a, "--map2", b, "--seed", 5, "--out", tmp_path / "t3.json") == 0
    assert (tmp_path / "t2.json").read_bytes() == (tmp_path / "t3.json").read_bytes()


def test_align_failure_exit_4(tmp_path):
    a = export(tmp_path / "a.json", {1: (0, 0), 2: (1, 1)})
    b = export(tmp_path / "b.json", {2: (0, 0), 3: (1, 1)})
    assert run("align", "--map1", a, "--map2", b, "--out", tmp_path / "t.json") == 4
    assert not (tmp_path / "t.json").exists()


def test_merge_self_with_identity(tmp_path, capsys):
    cfg = small_config(tmp_path / "s.json")
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    pair = f"{tmp_path / 'robot1_odometry.csv'},{tmp_path / 'robot1_measurements.csv'}"
    io.atomic_write(tmp_path / "id.json", io.dumps(io.transform_to_dict(Se2Transform())))
    assert run("solve", "--odom", tmp_path / "robot1_odometry.csv", "--meas", tmp_path / "robot1_measurements.csv", "--out", tmp_path / "local.json") == 0
    capsys.readouterr()
    rc = run("merge", "--robot1", pair, "--robot2", pair, "--prior", tmp_path / "id.json", "--out", tmp_path / "g.json", "--svg", tmp_path / "g.svg")
    assert rc == 0
    assert "origin_distance_m:" in capsys.readouterr().out
    local, merged = io.load_map(tmp_path / "local.json"), io.load_map(tmp_path / "g.json")
    assert set(local.landmarks) == set(merged.landmarks)
    for t in local.landmarks:
        np.testing.assert_allclose(merged.landmarks[t], local.landmarks[t], atol=1e-3)
    assert (tmp_path / "g.svg").exists()


def test_merge_bad_pair_and_prior(tmp_path):
    assert run("merge", "--robot1", "onlyone", "--robot2", "a,b", "--prior", "p", "--out", "o") == 2
    assert run("merge", "--robot1", "a,b", "--robot2", "a,b", "--prior", tmp_path / "none.json", "--out", tmp_path / "o") == 2


def test_entry_point_subprocess(tmp_path):
    r = subprocess.run([sys.executable, "-m", "msam.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
    r = subprocess.run([sys.executable, "-m", "msam.cli", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2
