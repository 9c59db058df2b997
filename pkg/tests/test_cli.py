import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from rprbox.cli import main
from rprbox.kinematics import Pose, inverse_kinematics, leg_angles
from rprbox.model import REFERENCE_GEOMETRY

REPO = Path(__file__).resolve().parents[1]
GEOM = str(REPO / "data" / "reference.geom")
SMALL_GRID = ["--n-theta1", "120", "--n-alpha", "120"]


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return Path(path).read_bytes()


@pytest.fixture(scope="module")
def small_cloud(tmp_path_factory):
    d = tmp_path_factory.mktemp("cloud")
    out = d / "cloud.csv"
    assert run("sweep", GEOM, "--rho1", "30:46:2", "-o", out, *SMALL_GRID) == 0
    return out


# -- slice ------------------------------------------------------------------


def test_slice_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "s.csv"
    assert run("slice", GEOM, "--rho1", 17, "-o", out, *SMALL_GRID, "--gnuplot") == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "rho1,rho2,rho3,alpha,theta1"
    assert len(lines) > 100
    manifest = json.loads(Path(f"{out}.manifest.json").read_text())
    assert manifest["command"] == "slice"
    assert manifest["parameters"]["slice"]["n_alpha"] == 120
    assert manifest["parameters"]["slice"]["tol_root"] == 1e-10
    assert manifest["geometry_fingerprint"] == REFERENCE_GEOMETRY.fingerprint()
    assert Path(f"{out}.gp").exists()


def test_slice_negative_rho1(tmp_path):
    assert run("slice", GEOM, "--rho1", -1, "-o", tmp_path / "s.csv") == 1


def test_slice_missing_geometry(tmp_path):
    assert run("slice", tmp_path / "nope.geom", "--rho1", 17, "-o", tmp_path / "s.csv") == 2


def test_slice_bad_geometry(tmp_path):
    bad = tmp_path / "bad.geom"
    bad.write_text(Path(GEOM).read_text().replace("d2 = 16.54", "d2 = 100"))
    assert run("slice", bad, "--rho1", 17, "-o", tmp_path / "s.csv") == 1


def test_unknown_flag_is_usage_error():
    assert run("slice", GEOM, "--rho1", 17, "--bogus") == 1


# -- sweep ------------------------------------------------------------------


def test_sweep_csv_matches_ply(small_cloud):
    rows = len(small_cloud.read_text().splitlines()) - 1
    ply = small_cloud.with_suffix(".ply").read_text().splitlines()
    assert f"element vertex {rows}" in ply
    manifest = json.loads(Path(f"{small_cloud}.manifest.json").read_text())
    assert manifest["parameters"]["points"] == rows
    assert manifest["parameters"]["domain"] == [[30.0, 46.0], [1e-9, 60.0], [1e-9, 60.0]]


def test_sweep_zero_step(tmp_path):
    assert run("sweep", GEOM, "--rho1", "0:50:0", "-o", tmp_path / "c.csv") == 1


def test_sweep_threads_do_not_change_output(tmp_path, small_cloud):
    out = tmp_path / "c.csv"
    assert run("sweep", GEOM, "--rho1", "30:46:2", "-o", out, "--threads", 3, *SMALL_GRID) == 0
    assert read(out) == read(small_cloud)


# -- maxbox -----------------------------------------------------------------


def test_maxbox_report(tmp_path, small_cloud):
    out = tmp_path / "box.json"
    assert run("maxbox", small_cloud, "--center", "35,25,45", "-o", out) == 0
    report = json.loads(out.read_text())
    assert report["half_width"] == pytest.approx(report["d_min"] - 0.1)
    assert report["d_min"] >= report["initial_clearance"]
    assert report["domain"][0] == [30.0, 46.0]
    assert report["geometry_fingerprint"] == REFERENCE_GEOMETRY.fingerprint()
    assert set(report["limits"]) == {"rho1", "rho2", "rho3"}


def test_maxbox_security_too_large(tmp_path, small_cloud):
    assert run("maxbox", small_cloud, "--center", "35,25,45", "--security", 50, "-o", tmp_path / "b.json") == 1


def test_maxbox_center_outside(small_cloud):
    assert run("maxbox", small_cloud, "--center", "5,25,45") == 1


def test_maxbox_missing_cloud(tmp_path):
    assert run("maxbox", tmp_path / "none.csv", "--center", "35,25,45") == 2


# -- image ------------------------------------------------------------------


@pytest.fixture(scope="module")
def box_file(tmp_path_factory, small_cloud):
    out = tmp_path_factory.mktemp("box") / "box.json"
    assert run("maxbox", small_cloud, "--center", "35,25,45", "-o", out) == 0
    return out


def test_image_writes_samples(tmp_path, box_file):
    out = tmp_path / "ws.csv"
    assert run("image", GEOM, box_file, "--n-per-axis", 4, "-o", out, "--ply", "--gnuplot") == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,alpha,rho1,rho2,rho3,det,aspect"
    aspects = {row.split(",")[-1] for row in lines[1:]}
    assert aspects == {"+", "-"}
    manifest = json.loads(Path(f"{out}.manifest.json").read_text())
    groups = manifest["parameters"]["groups"]
    assert sum(groups.values()) == len(lines) - 1
    assert out.with_suffix(".ply").exists()


def test_image_missing_box(tmp_path):
    assert run("image", GEOM, tmp_path / "missing.json", "-o", tmp_path / "ws.csv") == 2


def test_image_geometry_mismatch(tmp_path, box_file):
    other = tmp_path / "other.geom"
    other.write_text(Path(GEOM).read_text().replace("a3y = 10", "a3y = 11"))
    assert run("image", other, box_file, "--n-per-axis", 3, "-o", tmp_path / "ws.csv") == 1


# -- check ------------------------------------------------------------------


def check_json(capsys, *argv):
    assert run("check", GEOM, *argv) == 0
    return json.loads(capsys.readouterr().out)


def test_check_degenerate_leg(capsys):
    report = check_json(capsys, "--pose", "0,0,0")
    assert report["degenerate_leg"] == 1


def parallel_leg_pose(g, rho1=30.0):
    """Pose with all three legs along one direction u = (cos phi, sin phi).

    Leg i ends at A_i + t_i u; |B2 - B1| = d1 and |B3 - B1| = d3 fix t2, t3
    for each phi, and phi is then solved from |B3 - B2| = d2.
    """
    a2, a3 = np.array([g.a2x, 0.0]), np.array([g.a3x, g.a3y])

    def offsets(phi):
        u = np.array([math.cos(phi), math.sin(phi)])
        t2 = -a2 @ u + math.sqrt((a2 @ u) ** 2 - a2 @ a2 + g.d1**2)
        t3 = -a3 @ u + math.sqrt((a3 @ u) ** 2 - a3 @ a3 + g.d3**2)
        return u, t2, t3

    def gap(phi):
        u, t2, t3 = offsets(phi)
        return np.linalg.norm(a3 + t3 * u - a2 - t2 * u) - g.d2

    phi = brentq(gap, 0.3, 0.6, xtol=1e-15)
    u, t2, _ = offsets(phi)
    b1, b2 = rho1 * u, a2 + (rho1 + t2) * u
    return Pose(float(b1[0]), float(b1[1]), math.atan2(b2[1] - b1[1], b2[0] - b1[0]))


def test_check_parallel_legs(capsys):
    pose = parallel_leg_pose(REFERENCE_GEOMETRY)
    t = leg_angles(REFERENCE_GEOMETRY, pose)
    assert t.theta2 == pytest.approx(t.theta1, abs=1e-12)
    assert t.theta3 == pytest.approx(t.theta1, abs=1e-12)
    report = check_json(capsys, "--pose", f"{pose.x!r},{pose.y!r},{pose.alpha!r}")
    assert abs(report["residual"]) < 1e-8
    assert report["singular"] is True


def test_check_joints_roundtrip(capsys):
    pose = Pose(4.0, 11.0, 0.7)
    q = inverse_kinematics(REFERENCE_GEOMETRY, pose)
    report = check_json(capsys, "--joints", ",".join(repr(v) for v in q))
    found = [m["pose"] for m in report["assembly_modes"]]
    assert any(np.allclose(p, pose, atol=1e-7) for p in found)


def test_check_degrees_flag(capsys):
    a = check_json(capsys, "--pose", "5,12,90", "--degrees")
    b = check_json(capsys, "--pose", f"5,12,{math.pi / 2!r}")
    assert a["joints"] == pytest.approx(b["joints"], abs=1e-12)


def test_check_malformed_pose():
    assert run("check", GEOM, "--pose", "1,2") == 1


# -- determinism and replay -------------------------------------------------


def test_every_command_is_byte_deterministic(tmp_path, small_cloud, box_file, capsys):
    def twice(make_args, name):
        outs = []
        for k in (1, 2):
            out = tmp_path / f"{name}{k}{Path(name).suffix or '.csv'}"
            assert run(*make_args(out)) == 0
            outs.append(read(out))
        assert outs[0] == outs[1], name

    twice(lambda o: ("slice", GEOM, "--rho1", 17, "-o", o, *SMALL_GRID), "slice")
    twice(lambda o: ("sweep", GEOM, "--rho1", "30:34:2", "-o", o, *SMALL_GRID), "sweep")
    twice(lambda o: ("maxbox", small_cloud, "--center", "35,25,45", "-o", o), "box.json")
    twice(lambda o: ("image", GEOM, box_file, "--n-per-axis", 3, "-o", o), "image")
    twice(lambda o: ("check", GEOM, "--pose", "4,11,0.7", "-o", o), "check.json")


def test_replay_reproduces_outputs(tmp_path):
    out = tmp_path / "s.csv"
    assert run("slice", GEOM, "--rho1", 20, "-o", out, *SMALL_GRID) == 0
    manifest = Path(f"{out}.manifest.json")
    assert run("replay", manifest) == 0
    # a tampered output is detected
    kept = tmp_path / "kept.json"
    shutil.copy(manifest, kept)
    data = json.loads(kept.read_text())
    data["outputs"][str(out)] = "0" * 64
    kept.write_text(json.dumps(data))
    assert run("replay", kept) == 1
