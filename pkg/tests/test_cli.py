import json
import subprocess
import sys
from pathlib import Path

import pytest

from workcell.cli import EX_FAULTED, EX_INVALID, EX_OK, EX_USAGE


def cli(*args, cwd, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "workcell.cli", *args],
        cwd=cwd, capture_output=True, text=True, env=full_env, timeout=120,
    )


@pytest.fixture
def workdir(tmp_path):
    result = cli("demo", "init", cwd=tmp_path)
    assert result.returncode == EX_OK, result.stderr
    return tmp_path


def test_demo_init_creates_store_and_objtypes(workdir):
    assert (workdir / "store/scenes/scn_demo.json").exists()
    assert (workdir / "store/projects/prj_demo.json").exists()
    assert (workdir / "objtypes/SimScara.json").exists()
    assert (workdir / "objtypes/Logic.json").exists()


def test_validate_demo_ok(workdir):
    result = cli("validate", "prj_demo", cwd=workdir)
    assert result.returncode == EX_OK
    assert "ok" in result.stdout


def test_validate_cyclic_fixture_exit_3(workdir):
    project = json.loads((workdir / "store/projects/prj_demo.json").read_text())
    project["logic"].append(
        {"uid": "lgi_back", "start": "act_move_there", "end": "act_get_in_val",
         "condition": None}
    )
    cyclic = workdir / "cyclic.json"
    cyclic.write_text(json.dumps(project))
    result = cli("validate", str(cyclic), cwd=workdir)
    assert result.returncode == EX_INVALID
    assert "CYCLE_DETECTED" in result.stderr


def test_build_and_run_true_branch(workdir):
    result = cli("build", "prj_demo", "-o", "demo_pkg", cwd=workdir)
    assert result.returncode == EX_OK, result.stderr
    package_uid = result.stdout.strip()
    assert package_uid.startswith("pkg_")
    assert (workdir / "demo_pkg/script.txt").exists()

    result = cli("run", "demo_pkg", "--once", "--input", "0=7", cwd=workdir)
    assert result.returncode == EX_OK, result.stderr
    events = [json.loads(line) for line in result.stdout.splitlines()]
    trace = [e["name"] for e in events if e["kind"] == "action_before"]
    assert trace == ["get_in_val", "move_here", "comp", "move_there"]


def test_run_false_branch(workdir):
    cli("build", "prj_demo", "-o", "demo_pkg", cwd=workdir)
    result = cli("run", "demo_pkg", "--once", "--input", "0=3", cwd=workdir)
    events = [json.loads(line) for line in result.stdout.splitlines()]
    trace = [e["name"] for e in events if e["kind"] == "action_before"]
    assert trace == ["get_in_val", "move_here", "comp"]


def test_run_zip_package(workdir):
    cli("build", "prj_demo", "-o", "demo.zip", cwd=workdir)
    result = cli("run", "demo.zip", "--once", "--input", "0=7", cwd=workdir)
    assert result.returncode == EX_OK


def test_run_loop_bounded(workdir):
    cli("build", "prj_demo", "-o", "loop_pkg", "--loop", cwd=workdir)
    result = cli("run", "loop_pkg", "--max-iter", "2", "--input", "0=3", cwd=workdir)
    assert result.returncode == EX_OK
    events = [json.loads(line) for line in result.stdout.splitlines()]
    trace = [e["name"] for e in events if e["kind"] == "action_before"]
    assert trace == ["get_in_val", "move_here", "comp"] * 2


def test_run_faulted_exit_2(workdir):
    # shrink the robot so the move is unreachable
    scene_path = workdir / "store/scenes/scn_demo.json"
    scene = json.loads(scene_path.read_text())
    for obj in scene["objects"]:
        if obj["uid"] == "obj_robot":
            obj["parameters"] = [
                {"name": "l1", "type": "double", "value": 0.05},
                {"name": "l2", "type": "double", "value": 0.05},
            ]
    scene_path.write_text(json.dumps(scene))
    cli("build", "prj_demo", "-o", "bad_pkg", cwd=workdir)
    result = cli("run", "bad_pkg", "--once", "--input", "0=7", cwd=workdir)
    assert result.returncode == EX_FAULTED
    events = [json.loads(line) for line in result.stdout.splitlines()]
    assert any(e["kind"] == "error" for e in events)


def test_missing_package_usage_error(workdir):
    result = cli("run", "no_such_pkg", cwd=workdir)
    assert result.returncode == EX_USAGE


def test_bad_input_spec_usage_error(workdir):
    cli("build", "prj_demo", "-o", "demo_pkg", cwd=workdir)
    result = cli("run", "demo_pkg", "--input", "seven", cwd=workdir)
    assert result.returncode == EX_USAGE


def test_unknown_command_usage_error(tmp_path):
    result = cli("frobnicate", cwd=tmp_path)
    assert result.returncode == EX_USAGE


def test_env_var_overrides_default_store(tmp_path):
    alt = tmp_path / "elsewhere"
    result = cli("demo", "init", cwd=tmp_path, env={"WORKCELL_STORE": str(alt / "store")})
    assert result.returncode == EX_OK
    assert (alt / "store/scenes/scn_demo.json").exists()
    # flag beats env
    result = cli(
        "--store", str(tmp_path / "flagged"), "demo", "init",
        cwd=tmp_path, env={"WORKCELL_STORE": str(alt / "store2")},
    )
    assert result.returncode == EX_OK
    assert (tmp_path / "flagged/scenes/scn_demo.json").exists()
    assert not (alt / "store2").exists()
