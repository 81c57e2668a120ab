"""Acceptance suite: one test per release criterion, at the stated
tolerances.  Each prints a `[PASS]`/`[FAIL]` line (visible with `pytest -s`).

Run:  pytest tests/test_acceptance.py -v -s
"""

import asyncio
import contextlib
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import Client, Harness, inject_back_edge, logic_scene, random_flow_project, run
from workcell.calibration import (
    MarkerConfig,
    MarkerObservation,
    average_quaternions,
    estimate_camera_pose,
    quat_to_matrix,
    robust_icp,
    synth_cloud_from_model,
)
from workcell.compiler import build, load_package, save_package
from workcell.demo import demo_project, demo_registry, demo_scene
from workcell.errors import WorkcellError
from workcell.executor import Executor
from workcell.geometry import Orientation, Pose, Position, compose, invert, poses_close
from workcell.model import Project
from workcell.objtypes.scara import LIMITS, link_models, scara_fk, scara_ik
from workcell.script import script_body
from workcell.validation import validate_project


@contextlib.contextmanager
def criterion(name: str):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        sys.stderr.write(f"[FAIL] {name}\n")
        raise
    else:
        sys.stderr.write(f"[PASS] {name} ({time.monotonic() - start:.2f}s)\n")


def strip_times(events) -> list:
    out = []
    for event in events:
        data = event.to_dict() if hasattr(event, "to_dict") else dict(event)
        data.pop("timestamp", None)
        out.append(data)
    return out


LISTING_BODY = (
    'inp_value = robot.get_input(an="get_in_val")\n'
    'robot.move(an="move_here")\n'
    'comp_res = logic.greater_than(inp_value, 5, an="comp")\n'
    "\n"
    "if comp_res == True:\n"
    '    robot.move(an="move_there")\n'
)


def test_listing_reproduction():
    with criterion("Listing-1 reproduction (token-for-token, < 1 s)"):
        start = time.monotonic()
        package = build(demo_project(), demo_scene(), demo_registry())
        elapsed = time.monotonic() - start
        body = script_body(package.script)
        assert body == LISTING_BODY
        # token-for-token against the published listing, 4-space indents
        import io
        import tokenize

        def tokens(text):
            stream = tokenize.generate_tokens(io.StringIO(text).readline)
            return [
                (t.type, t.string)
                for t in stream
                if t.type not in (tokenize.NL, tokenize.COMMENT, tokenize.ENDMARKER)
            ]

        assert tokens(body) == tokens(LISTING_BODY)
        assert "    robot.move" in body  # 4-space indent, not 2
        assert elapsed < 1.0


def test_branch_semantics_deterministic():
    with criterion("Branch semantics (input 7 vs 3, deterministic x100)"):
        package = build(demo_project(), demo_scene(), demo_registry())
        reference = {}
        for value, expected in ((7, ["get_in_val", "move_here", "comp", "move_there"]),
                                (3, ["get_in_val", "move_here", "comp"])):
            for _ in range(100):
                events = []
                state = Executor().run(package, events.append, inputs={0: value})
                assert state.status == "idle"
                trace = [e.name for e in events if e.kind == "action_before"]
                assert trace == expected
                stripped = strip_times(events)
                if value not in reference:
                    reference[value] = stripped
                assert stripped == reference[value]


def test_acyclicity_gate():
    with criterion("Acyclicity gate (1000 random DAGs + injected back-edges)"):
        registry = demo_registry()
        scene = logic_scene()
        rng = np.random.default_rng(424242)
        for _ in range(1000):
            project = random_flow_project(rng, n_actions=int(rng.integers(2, 11)))
            assert validate_project(project, scene, registry) == []
            cyclic = inject_back_edge(project, rng)
            diagnostics = validate_project(cyclic, scene, registry)
            assert any(d.rule == "CYCLE_DETECTED" for d in diagnostics)


def test_package_self_containment(tmp_path):
    with criterion("Package self-containment (old package unaffected by edits)"):
        registry, scene, project = demo_registry(), demo_scene(), demo_project()
        package = build(project, scene, registry)
        save_package(package, tmp_path / "frozen")

        events = []
        Executor().run(package, events.append, inputs={0: 7})
        before = strip_times(events)

        # mutate the source project heavily after the build
        data = project.to_dict()
        for action in data["actions"]:
            if action["uid"] == "act_comp":
                action["parameters"][1] = {"literal": {"type": "integer", "value": 100}}
        data["actions"] = [a for a in data["actions"] if a["uid"] != "act_move_there"]
        data["logic"] = [li for li in data["logic"]
                         if li["uid"] not in ("lgi_true", "lgi_there_end")]
        mutated = Project.from_dict(data)
        assert validate_project(mutated, scene, registry) == []

        reloaded = load_package(tmp_path / "frozen")
        events = []
        Executor().run(reloaded, events.append, inputs={0: 7})
        after = strip_times(events)
        assert after == before
        assert json.dumps(after, sort_keys=True) == json.dumps(before, sort_keys=True)


def test_fk_ik_oracle():
    with criterion("FK/IK oracle (10^4 reachable targets, 1e-9; unreachable rejected)"):
        rng = np.random.default_rng(1001)
        for _ in range(10_000):
            joints = tuple(rng.uniform(*LIMITS[n]) for n in ("q1", "q2", "q3", "q4"))
            target = scara_fk(*joints)
            branch = "up" if joints[1] >= 0 else "down"
            solution = scara_ik(target, elbow=branch)
            assert poses_close(scara_fk(*solution), target, 1e-9, 1e-9)
        for position in (Position(0.05, 0, 0.1), Position(0.41, 0, 0.1),
                         Position(0.3, 0, 0.5)):
            with pytest.raises(WorkcellError) as err:
                scara_ik(Pose(position, Orientation()))
            assert err.value.code == "UNREACHABLE"


def test_quaternion_averaging_oracle():
    from test_calibration import chordal, oracle_mean, random_orientation

    with criterion("Quaternion averaging vs brute-force oracle (100 sets, 1e-6)"):
        rng = np.random.default_rng(777)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            quaternions = [random_orientation(rng) for _ in range(n)]
            weights = list(rng.uniform(0.05, 2.0, size=n))
            eigen = average_quaternions(quaternions, weights)
            oracle = oracle_mean(quaternions, weights)
            assert chordal(eigen, oracle) < 1e-6
            flipped = [q.negate() if rng.random() < 0.5 else q for q in quaternions]
            assert average_quaternions(flipped, weights) == eigen


def test_camera_pose_fusion():
    with criterion("Camera fusion (noiseless 1e-9; 2 mm noise -> median < 2 mm)"):
        configs = [
            MarkerConfig(1, Pose(Position(0, 0, 0), Orientation()), 0.1),
            MarkerConfig(2, Pose(Position(0.4, 0.2, 0.0), Orientation.from_yaw(0.4)), 0.1),
        ]
        truth = Pose(Position(0.2, 0.1, 0.9), Orientation.from_axis_angle((1, 0, 0), math.pi))

        def observe(rng=None, sigma=0.0):
            observations = []
            for config in configs:
                pose = compose(invert(truth), config.pose)
                if sigma > 0:
                    noise = rng.normal(0.0, sigma / math.sqrt(3), size=3)
                    pose = Pose(pose.position + Position(*noise), pose.orientation)
                observations.append(MarkerObservation(config.marker_id, pose))
            return observations

        pose, _weights = estimate_camera_pose(observe(), configs)
        assert poses_close(pose, truth, 1e-9, 1e-9)

        rng = np.random.default_rng(31415)
        errors = []
        for _ in range(1000):
            noisy_pose, _w = estimate_camera_pose(observe(rng, sigma=0.002), configs)
            errors.append((noisy_pose.position - truth.position).norm())
        assert float(np.median(errors)) < 0.002


def test_robust_icp_acceptance():
    with criterion("Robust ICP (10deg/5cm, 20% outliers -> 1e-3 m / 0.1deg, <5 s)"):
        rng = np.random.default_rng(55)
        source = synth_cloud_from_model(
            link_models(Pose(), (0.4, -0.6, 0.1, 0.0)), 5000, seed=7
        )
        truth = Pose(
            Position(0.035, -0.025, 0.02),
            Orientation.from_axis_angle((0.1, 0.2, 1.0), math.radians(10)),
        )
        rotation = quat_to_matrix(truth.orientation)
        translation = np.array([0.035, -0.025, 0.02])
        inliers = source @ rotation.T + translation
        outliers = rng.uniform(inliers.min(0) - 0.2, inliers.max(0) + 0.2, size=(1250, 3))
        target = np.vstack([inliers, outliers])

        start = time.monotonic()
        result = robust_icp(source, target)
        elapsed = time.monotonic() - start
        assert elapsed < 5.0
        assert result.iterations <= 50
        assert (result.pose.position - truth.position).norm() < 1e-3
        dot = abs(
            result.pose.orientation.w * truth.orientation.w
            + result.pose.orientation.x * truth.orientation.x
            + result.pose.orientation.y * truth.orientation.y
            + result.pose.orientation.z * truth.orientation.z
        )
        assert 2 * math.degrees(math.acos(min(1.0, dot))) < 0.1


def test_collaboration_safety_and_liveness():
    with criterion("Collaboration (16-client lock hammer, release <= 1 s, convergence)"):
        harness = Harness()
        try:
            run(_collaboration_check(harness))
        finally:
            harness.close()


async def _collaboration_check(harness):
    clients = [Client(harness.url, f"user{i:02d}") for i in range(16)]
    for client in clients:
        await client.open()
    await clients[0].call("open_project", uid="prj_demo")

    # -- lock hammer: every round exactly one grant -------------------------
    rounds = 1000
    for _round in range(rounds):
        responses = await asyncio.gather(
            *(c.request("lock", uid="obj_robot") for c in clients)
        )
        granted = [c for c, r in zip(clients, responses) if r["ok"]]
        assert len(granted) == 1, f"round {_round}: {len(granted)} grants"
        losers = {r["error"]["code"] for r in responses if not r["ok"]}
        assert losers == {"ALREADY_LOCKED"}
        await granted[0].call("unlock", uid="obj_robot")

    # -- disconnect releases within one sweep interval -----------------------
    victim = clients[0]
    await victim.call("lock", uid="obj_robot")
    observer = clients[1]
    observer.events.clear()
    start = asyncio.get_running_loop().time()
    await victim.close()
    event = await observer.wait_event(
        "unlocked", timeout=1.0, where=lambda d: d["uid"] == "obj_robot"
    )
    assert asyncio.get_running_loop().time() - start <= 1.0
    clients = clients[1:]

    # -- 10^4 interleaved edits; mirrors converge -----------------------------
    # per-client APs cut lock contention; two shared APs keep it interesting
    await clients[0].call("lock", uid="prj_demo")
    own_aps = {}
    for client in clients:
        data = await clients[0].call(
            "add_action_point", name=f"own_{client.name}",
            position={"x": 0.2, "y": 0.0, "z": 0.0},
        )
        own_aps[client.name] = data["action_point"]["uid"]
    await clients[0].call("unlock", uid="prj_demo")

    import random

    total_edits = 10_000
    per_client = total_edits // len(clients)
    shared = ["ap_here", "ap_there"]

    async def editor(client, seed):
        rng = random.Random(seed)
        applied = 0
        for _ in range(per_client):
            if rng.random() < 0.2:
                target = rng.choice(shared)
            else:
                target = own_aps[client.name]
            response = await client.request("lock", uid=target)
            if not response["ok"]:
                continue
            await client.call(
                "update_action_point", uid=target,
                position={"x": rng.uniform(0.1, 0.3), "y": rng.uniform(-0.2, 0.2),
                          "z": rng.uniform(0.0, 0.2)},
            )
            await client.call("unlock", uid=target)
            applied += 1
        return applied

    applied = await asyncio.gather(*(editor(c, i) for i, c in enumerate(clients)))
    assert sum(applied) > 0

    # quiesce: wait until every client saw the last edit of every other
    await asyncio.sleep(1.0)
    server_aps = {ap.uid: ap.to_dict() for ap in harness.session.project.action_points}
    for client in clients:
        mirror = {}
        for event in client.events_named("action_point_added"):
            ap = event["data"]["action_point"]
            mirror[ap["uid"]] = ap
        for event in client.events_named("action_point_updated"):
            ap = event["data"]["action_point"]
            mirror[ap["uid"]] = ap
        for uid, ap in mirror.items():
            assert ap == server_aps[uid], f"{client.name} diverged on {uid}"
        # every edited AP is present in every mirror
        assert set(own_aps.values()) <= set(mirror)
    for client in clients:
        await client.close()


def test_online_offline_contract():
    with criterion("Online/offline contract (NOT_ONLINE gating; offline editing)"):
        harness = Harness()
        try:
            run(_online_offline_check(harness))
        finally:
            harness.close()


async def _online_offline_check(harness):
    async with Client(harness.url, "operator") as client:
        await client.call("open_project", uid="prj_demo")
        await client.call("lock", uid="obj_robot")
        robot_ops = [
            ("get_end_effector_pose", {"robot": "obj_robot"}),
            ("get_robot_joints", {"robot": "obj_robot"}),
            ("move_to_pose", {"robot": "obj_robot", "action_point": "ap_here",
                              "orientation": "default"}),
            ("move_to_joints", {"robot": "obj_robot", "joints": []}),
            ("step_end_effector", {"robot": "obj_robot", "axis": "x", "delta": 0.01}),
            ("align_to_world_axes", {"robot": "obj_robot"}),
            ("set_hand_teaching", {"robot": "obj_robot", "on": True}),
            ("write_joints", {"robot": "obj_robot", "joints": []}),
            ("set_sim_input", {"robot": "obj_robot", "index": 0, "value": 1}),
            ("update_action_point_using_robot",
             {"action_point": "ap_here", "robot": "obj_robot"}),
            ("run_package", {"package": "pkg_whatever"}),
            ("execute_action", {"action": "act_move_here"}),
        ]
        for op_name, args in robot_ops:
            error = await client.expect_error(op_name, **args)
            assert error["code"] == "NOT_ONLINE", f"{op_name} -> {error['code']}"

        # a full offline editing session succeeds end to end
        await client.call("lock", uid="prj_demo")
        ap = (await client.call(
            "add_action_point", name="prep", position={"x": 0.22, "y": 0.05, "z": 0.02}
        ))["action_point"]
        await client.call(
            "add_orientation", action_point=ap["uid"], name="default",
            orientation={"w": 1, "x": 0, "y": 0, "z": 0},
        )
        action = (await client.call(
            "add_action", action_point=ap["uid"], name="prep_move",
            object="obj_robot", action="move",
            parameters=[{"literal": {"type": "pose_ref",
                                     "value": {"action_point": ap["uid"],
                                               "orientation": "default"}}}],
        ))["action"]
        await client.call("remove_logic_item", uid="lgi_there_end")
        await client.call("add_logic_item", start="act_move_there", end=action["uid"])
        await client.call("add_logic_item", start=action["uid"], end="END")
        await client.call(
            "add_project_parameter", name="threshold",
            value={"type": "integer", "value": 5},
        )
        package = (await client.call("build_project"))["package"]
        assert package.startswith("pkg_")
        listed = (await client.call("list_packages"))["packages"]
        assert any(p["uid"] == package for p in listed)


def test_cli_serve_equivalence(tmp_path):
    with criterion("CLI / server trace equivalence"):
        harness = Harness(root=tmp_path)
        try:
            server_trace, package_uid = run(_server_trace(harness))
        finally:
            harness.close()

        package_dir = tmp_path / "pkg"
        payload = harness.store.get("packages", package_uid)
        from workcell.compiler import ExecutionPackage

        save_package(ExecutionPackage.from_dict(payload), package_dir)
        result = subprocess.run(
            [sys.executable, "-m", "workcell.cli", "run", str(package_dir),
             "--once", "--input", "0=7"],
            capture_output=True, text=True, timeout=60,
        )
        assert result.returncode == 0, result.stderr
        cli_trace = []
        for line in result.stdout.splitlines():
            data = json.loads(line)
            data.pop("timestamp", None)
            cli_trace.append(data)
        assert cli_trace == server_trace


async def _server_trace(harness):
    async with Client(harness.url, "operator") as client:
        await client.call("open_project", uid="prj_demo")
        await client.call("start_scene")
        package = (await client.call("build_project"))["package"]
        await client.call("run_package", package=package, inputs={"0": 7},
                          max_iterations=1)
        trace = []
        while True:
            event = await client.wait_event("execution_event")
            client.events.remove(event)
            data = dict(event["data"])
            assert data.pop("package") == package
            data.pop("timestamp", None)
            trace.append(data)
            if data.get("status") in ("idle", "faulted", "stopped"):
                break
        return trace, package
