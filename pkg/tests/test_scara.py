import math
import threading
import time

import numpy as np
import pytest

from workcell.errors import WorkcellError
from workcell.geometry import Orientation, Pose, Position, compose, poses_close
from workcell.model import Joints
from workcell.objtypes.scara import (
    DEFAULT_L1,
    DEFAULT_L2,
    LIMITS,
    SimScara,
    scara_fk,
    scara_ik,
    scara_joints,
)


def random_joints(rng):
    return tuple(rng.uniform(*LIMITS[name]) for name in ("q1", "q2", "q3", "q4"))


def test_fk_fully_extended():
    pose = scara_fk(0, 0, 0, 0, 0.25, 0.15)
    assert abs(pose.position.x - 0.40) < 1e-12
    assert abs(pose.position.y) < 1e-12
    assert abs(pose.position.z) < 1e-12
    assert pose.orientation.approx_equal(Orientation(), 1e-12)


def test_fk_quarter_turn():
    pose = scara_fk(math.pi / 2, 0, 0, 0, 0.25, 0.15)
    assert abs(pose.position.x) < 1e-12
    assert abs(pose.position.y - 0.40) < 1e-12


def test_ik_boundary_straight_arm():
    target = Pose(Position(DEFAULT_L1 + DEFAULT_L2, 0, 0.1), Orientation())
    q1, q2, q3, q4 = scara_ik(target)
    assert abs(q2) < 1e-9
    assert abs(q3 - 0.1) < 1e-12


def test_ik_unreachable_inside_annulus():
    target = Pose(Position(0.05, 0, 0.1), Orientation())  # d < |L1-L2| = 0.1
    with pytest.raises(WorkcellError) as err:
        scara_ik(target)
    assert err.value.code == "UNREACHABLE"


def test_ik_unreachable_outside():
    with pytest.raises(WorkcellError):
        scara_ik(Pose(Position(0.5, 0, 0.1), Orientation()))


def test_ik_rejects_non_yaw_orientation():
    target = Pose(Position(0.3, 0, 0.1), Orientation.from_axis_angle((1, 0, 0), 0.5))
    with pytest.raises(WorkcellError) as err:
        scara_ik(target)
    assert err.value.code == "UNREACHABLE"


def test_ik_respects_z_limits():
    with pytest.raises(WorkcellError):
        scara_ik(Pose(Position(0.3, 0, 0.5), Orientation()))


def test_fk_ik_roundtrip_both_elbows():
    rng = np.random.default_rng(321)
    checked = 0
    for _ in range(1000):
        joints = random_joints(rng)
        target = scara_fk(*joints)
        branch = "up" if joints[1] >= 0 else "down"
        try:
            solution = scara_ik(target, elbow=branch)
        except WorkcellError:
            # fk of in-limit joints is always reachable; ik may only refuse
            # when the wrapped q4 leaves its limits, which cannot happen here
            raise
        recovered = scara_fk(*solution)
        assert poses_close(recovered, target, 1e-9, 1e-9)
        checked += 1
    assert checked == 1000


def test_ik_elbow_branches_mirror():
    target = Pose(Position(0.25, 0.1, 0.05), Orientation.from_yaw(0.3))
    up = scara_ik(target, elbow="up")
    down = scara_ik(target, elbow="down")
    assert up[1] >= 0 >= down[1]
    assert poses_close(scara_fk(*up), scara_fk(*down), 1e-9, 1e-9)


# -- the live simulated instance ------------------------------------------------


def test_move_reaches_pose_and_reports_it():
    robot = SimScara()
    target = Pose(Position(0.3, 0.05, 0.1), Orientation.from_yaw(0.2))
    robot.move_to_pose(target)
    assert poses_close(robot.ee_pose(), target, 1e-9, 1e-9)


def test_world_frame_base_transform():
    base = Pose(Position(0.5, 0.2, 0.0), Orientation.from_yaw(math.pi / 2))
    robot = SimScara(base=base)
    local_target = Pose(Position(0.3, 0.0, 0.1), Orientation.from_yaw(0.1))
    world_target = compose(base, local_target)
    robot.move_to_pose(world_target)
    assert poses_close(robot.ee_pose(), world_target, 1e-9, 1e-9)


def test_move_call_unreachable_is_action_failed():
    robot = SimScara()
    far = Pose(Position(2.0, 0, 0.1), Orientation()).to_dict()
    with pytest.raises(WorkcellError) as err:
        robot.call("move", [far])
    assert err.value.code == "ACTION_FAILED"
    assert "unreachable" in err.value.message


def test_inputs_and_outputs():
    robot = SimScara()
    assert robot.call("get_input", []) == [0]
    robot.set_input(0, 7)
    assert robot.call("get_input", []) == [7]
    robot.call("set_output", [2, True])
    assert robot.output(2) is True
    assert robot.output(3) is False


def test_get_joints_round_trips():
    robot = SimScara()
    robot.move_to_pose(Pose(Position(0.2, 0.1, 0.05), Orientation()))
    [joints] = robot.call("get_joints", [])
    assert Joints.from_dict(joints) == robot.joints()


def test_hand_teaching_gate():
    robot = SimScara()
    taught = scara_joints(0.5, -0.5, 0.1, 0.2)
    with pytest.raises(WorkcellError) as err:
        robot.write_joints(taught)
    assert err.value.code == "HAND_TEACH_OFF"
    robot.set_hand_teaching(True)
    robot.write_joints(taught)
    assert robot.joints() == taught


def test_timed_move_can_be_cancelled():
    robot = SimScara({"simulate_time": True, "speed": 0.5})
    target = scara_joints(2.0, 0, 0, 0)  # 2 rad at 0.5 rad/s -> 4 s
    error = {}

    def motion():
        try:
            robot.move_to_joints(target)
        except WorkcellError as exc:
            error["code"] = exc.code

    thread = threading.Thread(target=motion)
    thread.start()
    time.sleep(0.1)
    robot.cancel()
    thread.join(timeout=2)
    assert error.get("code") == "CANCELLED"
    # interrupted mid-way: joints are strictly between start and target
    assert 0.0 < robot.joints().as_mapping()["q1"] < 2.0


def test_instant_move_by_default_is_fast():
    robot = SimScara()
    start = time.monotonic()
    robot.move_to_joints(scara_joints(2.0, -1.0, 0.2, 1.0))
    assert time.monotonic() - start < 0.1
    assert robot.joints() == scara_joints(2.0, -1.0, 0.2, 1.0)
