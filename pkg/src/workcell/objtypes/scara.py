"""Built-in simulated SCARA robot (two revolute arm joints, one vertical
prismatic joint, one tool-yaw joint).

Forward kinematics:
    x = L1*cos(q1) + L2*cos(q1+q2)
    y = L1*sin(q1) + L2*sin(q1+q2)
    z = q3
    yaw = q1 + q2 + q4

The analytic inverse has two elbow branches; reachability requires
|L1-L2| <= sqrt(x^2+y^2) <= L1+L2 and a pure-yaw target orientation.
Motion is synchronized linear joint interpolation advanced in 10 ms ticks;
by default the clock is virtual (moves complete immediately) so that test
runs stay fast, while ``simulate_time`` switches to wall-clock ticking.
"""

from __future__ import annotations

import math
import threading
import time

from ..errors import WorkcellError
from ..geometry import Orientation, Pose, Position, compose, invert
from ..model import Joints, ObjectModel
from .manifest import ActionMeta, Binding, ObjectTypeManifest, ParameterMeta, RobotFeatures

DEFAULT_L1 = 0.25
DEFAULT_L2 = 0.15
# Joint limits: q1, q2 in radians; q3 in meters; q4 in radians.
LIMITS = {
    "q1": (-2.6, 2.6),
    "q2": (-2.6, 2.6),
    "q3": (0.0, 0.25),
    "q4": (-math.pi, math.pi),
}
JOINT_NAMES = ("q1", "q2", "q3", "q4")
TICK_SECONDS = 0.010
_YAW_ONLY_TOL = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def scara_fk(q1: float, q2: float, q3: float, q4: float,
             l1: float = DEFAULT_L1, l2: float = DEFAULT_L2) -> Pose:
    x = l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
    y = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
    return Pose(Position(x, y, q3), Orientation.from_yaw(q1 + q2 + q4))


def scara_ik(target: Pose, l1: float = DEFAULT_L1, l2: float = DEFAULT_L2,
             elbow: str = "up", limits: dict | None = None) -> tuple:
    """Analytic inverse kinematics; raises UNREACHABLE outside the workspace.

    ``elbow`` picks the q2 sign: "up" non-negative, "down" non-positive.
    """
    if elbow not in ("up", "down"):
        raise WorkcellError("UNREACHABLE", f"unknown elbow branch {elbow!r}")
    limits = limits or LIMITS

    yaw = target.orientation.yaw()
    if not target.orientation.approx_equal(Orientation.from_yaw(yaw), _YAW_ONLY_TOL):
        raise WorkcellError("UNREACHABLE", "orientation is not a pure yaw rotation")

    x, y, z = target.position.x, target.position.y, target.position.z
    d_sq = x * x + y * y
    d = math.sqrt(d_sq)
    if d > l1 + l2 + 1e-12 or d < abs(l1 - l2) - 1e-12:
        raise WorkcellError("UNREACHABLE", f"planar distance {d:.4f} outside [{abs(l1-l2)}, {l1+l2}]")

    cos_q2 = (d_sq - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    cos_q2 = min(1.0, max(-1.0, cos_q2))
    q2 = math.acos(cos_q2)
    if elbow == "down":
        q2 = -q2
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    q1 = wrap_angle(q1)
    q3 = z
    q4 = wrap_angle(yaw - q1 - q2)

    solution = (q1, q2, q3, q4)
    for name, value in zip(JOINT_NAMES, solution):
        lo, hi = limits[name]
        if value < lo - 1e-12 or value > hi + 1e-12:
            raise WorkcellError("UNREACHABLE", f"{name}={value:.4f} outside limits [{lo}, {hi}]")
    return solution


def scara_joints(q1: float, q2: float, q3: float, q4: float) -> Joints:
    return Joints(JOINT_NAMES, (q1, q2, q3, q4))


def link_models(base: Pose, joints, l1: float = DEFAULT_L1, l2: float = DEFAULT_L2) -> list:
    """Posed primitive models of the arm at a joint configuration.

    World-frame (pose, model) pairs: base column, two arm links, and the
    tool quill.  Used to synthesize surface clouds for pose refinement.
    """
    from ..geometry import compose as _compose

    q1, q2, q3, _q4 = joints
    column_h = 0.30
    parts = [
        (
            Pose(Position(0.0, 0.0, column_h / 2), Orientation()),
            ObjectModel(kind="cylinder", radius=0.045, height=column_h),
        ),
        (
            Pose(
                Position(l1 / 2 * math.cos(q1), l1 / 2 * math.sin(q1), column_h),
                Orientation.from_yaw(q1),
            ),
            ObjectModel(kind="box", size_x=l1, size_y=0.06, size_z=0.05),
        ),
        (
            Pose(
                Position(
                    l1 * math.cos(q1) + l2 / 2 * math.cos(q1 + q2),
                    l1 * math.sin(q1) + l2 / 2 * math.sin(q1 + q2),
                    column_h - 0.05,
                ),
                Orientation.from_yaw(q1 + q2),
            ),
            ObjectModel(kind="box", size_x=l2, size_y=0.05, size_z=0.04),
        ),
        (
            Pose(
                Position(
                    l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
                    l1 * math.sin(q1) + l2 * math.sin(q1 + q2),
                    q3 + 0.06,
                ),
                Orientation(),
            ),
            ObjectModel(kind="cylinder", radius=0.015, height=0.12),
        ),
    ]
    return [(_compose(base, pose), model) for pose, model in parts]


MANIFEST = ObjectTypeManifest(
    id="SimScara",
    base="robot",
    description="Simulated 4-axis SCARA arm with digital I/O.",
    model=ObjectModel(kind="box", size_x=0.12, size_y=0.12, size_z=0.08),
    actions=(
        ActionMeta(
            name="move",
            parameters=(ParameterMeta(name="pose", type="pose_ref",
                                      description="target pose (action point + orientation)"),),
            returns=(),
            blocking=True,
            description="Move the end effector to a pose.",
        ),
        ActionMeta(
            name="get_input",
            parameters=(),
            returns=("integer",),
            description="Read the digital input port.",
        ),
        ActionMeta(
            name="set_output",
            parameters=(
                ParameterMeta(name="index", type="integer", minimum=0, maximum=7),
                ParameterMeta(name="value", type="boolean"),
            ),
            returns=(),
            description="Set one digital output.",
        ),
        ActionMeta(
            name="get_joints",
            parameters=(),
            returns=("joints",),
            description="Current joint configuration.",
        ),
    ),
    robot_features=RobotFeatures(
        move_to_pose=True,
        forward_kinematics=True,
        inverse_kinematics=True,
        hand_teaching=True,
        stepping=True,
    ),
    binding=Binding(builtin="sim_scara"),
)


class SimScara:
    """Live instance of the simulated SCARA.

    Instance configuration comes from the action object's parameters:
    ``l1``/``l2`` (link lengths), ``speed`` (joint speed, rad/s or m/s),
    ``simulate_time`` (wall-clock motion instead of the virtual clock).
    Motion actions on one robot are serialized; ``cancel`` aborts the
    in-flight move at the next tick.
    """

    def __init__(self, parameters: dict | None = None, base: Pose | None = None):
        params = parameters or {}
        self.l1 = float(params.get("l1", DEFAULT_L1))
        self.l2 = float(params.get("l2", DEFAULT_L2))
        self.speed = float(params.get("speed", 0.5))
        self.simulate_time = bool(params.get("simulate_time", False))
        self.base = base or Pose()
        self._joints = [0.0, 0.0, 0.0, 0.0]
        self._inputs: dict = {}
        self._outputs: dict = {}
        self.hand_teaching = False
        self._motion_lock = threading.Lock()
        self._cancel = threading.Event()
        self._state_lock = threading.Lock()

    # -- instance protocol -------------------------------------------------

    def call(self, action: str, args: list) -> list:
        if action == "move":
            pose = Pose.from_dict(args[0]) if isinstance(args[0], dict) else args[0]
            try:
                self.move_to_pose(pose, self.speed)
            except WorkcellError as exc:
                if exc.code == "UNREACHABLE":
                    raise WorkcellError("ACTION_FAILED", "unreachable")
                raise
            return []
        if action == "get_input":
            return [int(self._inputs.get(0, 0))]
        if action == "set_output":
            index, value = int(args[0]), bool(args[1])
            with self._state_lock:
                self._outputs[index] = value
            return []
        if action == "get_joints":
            return [self.joints().to_dict()]
        raise WorkcellError("UNKNOWN_ACTION", f"SimScara has no action {action!r}")

    def cancel(self) -> None:
        self._cancel.set()

    def close(self) -> None:
        self.cancel()

    # -- robot API ----------------------------------------------------------

    def joints(self) -> Joints:
        with self._state_lock:
            return scara_joints(*self._joints)

    def ee_pose(self) -> Pose:
        """End-effector pose in the world frame (base pose applied)."""
        with self._state_lock:
            return compose(self.base, scara_fk(*self._joints, self.l1, self.l2))

    def elbow(self) -> str:
        return "up" if self._joints[1] >= 0.0 else "down"

    def solve_ik(self, target: Pose, prefer: str | None = None) -> tuple:
        """IK for a world-frame target, preferring the current elbow branch."""
        local = compose(invert(self.base), target)
        branches = [prefer or self.elbow()]
        branches.append("down" if branches[0] == "up" else "up")
        last_error = None
        for branch in branches:
            try:
                return scara_ik(local, self.l1, self.l2, branch)
            except WorkcellError as exc:
                last_error = exc
        raise last_error

    def move_to_pose(self, target: Pose, speed: float | None = None) -> None:
        self.move_to_joints(scara_joints(*self.solve_ik(target)), speed)

    def move_to_joints(self, target: Joints, speed: float | None = None) -> None:
        speed = self.speed if speed is None else float(speed)
        if speed <= 0:
            raise WorkcellError("ACTION_FAILED", "speed must be positive")
        goal = [target.as_mapping()[n] for n in JOINT_NAMES]
        for name, value in zip(JOINT_NAMES, goal):
            lo, hi = LIMITS[name]
            if value < lo - 1e-12 or value > hi + 1e-12:
                raise WorkcellError("UNREACHABLE", f"{name}={value:.4f} outside limits")
        with self._motion_lock:
            self._cancel.clear()
            start = list(self._joints)
            delta = max(abs(g - s) for g, s in zip(goal, start))
            ticks = max(1, math.ceil(delta / speed / TICK_SECONDS))
            for tick in range(1, ticks + 1):
                if self._cancel.is_set():
                    raise WorkcellError("CANCELLED", "motion cancelled")
                f = tick / ticks
                with self._state_lock:
                    self._joints = [s + (g - s) * f for g, s in zip(goal, start)]
                if self.simulate_time:
                    time.sleep(TICK_SECONDS)

    def write_joints(self, target: Joints) -> None:
        """Direct joint write; only legal while hand-teaching is on."""
        if not self.hand_teaching:
            raise WorkcellError("HAND_TEACH_OFF", "enable hand teaching before writing joints")
        values = target.as_mapping()
        with self._state_lock:
            self._joints = [values[n] for n in JOINT_NAMES]

    def set_hand_teaching(self, on: bool) -> None:
        self.hand_teaching = bool(on)

    def set_input(self, index: int, value: int) -> None:
        """Test/RPC hook: inject a simulated digital input value."""
        with self._state_lock:
            self._inputs[int(index)] = int(value)

    def output(self, index: int) -> bool:
        with self._state_lock:
            return bool(self._outputs.get(index, False))

    def reach(self) -> float:
        return self.l1 + self.l2
