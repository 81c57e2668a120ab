"""Domain types for scenes and visual programs, with canonical JSON encoding.

The JSON produced by ``to_dict``/``canonical_json`` is the wire and disk
format used by every other module (store, server, packages).  Field names
are snake_case; quaternions encode as {"w","x","y","z"}.  ``from_dict``
round-trips everything ``to_dict`` emits.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional

from .errors import WorkcellError
from .geometry import Orientation, Pose, Position

# Sentinel endpoints of the program flow graph.
START = "START"
END = "END"

# Value types usable in parameters and results.  The *_ref types reference
# data stored on an action point instead of carrying a value inline.
VALUE_TYPES = ("boolean", "integer", "double", "string", "enumeration", "pose", "joints")
REF_TYPES = ("pose_ref", "joints_ref")
NUMERABLE_TYPES = ("boolean", "integer", "enumeration")


def gen_uid(prefix: str) -> str:
    return f"{prefix}_{uuid.uuid4().hex[:12]}"


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def canonical_json(data: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class Joints:
    """Ordered joint name/value pairs (radians or meters)."""

    names: tuple
    values: tuple

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise WorkcellError("MODEL_INVALID", "joint names/values length mismatch")
        if len(set(self.names)) != len(self.names) or any(not n for n in self.names):
            raise WorkcellError("MODEL_INVALID", "joint names must be unique and nonempty")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def to_dict(self) -> list:
        return [{"name": n, "value": v} for n, v in zip(self.names, self.values)]

    @classmethod
    def from_dict(cls, data: list) -> "Joints":
        return cls(tuple(e["name"] for e in data), tuple(e["value"] for e in data))

    @classmethod
    def of(cls, **kv: float) -> "Joints":
        return cls(tuple(kv.keys()), tuple(kv.values()))

    def as_mapping(self) -> dict:
        return dict(zip(self.names, self.values))


@dataclass(frozen=True)
class PoseRef:
    """Reference to a named orientation on an action point."""

    action_point: str
    orientation: str

    def to_dict(self) -> dict:
        return {"action_point": self.action_point, "orientation": self.orientation}

    @classmethod
    def from_dict(cls, data: dict) -> "PoseRef":
        return cls(data["action_point"], data["orientation"])


@dataclass(frozen=True)
class JointsRef:
    """Reference to a named joints entry on an action point."""

    action_point: str
    name: str

    def to_dict(self) -> dict:
        return {"action_point": self.action_point, "name": self.name}

    @classmethod
    def from_dict(cls, data: dict) -> "JointsRef":
        return cls(data["action_point"], data["name"])


@dataclass(frozen=True)
class TypedValue:
    """A value tagged with its declared type."""

    type: str
    value: Any

    def __post_init__(self):
        if self.type not in VALUE_TYPES and self.type not in REF_TYPES:
            raise WorkcellError("MODEL_INVALID", f"unknown value type {self.type!r}")
        v = self.value
        ok = {
            "boolean": lambda: isinstance(v, bool),
            "integer": lambda: isinstance(v, int) and not isinstance(v, bool),
            "double": lambda: isinstance(v, (int, float)) and not isinstance(v, bool),
            "string": lambda: isinstance(v, str),
            "enumeration": lambda: isinstance(v, str),
            "pose": lambda: isinstance(v, Pose),
            "joints": lambda: isinstance(v, Joints),
            "pose_ref": lambda: isinstance(v, PoseRef),
            "joints_ref": lambda: isinstance(v, JointsRef),
        }[self.type]()
        if not ok:
            raise WorkcellError("MODEL_INVALID", f"value {v!r} does not match type {self.type!r}")
        if self.type == "double":
            object.__setattr__(self, "value", float(v))

    def to_dict(self) -> dict:
        v = self.value
        if self.type in ("pose", "pose_ref", "joints_ref"):
            v = v.to_dict()
        elif self.type == "joints":
            v = v.to_dict()
        return {"type": self.type, "value": v}

    @classmethod
    def from_dict(cls, data: dict) -> "TypedValue":
        t, v = data["type"], data["value"]
        if t == "pose":
            v = Pose.from_dict(v)
        elif t == "joints":
            v = Joints.from_dict(v)
        elif t == "pose_ref":
            v = PoseRef.from_dict(v)
        elif t == "joints_ref":
            v = JointsRef.from_dict(v)
        return cls(t, v)


@dataclass(frozen=True)
class ObjectModel:
    """Primitive collision/visual geometry, or a reference to a mesh asset."""

    kind: str  # box | cylinder | sphere | mesh
    size_x: float = 0.0  # box
    size_y: float = 0.0
    size_z: float = 0.0
    radius: float = 0.0  # cylinder, sphere
    height: float = 0.0  # cylinder
    asset_id: str = ""  # mesh

    def __post_init__(self):
        dims = {
            "box": (self.size_x, self.size_y, self.size_z),
            "cylinder": (self.radius, self.height),
            "sphere": (self.radius,),
            "mesh": (),
        }
        if self.kind not in dims:
            raise WorkcellError("MODEL_INVALID", f"unknown model kind {self.kind!r}")
        if any(d <= 0 for d in dims[self.kind]):
            raise WorkcellError("MODEL_INVALID", f"{self.kind} dimensions must be positive")
        if self.kind == "mesh" and not self.asset_id:
            raise WorkcellError("MODEL_INVALID", "mesh model requires asset_id")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "box":
            out.update(size_x=self.size_x, size_y=self.size_y, size_z=self.size_z)
        elif self.kind == "cylinder":
            out.update(radius=self.radius, height=self.height)
        elif self.kind == "sphere":
            out.update(radius=self.radius)
        else:
            out.update(asset_id=self.asset_id)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectModel":
        return cls(**data)


@dataclass(frozen=True)
class ActionObject:
    """Instance of an object type placed (or virtually present) in a scene."""

    uid: str
    name: str
    object_type: str
    pose: Optional[Pose] = None
    parameters: tuple = ()  # ordered (name, TypedValue) pairs

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "object_type": self.object_type,
            "pose": self.pose.to_dict() if self.pose else None,
            "parameters": [{"name": n, **tv.to_dict()} for n, tv in self.parameters],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionObject":
        return cls(
            uid=data["uid"],
            name=data["name"],
            object_type=data["object_type"],
            pose=Pose.from_dict(data["pose"]) if data.get("pose") else None,
            parameters=tuple(
                (p["name"], TypedValue.from_dict(p)) for p in data.get("parameters", [])
            ),
        )

    def parameter(self, name: str) -> Optional[TypedValue]:
        for n, tv in self.parameters:
            if n == name:
                return tv
        return None


@dataclass(frozen=True)
class Scene:
    uid: str
    name: str
    objects: tuple = ()
    modified: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "objects": [o.to_dict() for o in self.objects],
            "modified": self.modified,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        return cls(
            uid=data["uid"],
            name=data["name"],
            objects=tuple(ActionObject.from_dict(o) for o in data.get("objects", [])),
            modified=data.get("modified"),
        )

    def object(self, uid: str) -> Optional[ActionObject]:
        for o in self.objects:
            if o.uid == uid:
                return o
        return None


@dataclass(frozen=True)
class NamedOrientation:
    name: str
    orientation: Orientation

    def to_dict(self) -> dict:
        return {"name": self.name, "orientation": self.orientation.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "NamedOrientation":
        return cls(data["name"], Orientation.from_dict(data["orientation"]))


@dataclass(frozen=True)
class NamedJoints:
    name: str
    robot: str  # ActionObject uid the configuration belongs to
    joints: Joints

    def to_dict(self) -> dict:
        return {"name": self.name, "robot": self.robot, "joints": self.joints.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "NamedJoints":
        return cls(data["name"], data["robot"], Joints.from_dict(data["joints"]))


@dataclass(frozen=True)
class ActionPoint:
    """Spatial anchor: position (parent-relative if parent set), named
    orientations, named robot joint configurations."""

    uid: str
    name: str
    position: Position
    parent: Optional[str] = None  # ActionObject uid
    orientations: tuple = ()
    joints: tuple = ()

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "position": self.position.to_dict(),
            "parent": self.parent,
            "orientations": [o.to_dict() for o in self.orientations],
            "joints": [j.to_dict() for j in self.joints],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionPoint":
        return cls(
            uid=data["uid"],
            name=data["name"],
            position=Position.from_dict(data["position"]),
            parent=data.get("parent"),
            orientations=tuple(NamedOrientation.from_dict(o) for o in data.get("orientations", [])),
            joints=tuple(NamedJoints.from_dict(j) for j in data.get("joints", [])),
        )

    def orientation(self, name: str) -> Optional[NamedOrientation]:
        for o in self.orientations:
            if o.name == name:
                return o
        return None

    def joints_entry(self, name: str) -> Optional[NamedJoints]:
        for j in self.joints:
            if j.name == name:
                return j
        return None


@dataclass(frozen=True)
class ParameterValue:
    """Argument of an action instance: literal, project-parameter reference,
    or link to a previous action's result.  Exactly one variant is set."""

    literal: Optional[TypedValue] = None
    parameter: Optional[str] = None  # ProjectParameter uid
    link: Optional[tuple] = None  # (action uid, result index)

    def __post_init__(self):
        variants = [v is not None for v in (self.literal, self.parameter, self.link)]
        if sum(variants) != 1:
            raise WorkcellError("MODEL_INVALID", "parameter value must set exactly one variant")
        if self.link is not None:
            object.__setattr__(self, "link", (self.link[0], int(self.link[1])))

    def to_dict(self) -> dict:
        if self.literal is not None:
            return {"literal": self.literal.to_dict()}
        if self.parameter is not None:
            return {"parameter": self.parameter}
        return {"link": {"action": self.link[0], "result": self.link[1]}}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterValue":
        if "literal" in data:
            return cls(literal=TypedValue.from_dict(data["literal"]))
        if "parameter" in data:
            return cls(parameter=data["parameter"])
        return cls(link=(data["link"]["action"], data["link"]["result"]))


@dataclass(frozen=True)
class ActionInstance:
    """Named, parameterized call to an object type action."""

    uid: str
    name: str
    owner: str  # ActionPoint uid
    target: tuple  # (ActionObject uid, action name)
    parameters: tuple = ()  # ordered ParameterValue list
    results: tuple = ()  # user-declared result variable names

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "owner": self.owner,
            "target": {"object": self.target[0], "action": self.target[1]},
            "parameters": [p.to_dict() for p in self.parameters],
            "results": list(self.results),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionInstance":
        return cls(
            uid=data["uid"],
            name=data["name"],
            owner=data["owner"],
            target=(data["target"]["object"], data["target"]["action"]),
            parameters=tuple(ParameterValue.from_dict(p) for p in data.get("parameters", [])),
            results=tuple(data.get("results", [])),
        )


@dataclass(frozen=True)
class Condition:
    """Guard on a logic edge: a prior result compared against a literal."""

    what: tuple  # (action uid, result index)
    value: TypedValue

    def __post_init__(self):
        object.__setattr__(self, "what", (self.what[0], int(self.what[1])))

    def to_dict(self) -> dict:
        return {
            "what": {"action": self.what[0], "result": self.what[1]},
            "value": self.value.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Condition":
        return cls(
            (data["what"]["action"], data["what"]["result"]),
            TypedValue.from_dict(data["value"]),
        )


@dataclass(frozen=True)
class LogicItem:
    """Directed flow edge between actions (or the START/END sentinels)."""

    uid: str
    start: str
    end: str
    condition: Optional[Condition] = None

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "start": self.start,
            "end": self.end,
            "condition": self.condition.to_dict() if self.condition else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogicItem":
        return cls(
            uid=data["uid"],
            start=data["start"],
            end=data["end"],
            condition=Condition.from_dict(data["condition"]) if data.get("condition") else None,
        )


@dataclass(frozen=True)
class ProjectParameter:
    """Named constant shared by multiple actions."""

    uid: str
    name: str
    value: TypedValue

    def to_dict(self) -> dict:
        return {"uid": self.uid, "name": self.name, "value": self.value.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectParameter":
        return cls(data["uid"], data["name"], TypedValue.from_dict(data["value"]))


@dataclass(frozen=True)
class Project:
    """Visual program over one scene: action points, actions, logic edges."""

    uid: str
    name: str
    scene: str  # Scene uid
    action_points: tuple = ()
    actions: tuple = ()  # ActionInstance list (owners reference action_points)
    parameters: tuple = ()  # ProjectParameter list
    logic: tuple = ()  # LogicItem list
    has_logic: bool = True
    modified: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "name": self.name,
            "scene": self.scene,
            "action_points": [ap.to_dict() for ap in self.action_points],
            "actions": [a.to_dict() for a in self.actions],
            "parameters": [p.to_dict() for p in self.parameters],
            "logic": [li.to_dict() for li in self.logic],
            "has_logic": self.has_logic,
            "modified": self.modified,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Project":
        return cls(
            uid=data["uid"],
            name=data["name"],
            scene=data["scene"],
            action_points=tuple(ActionPoint.from_dict(a) for a in data.get("action_points", [])),
            actions=tuple(ActionInstance.from_dict(a) for a in data.get("actions", [])),
            parameters=tuple(ProjectParameter.from_dict(p) for p in data.get("parameters", [])),
            logic=tuple(LogicItem.from_dict(li) for li in data.get("logic", [])),
            has_logic=data.get("has_logic", True),
            modified=data.get("modified"),
        )

    def action_point(self, uid: str) -> Optional[ActionPoint]:
        for ap in self.action_points:
            if ap.uid == uid:
                return ap
        return None

    def action(self, uid: str) -> Optional[ActionInstance]:
        for a in self.actions:
            if a.uid == uid:
                return a
        return None

    def parameter(self, uid: str) -> Optional[ProjectParameter]:
        for p in self.parameters:
            if p.uid == uid:
                return p
        return None
