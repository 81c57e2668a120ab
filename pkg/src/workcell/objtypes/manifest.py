"""Object-type manifests: the declarative integration contract for devices.

A manifest describes everything the system needs to know about one class of
device or service: the actions it exposes (with parameter types and value
ranges), optional robot capability flags, an optional geometry model, and
how calls are bound (built-in simulation or a remote HTTP endpoint).
Capability metadata is declared here and cross-checked at load time, so a
plugin can be any process behind HTTP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import WorkcellError
from ..model import NUMERABLE_TYPES, ObjectModel, TypedValue

PARAM_TYPES = ("boolean", "integer", "double", "string", "enumeration", "pose_ref", "joints_ref")
RESULT_TYPES = ("boolean", "integer", "double", "string", "enumeration", "pose", "joints")
BASES = ("generic", "robot", "camera", "virtual")


def _invalid(path: str, message: str) -> WorkcellError:
    return WorkcellError("MANIFEST_INVALID", f"{path}: {message}")


@dataclass(frozen=True)
class ParameterMeta:
    name: str
    type: str
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    allowed_values: tuple = ()
    description: str = ""

    def validate(self, path: str) -> None:
        if not self.name:
            raise _invalid(path, "parameter name must be nonempty")
        if self.type not in PARAM_TYPES:
            raise _invalid(path, f"unknown parameter type {self.type!r}")
        numeric = self.type in ("integer", "double")
        if (self.minimum is not None or self.maximum is not None) and not numeric:
            raise _invalid(path, "range is only valid for numeric parameters")
        if self.minimum is not None and self.maximum is not None and self.minimum > self.maximum:
            raise _invalid(path, "range minimum exceeds maximum")
        if self.type == "enumeration" and not self.allowed_values:
            raise _invalid(path, "enumeration parameter requires allowed_values")
        if self.type != "enumeration" and self.allowed_values:
            raise _invalid(path, "allowed_values is only valid for enumeration parameters")

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "type": self.type}
        if self.minimum is not None:
            out["minimum"] = self.minimum
        if self.maximum is not None:
            out["maximum"] = self.maximum
        if self.allowed_values:
            out["allowed_values"] = list(self.allowed_values)
        if self.description:
            out["description"] = self.description
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterMeta":
        return cls(
            name=data.get("name", ""),
            type=data.get("type", ""),
            minimum=data.get("minimum"),
            maximum=data.get("maximum"),
            allowed_values=tuple(data.get("allowed_values", [])),
            description=data.get("description", ""),
        )


@dataclass(frozen=True)
class ActionMeta:
    """One method of an object type exposed to end-users."""

    name: str
    parameters: tuple = ()
    returns: tuple = ()  # ordered result type names
    blocking: bool = True
    description: str = ""

    def validate(self, path: str) -> None:
        if not self.name:
            raise _invalid(path, "action name must be nonempty")
        seen = set()
        for i, p in enumerate(self.parameters):
            p.validate(f"{path}.parameters[{i}]")
            if p.name in seen:
                raise _invalid(path, f"duplicate parameter name {p.name!r}")
            seen.add(p.name)
        for i, r in enumerate(self.returns):
            if r not in RESULT_TYPES:
                raise _invalid(f"{path}.returns[{i}]", f"unknown result type {r!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameters": [p.to_dict() for p in self.parameters],
            "returns": list(self.returns),
            "blocking": self.blocking,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionMeta":
        return cls(
            name=data.get("name", ""),
            parameters=tuple(ParameterMeta.from_dict(p) for p in data.get("parameters", [])),
            returns=tuple(data.get("returns", [])),
            blocking=data.get("blocking", True),
            description=data.get("description", ""),
        )


@dataclass(frozen=True)
class RobotFeatures:
    """Optional robot capabilities; clients enable UI per these flags."""

    move_to_pose: bool = False
    forward_kinematics: bool = False
    inverse_kinematics: bool = False
    hand_teaching: bool = False
    stepping: bool = False

    def validate(self, path: str) -> None:
        if self.move_to_pose and not self.inverse_kinematics:
            raise _invalid(path, "move_to_pose requires inverse_kinematics")

    def to_dict(self) -> dict:
        return {
            "move_to_pose": self.move_to_pose,
            "forward_kinematics": self.forward_kinematics,
            "inverse_kinematics": self.inverse_kinematics,
            "hand_teaching": self.hand_teaching,
            "stepping": self.stepping,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RobotFeatures":
        return cls(**{k: bool(v) for k, v in data.items()})


@dataclass(frozen=True)
class Binding:
    """How action calls reach the device: in-process builtin or remote HTTP."""

    builtin: Optional[str] = None
    remote: Optional[str] = None  # base URL

    def validate(self, path: str) -> None:
        if (self.builtin is None) == (self.remote is None):
            raise _invalid(path, "binding must set exactly one of builtin/remote")

    def to_dict(self) -> dict:
        if self.builtin is not None:
            return {"builtin": self.builtin}
        return {"remote": self.remote}

    @classmethod
    def from_dict(cls, data: dict) -> "Binding":
        return cls(builtin=data.get("builtin"), remote=data.get("remote"))


@dataclass(frozen=True)
class ObjectTypeManifest:
    id: str
    base: str
    description: str = ""
    model: Optional[ObjectModel] = None
    actions: tuple = ()
    robot_features: Optional[RobotFeatures] = None
    binding: Binding = Binding(builtin="none")

    def validate(self) -> None:
        path = f"manifest[{self.id or '?'}]"
        if not self.id:
            raise _invalid(path + ".id", "id must be nonempty")
        if self.base not in BASES:
            raise _invalid(path + ".base", f"unknown base {self.base!r}")
        if (self.robot_features is not None) != (self.base == "robot"):
            raise _invalid(path + ".robot_features", "robot_features present iff base is robot")
        if self.robot_features is not None:
            self.robot_features.validate(path + ".robot_features")
        names = set()
        for i, a in enumerate(self.actions):
            a.validate(f"{path}.actions[{i}]")
            if a.name in names:
                raise _invalid(f"{path}.actions[{i}]", f"duplicate action name {a.name!r}")
            names.add(a.name)
        self.binding.validate(path + ".binding")

    @property
    def physical(self) -> bool:
        """Physically placed types carry a pose in the scene; virtual do not."""
        return self.base != "virtual"

    def action_meta(self, name: str) -> Optional[ActionMeta]:
        for a in self.actions:
            if a.name == name:
                return a
        return None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "base": self.base,
            "description": self.description,
            "model": self.model.to_dict() if self.model else None,
            "actions": [a.to_dict() for a in self.actions],
            "robot_features": self.robot_features.to_dict() if self.robot_features else None,
            "binding": self.binding.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectTypeManifest":
        return cls(
            id=data.get("id", ""),
            base=data.get("base", ""),
            description=data.get("description", ""),
            model=ObjectModel.from_dict(data["model"]) if data.get("model") else None,
            actions=tuple(ActionMeta.from_dict(a) for a in data.get("actions", [])),
            robot_features=(
                RobotFeatures.from_dict(data["robot_features"])
                if data.get("robot_features")
                else None
            ),
            binding=Binding.from_dict(data.get("binding", {})),
        )


class Registry:
    """Validated set of object-type manifests, keyed by manifest id."""

    def __init__(self, manifests: dict | None = None):
        self._manifests: dict = dict(manifests or {})

    def __len__(self) -> int:
        return len(self._manifests)

    def __contains__(self, type_id: str) -> bool:
        return type_id in self._manifests

    def ids(self) -> list:
        return sorted(self._manifests)

    def manifest(self, type_id: str) -> ObjectTypeManifest:
        try:
            return self._manifests[type_id]
        except KeyError:
            raise WorkcellError("UNKNOWN_TYPE", f"object type {type_id!r} is not registered")

    def get(self, type_id: str) -> Optional[ObjectTypeManifest]:
        return self._manifests.get(type_id)

    def add(self, manifest: ObjectTypeManifest) -> None:
        manifest.validate()
        if manifest.id in self._manifests:
            raise WorkcellError("DUPLICATE_TYPE", f"object type {manifest.id!r} already registered")
        self._manifests[manifest.id] = manifest

    def action_meta(self, type_id: str, action: str) -> ActionMeta:
        meta = self.manifest(type_id).action_meta(action)
        if meta is None:
            raise WorkcellError(
                "UNKNOWN_ACTION", f"object type {type_id!r} has no action {action!r}"
            )
        return meta


def load_manifests(directory) -> Registry:
    """Load and validate every ``*.json`` manifest in a directory."""
    registry = Registry()
    root = Path(directory)
    if not root.is_dir():
        raise WorkcellError("MANIFEST_INVALID", f"not a directory: {root}")
    for path in sorted(root.glob("*.json")):
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise _invalid(str(path), f"malformed JSON: {exc}")
        try:
            manifest = ObjectTypeManifest.from_dict(data)
        except (WorkcellError, TypeError, KeyError) as exc:
            raise _invalid(str(path), str(exc))
        registry.add(manifest)
    return registry


def discover_features(manifest: ObjectTypeManifest) -> RobotFeatures:
    """Features a client may rely on for this type (empty for non-robots)."""
    if manifest.robot_features is None:
        return RobotFeatures()
    return manifest.robot_features


def value_matches_parameter(value_type: str, meta: ParameterMeta) -> bool:
    """Type compatibility of a supplied value against a declared parameter.

    Integer values are accepted where a double is declared (widening); every
    other pairing must match exactly.
    """
    if value_type == meta.type:
        return True
    return meta.type == "double" and value_type == "integer"


def check_literal_against(meta: ParameterMeta, value: TypedValue) -> Optional[str]:
    """Range/enumeration check for a literal; returns a problem or None."""
    if not value_matches_parameter(value.type, meta):
        return f"expected {meta.type}, got {value.type}"
    if meta.type in ("integer", "double") and value.type in ("integer", "double"):
        if meta.minimum is not None and value.value < meta.minimum:
            return f"value {value.value} below minimum {meta.minimum}"
        if meta.maximum is not None and value.value > meta.maximum:
            return f"value {value.value} above maximum {meta.maximum}"
    if meta.type == "enumeration" and value.value not in meta.allowed_values:
        return f"value {value.value!r} not in allowed values"
    return None


def is_numerable(type_name: str) -> bool:
    return type_name in NUMERABLE_TYPES
