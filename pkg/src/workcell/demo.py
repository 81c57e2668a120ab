"""The bundled demo workplace: a SimScara, a Logic helper, and a small
branching program (read an input, move, compare against 5, move again when
the comparison holds).

Fixture uids are fixed strings so builds of the demo are reproducible.
"""

from __future__ import annotations

import json
from pathlib import Path

from .geometry import Orientation, Pose, Position
from .model import (
    END,
    START,
    ActionInstance,
    ActionObject,
    ActionPoint,
    Condition,
    LogicItem,
    NamedOrientation,
    ParameterValue,
    PoseRef,
    Project,
    Scene,
    TypedValue,
)
from .objtypes import logic as logic_type
from .objtypes import scara as scara_type
from .objtypes.manifest import Registry


def demo_registry() -> Registry:
    registry = Registry()
    registry.add(scara_type.MANIFEST)
    registry.add(logic_type.MANIFEST)
    return registry


def demo_scene() -> Scene:
    return Scene(
        uid="scn_demo",
        name="demo",
        objects=(
            ActionObject(
                uid="obj_robot",
                name="robot",
                object_type="SimScara",
                pose=Pose(Position(0.0, 0.0, 0.0), Orientation()),
            ),
            ActionObject(uid="obj_logic", name="logic", object_type="Logic"),
        ),
    )


def demo_project() -> Project:
    here = ActionPoint(
        uid="ap_here",
        name="here",
        position=Position(0.30, 0.05, 0.10),
        orientations=(NamedOrientation("default", Orientation()),),
    )
    there = ActionPoint(
        uid="ap_there",
        name="there",
        position=Position(0.20, -0.10, 0.05),
        orientations=(NamedOrientation("default", Orientation()),),
    )
    actions = (
        ActionInstance(
            uid="act_get_in_val",
            name="get_in_val",
            owner="ap_here",
            target=("obj_robot", "get_input"),
            parameters=(),
            results=("inp_value",),
        ),
        ActionInstance(
            uid="act_move_here",
            name="move_here",
            owner="ap_here",
            target=("obj_robot", "move"),
            parameters=(
                ParameterValue(literal=TypedValue("pose_ref", PoseRef("ap_here", "default"))),
            ),
        ),
        ActionInstance(
            uid="act_comp",
            name="comp",
            owner="ap_here",
            target=("obj_logic", "greater_than"),
            parameters=(
                ParameterValue(link=("act_get_in_val", 0)),
                ParameterValue(literal=TypedValue("integer", 5)),
            ),
            results=("comp_res",),
        ),
        ActionInstance(
            uid="act_move_there",
            name="move_there",
            owner="ap_there",
            target=("obj_robot", "move"),
            parameters=(
                ParameterValue(literal=TypedValue("pose_ref", PoseRef("ap_there", "default"))),
            ),
        ),
    )
    logic = (
        LogicItem(uid="lgi_start", start=START, end="act_get_in_val"),
        LogicItem(uid="lgi_get_move", start="act_get_in_val", end="act_move_here"),
        LogicItem(uid="lgi_move_comp", start="act_move_here", end="act_comp"),
        LogicItem(
            uid="lgi_true",
            start="act_comp",
            end="act_move_there",
            condition=Condition(("act_comp", 0), TypedValue("boolean", True)),
        ),
        LogicItem(
            uid="lgi_false",
            start="act_comp",
            end=END,
            condition=Condition(("act_comp", 0), TypedValue("boolean", False)),
        ),
        LogicItem(uid="lgi_there_end", start="act_move_there", end=END),
    )
    return Project(
        uid="prj_demo",
        name="demo",
        scene="scn_demo",
        action_points=(here, there),
        actions=actions,
        logic=logic,
        has_logic=True,
    )


def write_manifests(directory) -> list:
    """Write the built-in object type manifests as JSON files."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for manifest in (scara_type.MANIFEST, logic_type.MANIFEST):
        path = root / f"{manifest.id}.json"
        path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written
