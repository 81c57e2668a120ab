import numpy as np
import pytest

from helpers import eval_script_body, logic_scene, random_flow_project
from workcell.compiler import build
from workcell.errors import WorkcellError
from workcell.model import (
    END,
    START,
    ActionInstance,
    ActionPoint,
    Condition,
    LogicItem,
    ParameterValue,
    Position,
    Project,
    TypedValue,
)
from workcell.script import PREAMBLE_MARKER, emit_script, render_value, script_body

LISTING_BODY = (
    'inp_value = robot.get_input(an="get_in_val")\n'
    'robot.move(an="move_here")\n'
    'comp_res = logic.greater_than(inp_value, 5, an="comp")\n'
    "\n"
    "if comp_res == True:\n"
    '    robot.move(an="move_there")\n'
)


def test_demo_emits_reference_listing(registry, scene, project):
    text = emit_script(project, scene, registry)
    assert text.startswith(PREAMBLE_MARKER)
    assert script_body(text) == LISTING_BODY


def test_empty_project_emits_empty_body(registry):
    scene = logic_scene()
    project = Project(uid="prj_e", name="e", scene=scene.uid, has_logic=True)
    assert script_body(emit_script(project, scene, registry)) == ""


def _diamond_project() -> Project:
    def comparison(uid, name, results):
        return ActionInstance(
            uid=uid, name=name, owner="ap_0", target=("obj_logic", "equals"),
            parameters=(
                ParameterValue(literal=TypedValue("integer", 1)),
                ParameterValue(literal=TypedValue("integer", 1)),
            ),
            results=results,
        )

    return Project(
        uid="prj_d", name="diamond", scene="scn_logic",
        action_points=(ActionPoint(uid="ap_0", name="anchor", position=Position()),),
        actions=(
            comparison("act_a", "a", ("ra",)),
            comparison("act_b", "b", ("rb",)),
            comparison("act_c", "c", ("rc",)),
            comparison("act_d", "d", ("rd",)),
        ),
        logic=(
            LogicItem("lgi_1", START, "act_a"),
            LogicItem("lgi_2", "act_a", "act_b",
                      condition=Condition(("act_a", 0), TypedValue("boolean", True))),
            LogicItem("lgi_3", "act_a", "act_c",
                      condition=Condition(("act_a", 0), TypedValue("boolean", False))),
            LogicItem("lgi_4", "act_b", "act_d"),
            LogicItem("lgi_5", "act_c", "act_d"),
        ),
        has_logic=True,
    )


def test_diamond_join_refuses_script(registry):
    scene = logic_scene()
    with pytest.raises(WorkcellError) as err:
        emit_script(_diamond_project(), scene, registry)
    assert err.value.code == "UNSTRUCTURED_FLOW"


def test_diamond_still_builds_without_script(registry):
    scene = logic_scene()
    package = build(_diamond_project(), scene, registry)
    assert package.script is None
    assert any(i.op == "branch" for i in package.instructions)


def test_nested_branches_emit_nested_ifs(registry):
    scene = logic_scene()
    rng = np.random.default_rng(5)
    for _ in range(30):
        project = random_flow_project(rng, n_actions=int(rng.integers(3, 10)),
                                      p_branch=0.5, structured=True)
        body = script_body(emit_script(project, scene, registry))
        # the reference evaluator must accept whatever we emit
        trace = eval_script_body(body)
        assert all(name.startswith("a") for name in trace)


def test_integer_branch_emits_elif_chain(registry, scene, project):
    data = project.to_dict()
    # rewire: branch on the get_input integer result with values 1 and 2
    data["logic"] = [
        {"uid": "lgi_1", "start": START, "end": "act_get_in_val", "condition": None},
        {"uid": "lgi_2", "start": "act_get_in_val", "end": "act_move_here",
         "condition": {"what": {"action": "act_get_in_val", "result": 0},
                       "value": {"type": "integer", "value": 1}}},
        {"uid": "lgi_3", "start": "act_get_in_val", "end": "act_move_there",
         "condition": {"what": {"action": "act_get_in_val", "result": 0},
                       "value": {"type": "integer", "value": 2}}},
    ]
    data["actions"] = [a for a in data["actions"] if a["uid"] != "act_comp"]
    body = script_body(emit_script(Project.from_dict(data), scene, registry))
    assert "if inp_value == 1:" in body
    assert "elif inp_value == 2:" in body


def test_render_value_canonical_decimal():
    assert render_value("integer", 5) == "5"
    assert render_value("double", 0.5) == "0.5"
    assert render_value("double", 2.0) == "2.0"
    assert render_value("boolean", True) == "True"
    assert render_value("boolean", False) == "False"
    assert render_value("string", 'say "hi"') == '"say \\"hi\\""'
    assert render_value("enumeration", "fast") == '"fast"'


def test_object_names_sanitized(registry, scene, project):
    data = scene.to_dict()
    for obj in data["objects"]:
        if obj["name"] == "robot":
            obj["name"] = "my robot-2"
    from workcell.model import Scene

    body = script_body(emit_script(project, Scene.from_dict(data), registry))
    assert "my_robot_2.move" in body
