"""Structural validation of scenes and projects.

Rules live here rather than in the constructors so that user interfaces can
manipulate half-finished data freely; validity is only demanded by build and
by the server before persisting a mutation.  Every violated rule becomes a
Diagnostic carrying a stable rule id and the offending entity uid.

The program flow graph (actions plus the START/END sentinels, connected by
logic items) must be acyclic, and every result consumed through a link must
be produced on every path beforehand: the producing action has to strictly
dominate the consumer from START.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .errors import WorkcellError
from .geometry import Pose, Position, compose, transform
from .model import (
    END,
    START,
    ActionPoint,
    Project,
    Scene,
    TypedValue,
)
from .objtypes.manifest import Registry, check_literal_against, is_numerable, value_matches_parameter

# Rule identifiers (stable; referenced by clients and tests).
DUPLICATE_UID = "DUPLICATE_UID"
DUPLICATE_NAME = "DUPLICATE_NAME"
UNKNOWN_TYPE = "UNKNOWN_TYPE"
POSE_MISSING = "POSE_MISSING"
POSE_UNEXPECTED = "POSE_UNEXPECTED"
SCENE_MISMATCH = "SCENE_MISMATCH"
PARENT_MISSING = "PARENT_MISSING"
UNKNOWN_OBJECT = "UNKNOWN_OBJECT"
UNKNOWN_ACTION = "UNKNOWN_ACTION"
UNKNOWN_ACTION_POINT = "UNKNOWN_ACTION_POINT"
UNKNOWN_ORIENTATION = "UNKNOWN_ORIENTATION"
UNKNOWN_JOINTS = "UNKNOWN_JOINTS"
UNKNOWN_PARAMETER = "UNKNOWN_PARAMETER"
UNKNOWN_LINK = "UNKNOWN_LINK"
LINK_INDEX = "LINK_INDEX"
LINK_NOT_DOMINATING = "LINK_NOT_DOMINATING"
PARAMETER_ARITY = "PARAMETER_ARITY"
PARAMETER_TYPE = "PARAMETER_TYPE"
RESULT_COUNT = "RESULT_COUNT"
RESULT_NAME_INVALID = "RESULT_NAME_INVALID"
DUPLICATE_RESULT_NAME = "DUPLICATE_RESULT_NAME"
INVALID_EDGE = "INVALID_EDGE"
DUPLICATE_EDGE = "DUPLICATE_EDGE"
MULTIPLE_UNCONDITIONED = "MULTIPLE_UNCONDITIONED"
MIXED_EDGES = "MIXED_EDGES"
CONDITION_MIXED_SOURCE = "CONDITION_MIXED_SOURCE"
CONDITION_DUPLICATE_VALUE = "CONDITION_DUPLICATE_VALUE"
CONDITION_NOT_NUMERABLE = "CONDITION_NOT_NUMERABLE"
CONDITION_TYPE_MISMATCH = "CONDITION_TYPE_MISMATCH"
CYCLE_DETECTED = "CYCLE_DETECTED"

_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    entity: Optional[str]
    message: str

    def to_dict(self) -> dict:
        return {"rule": self.rule, "entity": self.entity, "message": self.message}

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(data["rule"], data.get("entity"), data["message"])


def validate_scene(scene: Scene, registry: Registry) -> list:
    """Empty list iff all scene invariants hold."""
    diags: list = []
    uids: set = set()
    names: set = set()
    for obj in scene.objects:
        if obj.uid in uids:
            diags.append(Diagnostic(DUPLICATE_UID, obj.uid, f"duplicate object uid {obj.uid!r}"))
        uids.add(obj.uid)
        if obj.name in names:
            diags.append(Diagnostic(DUPLICATE_NAME, obj.uid, f"duplicate object name {obj.name!r}"))
        names.add(obj.name)
        manifest = registry.get(obj.object_type)
        if manifest is None:
            diags.append(
                Diagnostic(UNKNOWN_TYPE, obj.uid, f"object type {obj.object_type!r} not registered")
            )
            continue
        if manifest.physical and obj.pose is None:
            diags.append(
                Diagnostic(POSE_MISSING, obj.uid, f"{obj.name!r} is physical but has no pose")
            )
        if not manifest.physical and obj.pose is not None:
            diags.append(
                Diagnostic(POSE_UNEXPECTED, obj.uid, f"{obj.name!r} is virtual but has a pose")
            )
    return diags


def resolve_action_point(ap: ActionPoint, scene: Scene) -> Position:
    """World-frame position of an action point (parent pose applied)."""
    if ap.parent is None:
        return ap.position
    parent = scene.object(ap.parent)
    if parent is None or parent.pose is None:
        raise WorkcellError("PARENT_MISSING", f"action point parent {ap.parent!r} has no pose")
    return transform(parent.pose, ap.position)


def resolve_ap_pose(ap: ActionPoint, orientation_name: str, scene: Scene) -> Pose:
    """World-frame pose of a named orientation at an action point.

    Orientations are parent-relative, consistent with the position.
    """
    named = ap.orientation(orientation_name)
    if named is None:
        raise WorkcellError(
            "UNKNOWN_ORIENTATION", f"action point {ap.name!r} has no orientation {orientation_name!r}"
        )
    local = Pose(ap.position, named.orientation)
    if ap.parent is None:
        return local
    parent = scene.object(ap.parent)
    if parent is None or parent.pose is None:
        raise WorkcellError("PARENT_MISSING", f"action point parent {ap.parent!r} has no pose")
    return compose(parent.pose, local)


def _flow_edges(project: Project) -> list:
    """(start, end, logic item) triples with structurally legal endpoints."""
    action_uids = {a.uid for a in project.actions}
    edges = []
    for li in project.logic:
        if li.start == li.end:
            continue
        if li.start != START and li.start not in action_uids:
            continue
        if li.end != END and li.end not in action_uids:
            continue
        if li.start == END or li.end == START:
            continue
        edges.append((li.start, li.end, li))
    return edges


def _find_cycle(nodes: set, succ: dict) -> Optional[list]:
    """Any directed cycle, as a node list, or None."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    parent: dict = {}
    for root in sorted(nodes):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(succ.get(root, ()))))]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    parent[nxt] = node
                    stack.append((nxt, iter(sorted(succ.get(nxt, ())))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def _topological_order(nodes: set, succ: dict) -> list:
    indeg = {n: 0 for n in nodes}
    for n in nodes:
        for m in succ.get(n, ()):
            indeg[m] += 1
    ready = sorted(n for n in nodes if indeg[n] == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in sorted(succ.get(n, ())):
            indeg[m] -= 1
            if indeg[m] == 0:
                # Insertion keeps `ready` sorted: deterministic order.
                lo = 0
                while lo < len(ready) and ready[lo] < m:
                    lo += 1
                ready.insert(lo, m)
    return order


def _dominators(succ: dict, order: list, entry: str) -> dict:
    """dom[n] = set of nodes on every path from entry to n (n included).

    The flow graph is a DAG here, so one pass in topological order suffices.
    """
    preds: dict = {n: set() for n in order}
    for n in order:
        for m in succ.get(n, ()):
            if m in preds:
                preds[m].add(n)
    dom: dict = {}
    for n in order:
        ps = [dom[p] for p in preds[n] if p in dom]
        if n == entry:
            dom[n] = {n}
        elif ps:
            inter = set(ps[0])
            for s in ps[1:]:
                inter &= s
            inter.add(n)
            dom[n] = inter
    return dom


def validate_project(project: Project, scene: Scene, registry: Registry) -> list:
    """Empty list iff the project is internally consistent, type-correct,
    acyclic, and every linked result is produced before use."""
    diags: list = []

    if project.scene != scene.uid:
        diags.append(
            Diagnostic(SCENE_MISMATCH, project.uid, "project references a different scene")
        )

    # Uid/name uniqueness across the project.
    uids: set = set()
    for group in (project.action_points, project.actions, project.parameters, project.logic):
        for item in group:
            if item.uid in uids:
                diags.append(Diagnostic(DUPLICATE_UID, item.uid, f"duplicate uid {item.uid!r}"))
            uids.add(item.uid)

    ap_names: set = set()
    for ap in project.action_points:
        if ap.name in ap_names:
            diags.append(
                Diagnostic(DUPLICATE_NAME, ap.uid, f"duplicate action point name {ap.name!r}")
            )
        ap_names.add(ap.name)
        if ap.parent is not None:
            parent = scene.object(ap.parent)
            if parent is None or parent.pose is None:
                diags.append(
                    Diagnostic(PARENT_MISSING, ap.uid, f"parent {ap.parent!r} not posed in scene")
                )
        for coll, rule in ((ap.orientations, "orientation"), (ap.joints, "joints")):
            seen: set = set()
            for entry in coll:
                if entry.name in seen:
                    diags.append(
                        Diagnostic(
                            DUPLICATE_NAME, ap.uid, f"duplicate {rule} name {entry.name!r}"
                        )
                    )
                seen.add(entry.name)

    action_names: set = set()
    result_names: set = set()
    param_names: set = set()
    for pp in project.parameters:
        if pp.name in param_names:
            diags.append(
                Diagnostic(DUPLICATE_NAME, pp.uid, f"duplicate parameter name {pp.name!r}")
            )
        param_names.add(pp.name)
        if pp.value.type not in ("boolean", "integer", "double", "string", "enumeration",
                                 "pose", "joints"):
            diags.append(
                Diagnostic(PARAMETER_TYPE, pp.uid, "project parameter must be a plain value")
            )

    actions_by_uid = {a.uid: a for a in project.actions}

    def result_type(action_uid: str, index: int) -> Optional[str]:
        """Declared type of a result slot, or None if unresolvable."""
        act = actions_by_uid.get(action_uid)
        if act is None:
            return None
        obj = scene.object(act.target[0])
        if obj is None or obj.object_type not in registry:
            return None
        meta = registry.manifest(obj.object_type).action_meta(act.target[1])
        if meta is None or index < 0 or index >= len(meta.returns):
            return None
        return meta.returns[index]

    for act in project.actions:
        if act.name in action_names:
            diags.append(Diagnostic(DUPLICATE_NAME, act.uid, f"duplicate action name {act.name!r}"))
        action_names.add(act.name)
        if project.action_point(act.owner) is None:
            diags.append(
                Diagnostic(UNKNOWN_ACTION_POINT, act.uid, f"owner {act.owner!r} not in project")
            )
        obj = scene.object(act.target[0])
        if obj is None:
            diags.append(
                Diagnostic(UNKNOWN_OBJECT, act.uid, f"target object {act.target[0]!r} not in scene")
            )
            continue
        manifest = registry.get(obj.object_type)
        if manifest is None:
            diags.append(
                Diagnostic(UNKNOWN_TYPE, act.uid, f"object type {obj.object_type!r} not registered")
            )
            continue
        meta = manifest.action_meta(act.target[1])
        if meta is None:
            diags.append(
                Diagnostic(
                    UNKNOWN_ACTION,
                    act.uid,
                    f"{obj.object_type!r} has no action {act.target[1]!r}",
                )
            )
            continue

        if len(act.results) != len(meta.returns):
            diags.append(
                Diagnostic(
                    RESULT_COUNT,
                    act.uid,
                    f"{act.name!r} declares {len(act.results)} results, action returns "
                    f"{len(meta.returns)}",
                )
            )
        for rname in act.results:
            if not _IDENTIFIER.match(rname):
                diags.append(
                    Diagnostic(RESULT_NAME_INVALID, act.uid, f"result name {rname!r} not an identifier")
                )
            if rname in result_names:
                diags.append(
                    Diagnostic(DUPLICATE_RESULT_NAME, act.uid, f"result name {rname!r} reused")
                )
            result_names.add(rname)

        if len(act.parameters) != len(meta.parameters):
            diags.append(
                Diagnostic(
                    PARAMETER_ARITY,
                    act.uid,
                    f"{act.name!r} passes {len(act.parameters)} arguments, action takes "
                    f"{len(meta.parameters)}",
                )
            )
            continue
        for i, (pv, pmeta) in enumerate(zip(act.parameters, meta.parameters)):
            where = f"{act.name!r} argument {i} ({pmeta.name})"
            if pv.literal is not None:
                problem = check_literal_against(pmeta, pv.literal)
                if problem:
                    diags.append(Diagnostic(PARAMETER_TYPE, act.uid, f"{where}: {problem}"))
                elif pv.literal.type == "pose_ref":
                    ref = pv.literal.value
                    ap = project.action_point(ref.action_point)
                    if ap is None:
                        diags.append(
                            Diagnostic(
                                UNKNOWN_ACTION_POINT, act.uid, f"{where}: no action point "
                                f"{ref.action_point!r}"
                            )
                        )
                    elif ap.orientation(ref.orientation) is None:
                        diags.append(
                            Diagnostic(
                                UNKNOWN_ORIENTATION, act.uid,
                                f"{where}: no orientation {ref.orientation!r}",
                            )
                        )
                elif pv.literal.type == "joints_ref":
                    ref = pv.literal.value
                    ap = project.action_point(ref.action_point)
                    if ap is None:
                        diags.append(
                            Diagnostic(
                                UNKNOWN_ACTION_POINT, act.uid, f"{where}: no action point "
                                f"{ref.action_point!r}"
                            )
                        )
                    elif ap.joints_entry(ref.name) is None:
                        diags.append(
                            Diagnostic(UNKNOWN_JOINTS, act.uid, f"{where}: no joints {ref.name!r}")
                        )
            elif pv.parameter is not None:
                pp = project.parameter(pv.parameter)
                if pp is None:
                    diags.append(
                        Diagnostic(
                            UNKNOWN_PARAMETER, act.uid, f"{where}: no project parameter "
                            f"{pv.parameter!r}"
                        )
                    )
                else:
                    problem = check_literal_against(pmeta, pp.value)
                    if problem:
                        diags.append(Diagnostic(PARAMETER_TYPE, act.uid, f"{where}: {problem}"))
            else:
                src, idx = pv.link
                if src not in actions_by_uid:
                    diags.append(
                        Diagnostic(UNKNOWN_LINK, act.uid, f"{where}: links unknown action {src!r}")
                    )
                    continue
                rtype = result_type(src, idx)
                if rtype is None:
                    diags.append(
                        Diagnostic(LINK_INDEX, act.uid, f"{where}: result index {idx} out of range")
                    )
                elif not value_matches_parameter(rtype, pmeta):
                    diags.append(
                        Diagnostic(
                            PARAMETER_TYPE, act.uid, f"{where}: expected {pmeta.type}, linked "
                            f"result is {rtype}"
                        )
                    )

    # Logic edges.
    action_uids = set(actions_by_uid)
    unconditioned_pairs: set = set()
    out_unconditioned: dict = {}
    out_conditioned: dict = {}
    for li in project.logic:
        ok = True
        if li.start == li.end:
            diags.append(Diagnostic(INVALID_EDGE, li.uid, "edge endpoints must differ"))
            ok = False
        if li.start != START and li.start not in action_uids or li.start == END:
            diags.append(Diagnostic(UNKNOWN_ACTION, li.uid, f"edge start {li.start!r} unknown"))
            ok = False
        if li.end != END and li.end not in action_uids or li.end == START:
            diags.append(Diagnostic(UNKNOWN_ACTION, li.uid, f"edge end {li.end!r} unknown"))
            ok = False
        if not ok:
            continue
        if li.condition is None:
            pair = (li.start, li.end)
            if pair in unconditioned_pairs:
                diags.append(
                    Diagnostic(DUPLICATE_EDGE, li.uid, f"duplicate edge {li.start}->{li.end}")
                )
            unconditioned_pairs.add(pair)
            out_unconditioned.setdefault(li.start, []).append(li)
        else:
            out_conditioned.setdefault(li.start, []).append(li)

    for src, items in out_unconditioned.items():
        if len(items) > 1:
            diags.append(
                Diagnostic(
                    MULTIPLE_UNCONDITIONED, items[1].uid,
                    f"{src!r} has multiple unconditioned outgoing edges",
                )
            )
        if src in out_conditioned:
            diags.append(
                Diagnostic(MIXED_EDGES, items[0].uid,
                           f"{src!r} mixes conditioned and unconditioned outgoing edges")
            )

    for src, items in out_conditioned.items():
        whats = {li.condition.what for li in items}
        if len(whats) > 1:
            diags.append(
                Diagnostic(CONDITION_MIXED_SOURCE, items[0].uid,
                           f"conditioned edges from {src!r} reference different results")
            )
        seen_values: set = set()
        for li in items:
            cond = li.condition
            key = (cond.value.type, cond.value.value)
            if key in seen_values:
                diags.append(
                    Diagnostic(CONDITION_DUPLICATE_VALUE, li.uid,
                               f"duplicate condition value {cond.value.value!r} from {src!r}")
                )
            seen_values.add(key)
            if not is_numerable(cond.value.type):
                diags.append(
                    Diagnostic(CONDITION_NOT_NUMERABLE, li.uid,
                               f"condition value type {cond.value.type!r} is not numerable")
                )
            rtype = result_type(*cond.what)
            if rtype is not None:
                if not is_numerable(rtype):
                    diags.append(
                        Diagnostic(CONDITION_NOT_NUMERABLE, li.uid,
                                   f"condition references result of type {rtype!r}")
                    )
                elif rtype != cond.value.type:
                    diags.append(
                        Diagnostic(CONDITION_TYPE_MISMATCH, li.uid,
                                   f"condition value is {cond.value.type!r}, result is {rtype!r}")
                    )

    # Flow graph: acyclicity, then result availability via dominance.
    edges = _flow_edges(project)
    nodes = action_uids | {START, END}
    succ: dict = {}
    for s, e, _li in edges:
        succ.setdefault(s, set()).add(e)

    cycle = _find_cycle(nodes, succ)
    if cycle is not None:
        diags.append(
            Diagnostic(CYCLE_DETECTED, cycle[0],
                       "flow graph has a cycle: " + " -> ".join(cycle))
        )
        return diags

    order = _topological_order(nodes, succ)
    dom = _dominators(succ, order, START)
    reachable = set(dom)

    for act in project.actions:
        if act.uid not in reachable:
            continue
        for i, pv in enumerate(act.parameters):
            if pv.link is None:
                continue
            src = pv.link[0]
            if src in actions_by_uid and src not in (dom[act.uid] - {act.uid}):
                diags.append(
                    Diagnostic(
                        LINK_NOT_DOMINATING, act.uid,
                        f"{act.name!r} argument {i} uses a result of {src!r} that is not "
                        "produced on every path",
                    )
                )

    for src, items in out_conditioned.items():
        if src == START:
            for li in items:
                diags.append(
                    Diagnostic(LINK_NOT_DOMINATING, li.uid,
                               "condition before any action has run")
                )
            continue
        if src not in reachable:
            continue
        for li in items:
            producer = li.condition.what[0]
            if producer in actions_by_uid and producer not in dom[src]:
                diags.append(
                    Diagnostic(
                        LINK_NOT_DOMINATING, li.uid,
                        f"condition uses a result of {producer!r} that is not produced on "
                        "every path",
                    )
                )

    return diags
