"""Build service: freeze a scene+project into a self-contained package.

Lowering turns the validated flow DAG into a branch-resolved instruction
list.  Control-flow semantics: execution starts at START; an action's
unconditioned successor follows it; conditioned successors branch on the
referenced result; a condition value with no matching edge falls to END;
END halts, or jumps back to the start when the package loops.

Everything an execution needs (scene, project, manifests, instructions,
script text) is embedded, so later edits to the live project cannot affect
an existing package.  Builds are deterministic: identical inputs produce a
byte-identical package, and the package uid is a content hash.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import WorkcellError
from .model import (
    END,
    START,
    ActionInstance,
    Joints,
    Project,
    Scene,
    canonical_json,
    now_iso,
)
from .objtypes.manifest import ObjectTypeManifest, Registry
from .script import emit_script
from .validation import (
    Diagnostic,
    resolve_ap_pose,
    validate_project,
    validate_scene,
)

START_LABEL = "START"
END_LABEL = "END"


def slot_id(action_uid: str, result_index: int) -> str:
    return f"{action_uid}:{result_index}"


@dataclass(frozen=True)
class Instruction:
    """One lowered step.  ``op`` is call | branch | label | jump | halt."""

    op: str
    # call
    action: Optional[str] = None  # action uid
    name: Optional[str] = None  # human-readable action name
    target_object: Optional[str] = None  # object uid
    target_action: Optional[str] = None  # manifest action name
    args: tuple = ()  # {"immediate": value} | {"slot": slot id}
    results: tuple = ()  # slot ids the call fills
    # branch
    slot: Optional[str] = None
    table: tuple = ()  # ({"type","value"}, label) pairs
    default: Optional[str] = None
    # label / jump
    label: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict = {"op": self.op}
        if self.op == "call":
            out.update(
                action=self.action,
                name=self.name,
                target_object=self.target_object,
                target_action=self.target_action,
                args=list(self.args),
                results=list(self.results),
            )
        elif self.op == "branch":
            out.update(
                slot=self.slot,
                table=[[value, label] for value, label in self.table],
                default=self.default,
            )
        elif self.op in ("label", "jump"):
            out.update(label=self.label)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Instruction":
        op = data["op"]
        if op == "call":
            return cls(
                op=op,
                action=data["action"],
                name=data["name"],
                target_object=data["target_object"],
                target_action=data["target_action"],
                args=tuple(data["args"]),
                results=tuple(data["results"]),
            )
        if op == "branch":
            return cls(
                op=op,
                slot=data["slot"],
                table=tuple((entry[0], entry[1]) for entry in data["table"]),
                default=data["default"],
            )
        if op in ("label", "jump"):
            return cls(op=op, label=data["label"])
        return cls(op=op)


def validate_instructions(instructions: tuple) -> None:
    """Every referenced label must exist exactly once."""
    defined: dict = {}
    for instr in instructions:
        if instr.op == "label":
            defined[instr.label] = defined.get(instr.label, 0) + 1
    for label, count in defined.items():
        if count != 1:
            raise WorkcellError("BUILD_FAILED", f"label {label!r} defined {count} times")
    referenced = set()
    for instr in instructions:
        if instr.op == "jump":
            referenced.add(instr.label)
        elif instr.op == "branch":
            referenced.add(instr.default)
            referenced.update(label for _v, label in instr.table)
    missing = referenced - set(defined)
    if missing:
        raise WorkcellError("BUILD_FAILED", f"undefined labels: {sorted(missing)}")


@dataclass(frozen=True)
class ExecutionPackage:
    uid: str
    created: str
    scene: Scene
    project: Project
    manifests: tuple  # ObjectTypeManifest list, sorted by id
    instructions: tuple
    script: Optional[str]  # None when flow is unstructured
    loop: bool

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "created": self.created,
            "scene": self.scene.to_dict(),
            "project": self.project.to_dict(),
            "manifests": [m.to_dict() for m in self.manifests],
            "instructions": [i.to_dict() for i in self.instructions],
            "script": self.script,
            "loop": self.loop,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExecutionPackage":
        return cls(
            uid=data["uid"],
            created=data["created"],
            scene=Scene.from_dict(data["scene"]),
            project=Project.from_dict(data["project"]),
            manifests=tuple(ObjectTypeManifest.from_dict(m) for m in data["manifests"]),
            instructions=tuple(Instruction.from_dict(i) for i in data["instructions"]),
            script=data.get("script"),
            loop=data["loop"],
        )

    def registry(self) -> Registry:
        return Registry({m.id: m for m in self.manifests})


class BuildError(WorkcellError):
    """Build refused; carries the validation diagnostics."""

    def __init__(self, diagnostics: list, message: str = "project failed validation"):
        super().__init__("BUILD_FAILED", message)
        self.diagnostics = diagnostics


def flow_successors(project: Project) -> dict:
    """uid -> {"next": target|None, "branch": [(condition, target)...]}.

    Only structurally resolvable edges participate (validation guarantees
    there are no others by build time).
    """
    action_uids = {a.uid for a in project.actions}
    succ: dict = {}
    for li in project.logic:
        if li.start != START and li.start not in action_uids:
            continue
        if li.end != END and li.end not in action_uids:
            continue
        entry = succ.setdefault(li.start, {"next": None, "branch": []})
        if li.condition is None:
            entry["next"] = li.end
        else:
            entry["branch"].append((li.condition, li.end))
    return succ


def condition_sort_key(condition) -> tuple:
    value = condition.value.value
    if condition.value.type == "boolean":
        return (0, not value)  # True before False
    if condition.value.type == "integer":
        return (1, value)
    return (2, str(value))


def reachable_order(project: Project) -> list:
    """Reachable actions from START, in deterministic topological order."""
    succ = flow_successors(project)
    reachable = set()
    frontier = [START]
    while frontier:
        node = frontier.pop()
        entry = succ.get(node)
        if entry is None:
            continue
        targets = [entry["next"]] if entry["next"] else []
        targets += [t for _c, t in entry["branch"]]
        for t in targets:
            if t != END and t not in reachable:
                reachable.add(t)
                frontier.append(t)
    indeg = {n: 0 for n in reachable}
    for n in reachable:
        entry = succ.get(n)
        if not entry:
            continue
        targets = ([entry["next"]] if entry["next"] else []) + [t for _c, t in entry["branch"]]
        for t in targets:
            if t in indeg and t != n:
                indeg[t] += 1
    # Entry nodes of the reachable region come from START only.
    start_entry = succ.get(START)
    order = []
    ready = sorted(n for n in reachable if indeg[n] == 0)
    if start_entry and start_entry["next"] in reachable:
        first = start_entry["next"]
        ready.remove(first)
        ready.insert(0, first)
    while ready:
        node = ready.pop(0)
        order.append(node)
        entry = succ.get(node)
        if not entry:
            continue
        targets = ([entry["next"]] if entry["next"] else []) + [t for _c, t in entry["branch"]]
        for t in sorted(set(targets)):
            if t in indeg and t != node:
                indeg[t] -= 1
                if indeg[t] == 0:
                    pos = 0
                    while pos < len(ready) and ready[pos] < t:
                        pos += 1
                    ready.insert(pos, t)
    return order


def lower_parameters(action: ActionInstance, project: Project, scene: Scene,
                     registry: Registry) -> list:
    """Resolve an action's arguments into immediate values or result slots.

    Literals and project parameters freeze to immediates (constants are part
    of the package); pose/joints references resolve to world-frame values;
    links become slot references to the producing call.
    """
    meta = registry.action_meta(scene.object(action.target[0]).object_type, action.target[1])
    slots = []
    for pv, pmeta in zip(action.parameters, meta.parameters):
        if pv.link is not None:
            slots.append({"slot": slot_id(pv.link[0], pv.link[1])})
            continue
        value = pv.literal if pv.literal is not None else project.parameter(pv.parameter).value
        if value.type == "pose_ref":
            ap = project.action_point(value.value.action_point)
            pose = resolve_ap_pose(ap, value.value.orientation, scene)
            slots.append({"immediate": pose.to_dict()})
        elif value.type == "joints_ref":
            ap = project.action_point(value.value.action_point)
            entry = ap.joints_entry(value.value.name)
            slots.append({"immediate": entry.joints.to_dict()})
        elif value.type in ("pose", "joints"):
            slots.append({"immediate": value.value.to_dict()})
        else:
            slots.append({"immediate": value.value})
    return slots


def _lower(project: Project, scene: Scene, registry: Registry, loop: bool) -> tuple:
    succ = flow_successors(project)
    order = reachable_order(project)
    actions = {a.uid: a for a in project.actions}
    objects = {o.uid: o for o in scene.objects}

    labels: dict = {}
    counter = [0]

    def label_for(target: str) -> str:
        if target == END:
            return labels.setdefault(END, END_LABEL)
        if target not in labels:
            counter[0] += 1
            labels[target] = f"L{counter[0]}"
        return labels[target]

    blocks = []
    for i, uid in enumerate(order):
        act = actions[uid]
        meta = registry.action_meta(objects[act.target[0]].object_type, act.target[1])
        call = Instruction(
            op="call",
            action=uid,
            name=act.name,
            target_object=act.target[0],
            target_action=act.target[1],
            args=tuple(lower_parameters(act, project, scene, registry)),
            results=tuple(slot_id(uid, k) for k in range(len(meta.returns))),
        )
        entry = succ.get(uid) or {"next": None, "branch": []}
        following = order[i + 1] if i + 1 < len(order) else END
        if entry["branch"]:
            table = []
            for cond, target in sorted(entry["branch"], key=lambda ct: condition_sort_key(ct[0])):
                if target == END:
                    continue  # matches the default
                table.append((cond.value.to_dict(), label_for(target)))
            terminator = Instruction(
                op="branch",
                slot=slot_id(*entry["branch"][0][0].what),
                table=tuple(table),
                default=label_for(END),
            )
        else:
            target = entry["next"] or END
            if target == following:
                terminator = None
            else:
                terminator = Instruction(op="jump", label=label_for(target))
        blocks.append((uid, call, terminator))

    instructions = []
    if loop:
        instructions.append(Instruction(op="label", label=START_LABEL))
    for uid, call, terminator in blocks:
        if uid in labels:
            instructions.append(Instruction(op="label", label=labels[uid]))
        instructions.append(call)
        if terminator is not None:
            instructions.append(terminator)
    if END in labels:
        instructions.append(Instruction(op="label", label=END_LABEL))
    if loop:
        instructions.append(Instruction(op="jump", label=START_LABEL))
    else:
        instructions.append(Instruction(op="halt"))
    return tuple(instructions)


def build(project: Project, scene: Scene, registry: Registry,
          loop: bool = False, created: Optional[str] = None) -> ExecutionPackage:
    """Validate, lower, emit, and freeze into an execution package."""
    diagnostics = validate_scene(scene, registry)
    diagnostics += validate_project(project, scene, registry)
    if diagnostics:
        raise BuildError(diagnostics)
    if not project.has_logic:
        raise BuildError(
            [Diagnostic("EXTERNAL_LOGIC", project.uid, "project logic is externally supplied")],
            "cannot build a project without visual logic",
        )

    instructions = _lower(project, scene, registry, loop)
    validate_instructions(instructions)
    try:
        script: Optional[str] = emit_script(project, scene, registry)
    except WorkcellError as exc:
        if exc.code != "UNSTRUCTURED_FLOW":
            raise
        script = None

    manifests = tuple(
        sorted(
            {registry.manifest(o.object_type).id: registry.manifest(o.object_type)
             for o in scene.objects}.values(),
            key=lambda m: m.id,
        )
    )
    content = canonical_json(
        {
            "scene": scene.to_dict(),
            "project": project.to_dict(),
            "manifests": [m.to_dict() for m in manifests],
            "instructions": [i.to_dict() for i in instructions],
            "script": script,
            "loop": loop,
        }
    )
    uid = "pkg_" + hashlib.sha256(content.encode()).hexdigest()[:12]
    return ExecutionPackage(
        uid=uid,
        created=created or now_iso(),
        scene=scene,
        project=project,
        manifests=manifests,
        instructions=instructions,
        script=script,
        loop=loop,
    )


# -- on-disk form ------------------------------------------------------------

_PARTS = ("scene", "project", "instructions")


def _package_files(package: ExecutionPackage) -> dict:
    files = {
        "package.json": canonical_json(
            {
                "uid": package.uid,
                "created": package.created,
                "loop": package.loop,
                "script_available": package.script is not None,
            }
        ),
        "scene.json": canonical_json(package.scene.to_dict()),
        "project.json": canonical_json(package.project.to_dict()),
        "instructions.json": canonical_json([i.to_dict() for i in package.instructions]),
    }
    if package.script is not None:
        files["script.txt"] = package.script
    for manifest in package.manifests:
        files[f"objtypes/{manifest.id}.json"] = canonical_json(manifest.to_dict())
    return files


def save_package(package: ExecutionPackage, path) -> Path:
    """Write a package as a directory, or a zip when the path ends in .zip."""
    path = Path(path)
    files = _package_files(package)
    if path.suffix == ".zip":
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name in sorted(files):
                zf.writestr(name, files[name])
    else:
        for name in sorted(files):
            target = path / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(files[name])
    return path


def load_package(path) -> ExecutionPackage:
    path = Path(path)
    if not path.exists():
        raise WorkcellError("NOT_FOUND", f"no package at {path}")

    def read(name: str) -> Optional[str]:
        if path.suffix == ".zip":
            with zipfile.ZipFile(path) as zf:
                try:
                    return zf.read(name).decode()
                except KeyError:
                    return None
        target = path / name
        return target.read_text() if target.exists() else None

    meta = json.loads(read("package.json"))
    manifest_names = []
    if path.suffix == ".zip":
        with zipfile.ZipFile(path) as zf:
            manifest_names = [n for n in zf.namelist() if n.startswith("objtypes/")]
    else:
        manifest_names = [f"objtypes/{p.name}" for p in sorted((path / "objtypes").glob("*.json"))]
    return ExecutionPackage(
        uid=meta["uid"],
        created=meta["created"],
        scene=Scene.from_dict(json.loads(read("scene.json"))),
        project=Project.from_dict(json.loads(read("project.json"))),
        manifests=tuple(
            sorted(
                (ObjectTypeManifest.from_dict(json.loads(read(n))) for n in manifest_names),
                key=lambda m: m.id,
            )
        ),
        instructions=tuple(
            Instruction.from_dict(i) for i in json.loads(read("instructions.json"))
        ),
        script=read("script.txt") if meta.get("script_available") else None,
        loop=meta["loop"],
    )
