"""Main-script emission: a deterministic, human-readable mirror of the flow.

The text is presentation-only (the instruction list is the executable
truth).  Each action renders as one call with ``an="<name>"`` naming the
instance; actions with results render as assignments to the user-declared
result variables.  Pose and joints references are spatial data living in
the project snapshot, so they do not appear as call arguments.

Branches render as an ``if``/``elif`` chain over the condition values; a
conditioned edge leading straight to END emits nothing, which is why a
boolean branch with an empty false path reads as a bare ``if``.  Emission
requires structured flow: every branch path must run to END on its own.
A join anywhere else (two paths converging on one action) is refused with
UNSTRUCTURED_FLOW because the chain-of-ifs grammar cannot express it.
"""

from __future__ import annotations

import json
import re

from .errors import WorkcellError
from .model import END, START, Project, Scene
from .objtypes.manifest import Registry

PREAMBLE_MARKER = "# --- program ---"
INDENT = "    "

_IDENT_CLEAN = re.compile(r"[^0-9A-Za-z_]")


def _identifier(name: str, taken: set) -> str:
    base = _IDENT_CLEAN.sub("_", name) or "_"
    if base[0].isdigit():
        base = "_" + base
    candidate = base
    n = 1
    while candidate in taken:
        n += 1
        candidate = f"{base}_{n}"
    taken.add(candidate)
    return candidate


def render_value(type_name: str, value) -> str:
    """Canonical literal rendering: Python booleans, decimal numbers,
    double-quoted strings."""
    if type_name == "boolean":
        return "True" if value else "False"
    if type_name in ("integer", "double"):
        return repr(value)
    return json.dumps(value)


def script_body(text: str) -> str:
    """Strip the fixed preamble, leaving just the program statements."""
    if PREAMBLE_MARKER not in text:
        return text
    return text.split(PREAMBLE_MARKER, 1)[1].lstrip("\n")


def emit_script(project: Project, scene: Scene, registry: Registry) -> str:
    """Emit the main script text; raises UNSTRUCTURED_FLOW when the DAG
    cannot be expressed as nested single-exit branches."""
    from .compiler import condition_sort_key, flow_successors  # local: avoid import cycle

    taken: set = set()
    object_vars = {o.uid: _identifier(o.name, taken) for o in scene.objects}
    result_vars: dict = {}
    for act in project.actions:
        for index, rname in enumerate(act.results):
            result_vars[(act.uid, index)] = _identifier(rname, taken)

    actions = {a.uid: a for a in project.actions}
    succ = flow_successors(project)

    def render_argument(pv, pmeta) -> str:
        if pv.link is not None:
            return result_vars[(pv.link[0], pv.link[1])]
        value = pv.literal if pv.literal is not None else project.parameter(pv.parameter).value
        return render_value(value.type, value.value)

    def call_line(uid: str) -> str:
        act = actions[uid]
        obj = scene.object(act.target[0])
        meta = registry.action_meta(obj.object_type, act.target[1])
        args = [
            render_argument(pv, pmeta)
            for pv, pmeta in zip(act.parameters, meta.parameters)
            if pmeta.type not in ("pose_ref", "joints_ref")
        ]
        args.append(f'an="{act.name}"')
        call = f"{object_vars[act.target[0]]}.{act.target[1]}({', '.join(args)})"
        if act.results:
            names = ", ".join(result_vars[(act.uid, k)] for k in range(len(act.results)))
            return f"{names} = {call}"
        return call

    emitted: set = set()

    def emit_block(node: str) -> list:
        lines: list = []
        while node != END:
            if node in emitted:
                raise WorkcellError(
                    "UNSTRUCTURED_FLOW",
                    f"action {actions[node].name!r} is reached from more than one path",
                )
            emitted.add(node)
            lines.append(call_line(node))
            entry = succ.get(node)
            if not entry:
                break
            if entry["branch"]:
                cond_var = None
                what = entry["branch"][0][0].what
                cond_var = result_vars[(what[0], what[1])]
                keyword = "if"
                lines.append("")
                for cond, target in sorted(entry["branch"],
                                           key=lambda ct: condition_sort_key(ct[0])):
                    if target == END:
                        continue
                    test = f"{keyword} {cond_var} == {render_value(cond.value.type, cond.value.value)}:"
                    lines.append(test)
                    lines.extend(INDENT + inner if inner else "" for inner in emit_block(target))
                    keyword = "elif"
                if lines[-1] == "":
                    lines.pop()  # every branch went straight to END
                break
            node = entry["next"] or END
        return lines

    start_entry = succ.get(START)
    body_lines: list = []
    if start_entry and start_entry["next"] and start_entry["next"] != END:
        body_lines = emit_block(start_entry["next"])

    text = PREAMBLE_MARKER + "\n"
    if body_lines:
        text += "\n".join(body_lines) + "\n"
    return text
