"""Built-in virtual "Logic" object type: comparisons usable as branch sources."""

from __future__ import annotations

from ..errors import WorkcellError
from .manifest import ActionMeta, Binding, ObjectTypeManifest, ParameterMeta

MANIFEST = ObjectTypeManifest(
    id="Logic",
    base="virtual",
    description="Comparison helpers; their boolean results drive branching.",
    actions=(
        ActionMeta(
            name="greater_than",
            parameters=(
                ParameterMeta(name="a", type="double"),
                ParameterMeta(name="b", type="double"),
            ),
            returns=("boolean",),
            blocking=False,
            description="a > b",
        ),
        ActionMeta(
            name="equals",
            parameters=(
                ParameterMeta(name="a", type="double"),
                ParameterMeta(name="b", type="double"),
            ),
            returns=("boolean",),
            blocking=False,
            description="a == b",
        ),
    ),
    binding=Binding(builtin="logic"),
)


class LogicInstance:
    def __init__(self, parameters: dict | None = None, base=None):
        pass

    def call(self, action: str, args: list) -> list:
        if action == "greater_than":
            return [float(args[0]) > float(args[1])]
        if action == "equals":
            return [float(args[0]) == float(args[1])]
        raise WorkcellError("UNKNOWN_ACTION", f"Logic has no action {action!r}")

    def cancel(self) -> None:
        pass

    def close(self) -> None:
        pass
