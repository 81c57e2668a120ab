"""Execution service: interpret packages, stream events, pause/resume/stop.

One executor runs one package at a time on its own thread.  Control calls
may arrive from any thread; they take effect at the next action boundary
(never mid-call) and are acknowledged through state-changed events.  A stop
additionally cancels the in-flight robot motion through the instance's
cancel hook.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional

from .compiler import ExecutionPackage, lower_parameters
from .errors import WorkcellError
from .model import Project, Scene, now_iso
from .objtypes.manifest import Registry
from .objtypes.runtime import dispatch_action, instantiate

RUN_STATUSES = ("idle", "running", "paused", "stopped", "faulted")

# status -> statuses it may move to
_TRANSITIONS = {
    "idle": {"running"},
    "running": {"paused", "stopped", "faulted", "idle"},
    "paused": {"running", "stopped"},
    "stopped": set(),
    "faulted": set(),
}


@dataclass(frozen=True)
class ExecutionState:
    package: Optional[str]
    status: str
    current_action: Optional[str] = None
    iteration: int = 0

    def to_dict(self) -> dict:
        return {
            "package": self.package,
            "status": self.status,
            "current_action": self.current_action,
            "iteration": self.iteration,
        }


@dataclass(frozen=True)
class ExecutionEvent:
    kind: str  # state_changed | action_before | action_after | error
    timestamp: str
    status: Optional[str] = None
    action: Optional[str] = None
    name: Optional[str] = None
    parameters: Optional[tuple] = None
    results: Optional[tuple] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "timestamp": self.timestamp}
        for key in ("status", "action", "name", "parameters", "results", "error"):
            value = getattr(self, key)
            if value is not None:
                out[key] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExecutionEvent":
        return cls(
            kind=data["kind"],
            timestamp=data["timestamp"],
            status=data.get("status"),
            action=data.get("action"),
            name=data.get("name"),
            parameters=tuple(data["parameters"]) if data.get("parameters") is not None else None,
            results=tuple(data["results"]) if data.get("results") is not None else None,
            error=data.get("error"),
        )


def _match(table_value: dict, runtime_value) -> bool:
    """Typed comparison of a branch table entry against a runtime result."""
    t, v = table_value["type"], table_value["value"]
    if t == "boolean":
        return isinstance(runtime_value, bool) and runtime_value is v
    if t == "integer":
        return (
            isinstance(runtime_value, int)
            and not isinstance(runtime_value, bool)
            and runtime_value == v
        )
    return isinstance(runtime_value, str) and runtime_value == v


class Executor:
    """Runs packages; at most one execution at a time."""

    def __init__(self, instance_provider: Optional[Callable] = None):
        self._instance_provider = instance_provider or instantiate
        self._lock = threading.Lock()
        self._state = ExecutionState(None, "idle")
        self._pause_requested = False
        self._stop_requested = False
        self._wake = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._sink: Optional[Callable] = None
        self._current_instance = None

    # -- state ---------------------------------------------------------------

    @property
    def state(self) -> ExecutionState:
        with self._lock:
            return self._state

    def _set_status(self, status: str, current_action=None, iteration=None) -> None:
        with self._lock:
            old = self._state
            if status != old.status and status not in _TRANSITIONS[old.status]:
                raise WorkcellError(
                    "ILLEGAL_TRANSITION", f"cannot move from {old.status} to {status}"
                )
            self._state = ExecutionState(
                old.package,
                status,
                old.current_action if current_action is None else current_action,
                old.iteration if iteration is None else iteration,
            )
        if status != old.status:
            self._emit(ExecutionEvent("state_changed", now_iso(), status=status))

    def _emit(self, event: ExecutionEvent) -> None:
        if self._sink is not None:
            self._sink(event)

    # -- control -------------------------------------------------------------

    def pause(self) -> None:
        with self._lock:
            if self._state.status != "running":
                raise WorkcellError("ILLEGAL_TRANSITION", "pause requires a running execution")
            self._pause_requested = True

    def resume(self) -> None:
        with self._lock:
            if self._state.status != "paused" and not self._pause_requested:
                raise WorkcellError("ILLEGAL_TRANSITION", "resume requires a paused execution")
            self._pause_requested = False
            self._wake.set()

    def stop(self) -> None:
        with self._lock:
            if self._state.status not in ("running", "paused"):
                raise WorkcellError("ILLEGAL_TRANSITION", "stop requires an active execution")
            self._stop_requested = True
            instance = self._current_instance
            self._wake.set()
        if instance is not None:
            instance.cancel()

    # -- execution -----------------------------------------------------------

    def start(self, package: ExecutionPackage, sink: Callable,
              max_iterations: Optional[int] = None, inputs: Optional[dict] = None,
              ) -> threading.Thread:
        """Begin executing on a background thread."""
        with self._lock:
            if self._state.status not in ("idle", "stopped", "faulted"):
                raise WorkcellError("EXECUTION_IN_PROGRESS", "an execution is already active")
            self._state = ExecutionState(package.uid, "idle")
            self._pause_requested = False
            self._stop_requested = False
            self._wake.clear()
            self._sink = sink
        thread = threading.Thread(
            target=self._execute, args=(package, max_iterations, inputs), daemon=True
        )
        self._thread = thread
        thread.start()
        return thread

    def run(self, package: ExecutionPackage, sink: Callable,
            max_iterations: Optional[int] = None, inputs: Optional[dict] = None,
            ) -> ExecutionState:
        """Execute synchronously; returns the terminal state."""
        thread = self.start(package, sink, max_iterations, inputs)
        thread.join()
        return self.state

    def wait(self, timeout: Optional[float] = None) -> ExecutionState:
        if self._thread is not None:
            self._thread.join(timeout)
        return self.state

    def _boundary(self) -> bool:
        """Handle control requests between actions; False means stop."""
        with self._lock:
            if self._stop_requested:
                return False
            pause = self._pause_requested
        if not pause:
            return True
        self._set_status("paused")
        while True:
            self._wake.wait()
            self._wake.clear()
            with self._lock:
                if self._stop_requested:
                    return False
                if not self._pause_requested:
                    break
        self._set_status("running")
        return True

    def _execute(self, package: ExecutionPackage, max_iterations, inputs) -> None:
        instances: dict = {}
        registry = package.registry()
        try:
            self._set_status("running")
            try:
                for obj in package.scene.objects:
                    instances[obj.uid] = self._instance_provider(
                        obj, registry.manifest(obj.object_type)
                    )
            except WorkcellError as exc:
                self._emit(ExecutionEvent("error", now_iso(), error=exc.message))
                self._set_status("faulted")
                return
            for instance in instances.values():
                if inputs and hasattr(instance, "set_input"):
                    for index, value in inputs.items():
                        instance.set_input(int(index), int(value))

            labels = {
                instr.label: i for i, instr in enumerate(package.instructions)
                if instr.op == "label"
            }
            slots: dict = {}
            iteration = 0
            pc = 0
            while True:
                if pc >= len(package.instructions):
                    self._set_status("idle", current_action="")
                    return
                instr = package.instructions[pc]
                if instr.op == "label":
                    pc += 1
                elif instr.op == "jump":
                    if instr.label == "START":
                        iteration += 1
                        with self._lock:
                            self._state = ExecutionState(
                                self._state.package, self._state.status,
                                self._state.current_action, iteration,
                            )
                        if max_iterations is not None and iteration >= max_iterations:
                            self._set_status("idle", current_action="")
                            return
                        slots = {}
                    pc = labels[instr.label]
                elif instr.op == "halt":
                    self._set_status("idle", current_action="")
                    return
                elif instr.op == "branch":
                    value = slots[instr.slot]
                    target = instr.default
                    for entry, label in instr.table:
                        if _match(entry, value):
                            target = label
                            break
                    pc = labels[target]
                elif instr.op == "call":
                    if not self._boundary():
                        self._set_status("stopped")
                        return
                    args = [
                        slot["immediate"] if "immediate" in slot else slots[slot["slot"]]
                        for slot in instr.args
                    ]
                    with self._lock:
                        self._state = ExecutionState(
                            self._state.package, self._state.status, instr.action, iteration
                        )
                        self._current_instance = instances.get(instr.target_object)
                    self._emit(
                        ExecutionEvent(
                            "action_before", now_iso(), action=instr.action,
                            name=instr.name, parameters=tuple(args),
                        )
                    )
                    try:
                        results = dispatch_action(
                            instances.get(instr.target_object), instr.target_action, args
                        )
                    except WorkcellError as exc:
                        with self._lock:
                            self._current_instance = None
                            stopped = self._stop_requested
                        if exc.code == "CANCELLED" and stopped:
                            self._set_status("stopped")
                            return
                        self._emit(
                            ExecutionEvent(
                                "error", now_iso(), action=instr.action,
                                name=instr.name, error=exc.message,
                            )
                        )
                        self._set_status("faulted")
                        return
                    with self._lock:
                        self._current_instance = None
                    for slot_name, value in zip(instr.results, results):
                        slots[slot_name] = value
                    self._emit(
                        ExecutionEvent(
                            "action_after", now_iso(), action=instr.action,
                            name=instr.name, parameters=tuple(args), results=tuple(results),
                        )
                    )
                    pc += 1
                else:
                    raise WorkcellError("BUILD_FAILED", f"unknown instruction {instr.op!r}")
        finally:
            for instance in instances.values():
                try:
                    instance.close()
                except Exception:
                    pass


def execute_single_action(project: Project, scene: Scene, action_uid: str,
                          registry: Registry, instances: dict) -> list:
    """Debug helper: dispatch exactly one action instance and return its
    results.  Link parameters are disallowed (no prior results exist)."""
    action = project.action(action_uid)
    if action is None:
        raise WorkcellError("UNKNOWN_ACTION", f"no action {action_uid!r} in project")
    if any(pv.link is not None for pv in action.parameters):
        raise WorkcellError("HAS_LINK_PARAMS", f"{action.name!r} consumes a prior result")
    instance = instances.get(action.target[0])
    if instance is None:
        raise WorkcellError("NOT_ONLINE", f"object {action.target[0]!r} has no live instance")
    args = [slot["immediate"] for slot in lower_parameters(action, project, scene, registry)]
    return dispatch_action(instance, action.target[1], args)
