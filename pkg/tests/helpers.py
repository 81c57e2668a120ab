"""Shared test machinery: a server harness, an async RPC client, and the
reference mini-evaluator for emitted scripts."""

from __future__ import annotations

import asyncio
import json
import re
import tempfile
from pathlib import Path

from websockets.asyncio.client import connect

from workcell.demo import demo_project, demo_registry, demo_scene
from workcell.server import CollabServer, Session
from workcell.store import Store


class Harness:
    """A demo-loaded server on an ephemeral port, plus its store paths."""

    def __init__(self, root=None, registry=None, load_demo=True, markers=None):
        self.root = Path(root or tempfile.mkdtemp(prefix="workcell-test-"))
        self.store = Store(self.root / "store")
        if load_demo:
            self.store.put("scenes", demo_scene().to_dict())
            self.store.put("projects", demo_project().to_dict())
        self.session = Session(self.store, registry or demo_registry(), markers)
        self.server = CollabServer(self.session, port=0)
        self.server.start_background()
        self.url = self.server.url

    def close(self):
        self.server.stop()


class Client:
    """One websocket user: request/response correlation plus an event log."""

    def __init__(self, url: str, name: str):
        self.url = url
        self.name = name
        self.events: list = []
        self._responses: dict = {}
        self._waiters: dict = {}
        self._next_id = 0
        self._ws = None
        self._reader = None

    async def __aenter__(self):
        await self.open()
        return self

    async def __aexit__(self, *exc):
        await self.close()

    async def open(self, register=True):
        self._ws = await connect(self.url, open_timeout=10)
        self._reader = asyncio.create_task(self._read())
        if register:
            snapshot = await self.call("register_user", name=self.name)
            self.snapshot = snapshot
        return self

    async def close(self):
        if self._reader:
            self._reader.cancel()
        if self._ws:
            await self._ws.close()

    async def _read(self):
        try:
            async for raw in self._ws:
                msg = json.loads(raw)
                if "event" in msg:
                    self.events.append(msg)
                else:
                    rid = msg.get("id")
                    self._responses[rid] = msg
                    waiter = self._waiters.pop(rid, None)
                    if waiter is not None and not waiter.done():
                        waiter.set_result(msg)
        except Exception:
            pass

    async def request(self, op: str, **args) -> dict:
        """Send one request; returns the raw response envelope."""
        self._next_id += 1
        rid = self._next_id
        waiter = asyncio.get_running_loop().create_future()
        self._waiters[rid] = waiter
        await self._ws.send(json.dumps({"id": rid, "op": op, "args": args}))
        return await asyncio.wait_for(waiter, 30)

    async def call(self, op: str, **args) -> dict:
        """Request that must succeed; returns response data."""
        response = await self.request(op, **args)
        assert response["ok"], f"{op} failed: {response.get('error')}"
        return response["data"]

    async def expect_error(self, op: str, **args) -> dict:
        response = await self.request(op, **args)
        assert not response["ok"], f"{op} unexpectedly succeeded"
        return response["error"]

    async def wait_event(self, name: str, timeout: float = 10, where=None) -> dict:
        """Wait until an event with the given name (and predicate) arrives."""
        seen = 0
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            while seen < len(self.events):
                event = self.events[seen]
                seen += 1
                if event["event"] == name and (where is None or where(event["data"])):
                    return event
            if asyncio.get_running_loop().time() > deadline:
                raise TimeoutError(f"no {name!r} event within {timeout}s")
            await asyncio.sleep(0.005)

    def events_named(self, name: str) -> list:
        return [e for e in self.events if e["event"] == name]


def run(coro):
    return asyncio.run(coro)


# -- random flow-graph projects over the Logic builtin ---------------------------

from workcell.model import (  # noqa: E402
    END,
    START,
    ActionInstance,
    ActionPoint,
    Condition,
    LogicItem,
    ParameterValue,
    Position,
    Project,
    Scene,
    TypedValue,
)
from workcell.model import ActionObject  # noqa: E402


def logic_scene() -> Scene:
    return Scene(
        uid="scn_logic",
        name="logic-only",
        objects=(ActionObject(uid="obj_logic", name="logic", object_type="Logic"),),
    )


def random_flow_project(rng, n_actions: int = 8, p_branch: float = 0.3,
                        structured: bool = False) -> Project:
    """A valid random program: a chain/branch DAG of Logic comparisons.

    Every action compares two random integers; branch points condition on
    their own boolean result.  With ``structured=True`` branch arms never
    reconverge (so the script emitter accepts the flow); otherwise arms may
    rejoin later nodes, which is still a valid DAG.
    """
    actions = []
    for i in range(n_actions):
        op_name = "greater_than" if rng.random() < 0.5 else "equals"
        actions.append(
            ActionInstance(
                uid=f"act_{i}",
                name=f"a{i}",
                owner="ap_0",
                target=("obj_logic", op_name),
                parameters=(
                    ParameterValue(literal=TypedValue("integer", int(rng.integers(0, 4)))),
                    ParameterValue(literal=TypedValue("integer", int(rng.integers(0, 4)))),
                ),
                results=(f"r{i}",),
            )
        )

    logic = [LogicItem(uid="lgi_start", start=START, end="act_0")]
    counter = [0]

    def edge(start, end, value=None):
        counter[0] += 1
        condition = None
        if value is not None:
            condition = Condition((start, 0), TypedValue("boolean", value))
        logic.append(LogicItem(uid=f"lgi_{counter[0]}", start=start, end=end,
                               condition=condition))

    if structured:
        # Recursively consume a pool of node indices; arms never share nodes.
        pool = list(range(1, n_actions))

        def build_chain(current: int) -> None:
            while True:
                if not pool or rng.random() < 0.25:
                    edge(f"act_{current}", END)
                    return
                if rng.random() < p_branch and len(pool) >= 1:
                    targets = []
                    for _value in (True, False):
                        if pool and rng.random() < 0.8:
                            targets.append(pool.pop(0))
                        else:
                            targets.append(None)
                    if targets[0] is None and targets[1] is None:
                        edge(f"act_{current}", END)
                        return
                    for value, target in zip((True, False), targets):
                        edge(f"act_{current}", f"act_{target}" if target is not None else END,
                             value=value)
                    for target in targets:
                        if target is not None:
                            build_chain(target)
                    return
                nxt = pool.pop(0)
                edge(f"act_{current}", f"act_{nxt}")
                current = nxt

        build_chain(0)
    else:
        for i in range(n_actions):
            later = list(range(i + 1, n_actions))
            if not later or rng.random() < 0.2:
                continue  # implicit end
            if rng.random() < p_branch and len(later) >= 2:
                t1, t2 = rng.choice(later, size=2, replace=False)
                edge(f"act_{i}", f"act_{int(t1)}", value=True)
                edge(f"act_{i}", f"act_{int(t2)}", value=False)
            else:
                edge(f"act_{i}", f"act_{int(rng.choice(later))}")

    return Project(
        uid="prj_random",
        name="random",
        scene="scn_logic",
        action_points=(ActionPoint(uid="ap_0", name="anchor", position=Position()),),
        actions=tuple(actions),
        logic=tuple(logic),
        has_logic=True,
    )


def inject_back_edge(project: Project, rng) -> Project:
    """Add one edge guaranteed to close a directed cycle."""
    succ: dict = {}
    for li in project.logic:
        succ.setdefault(li.start, set()).add(li.end)

    def descendants(node):
        out, frontier = set(), [node]
        while frontier:
            for nxt in succ.get(frontier.pop(), ()):
                if nxt not in out and nxt != END:
                    out.add(nxt)
                    frontier.append(nxt)
        return out

    candidates = []
    for action in project.actions:
        for reached in descendants(action.uid):
            if reached != action.uid and reached != START:
                candidates.append((reached, action.uid))
    if not candidates:
        # Degenerate graph with no multi-node path; build a 2-cycle.
        a, b = project.actions[0].uid, project.actions[1].uid
        extra = (
            LogicItem(uid="lgi_cyc1", start=a, end=b),
            LogicItem(uid="lgi_cyc2", start=b, end=a),
        )
        return Project.from_dict({**project.to_dict(), "logic": [
            li.to_dict() for li in project.logic + extra]})
    start, end = candidates[int(rng.integers(0, len(candidates)))]
    extra = LogicItem(uid="lgi_back", start=start, end=end)
    data = project.to_dict()
    data["logic"].append(extra.to_dict())
    return Project.from_dict(data)


# -- reference mini-evaluator for emitted scripts ------------------------------

_CALL_RE = re.compile(
    r"^(?:(?P<results>[\w, ]+) = )?(?P<obj>\w+)\.(?P<method>\w+)\((?P<args>.*)\)$"
)
_TEST_RE = re.compile(r"^(?P<kw>if|elif) (?P<var>\w+) == (?P<value>.+):$")


def _parse_args(text: str) -> list:
    args, depth, quote, current = [], 0, None, ""
    for ch in text:
        if quote:
            current += ch
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            current += ch
        elif ch in "([{":
            depth += 1
            current += ch
        elif ch in ")]}":
            depth -= 1
            current += ch
        elif ch == "," and depth == 0:
            args.append(current.strip())
            current = ""
        else:
            current += ch
    if current.strip():
        args.append(current.strip())
    return args


def eval_script_body(body: str) -> list:
    """Symbolically execute an emitted script over the Logic semantics.

    Returns the ordered list of executed action names (the an= values).
    Supports assignments, bare calls, and if/elif chains; enough for any
    structured program over the Logic builtin.
    """
    lines = [ln for ln in body.split("\n")]
    env: dict = {}
    trace: list = []

    def literal(token: str):
        if token == "True":
            return True
        if token == "False":
            return False
        if token.startswith(('"', "'")):
            return json.loads(token.replace("'", '"'))
        try:
            return int(token)
        except ValueError:
            return float(token)

    def value_of(token: str):
        if token in env:
            return env[token]
        return literal(token)

    def call(line: str):
        m = _CALL_RE.match(line)
        assert m, f"unparseable call: {line!r}"
        args = _parse_args(m.group("args"))
        an = None
        positional = []
        for arg in args:
            if arg.startswith("an="):
                an = json.loads(arg[3:])
            else:
                positional.append(value_of(arg))
        trace.append(an)
        method = m.group("method")
        if method == "greater_than":
            out = [float(positional[0]) > float(positional[1])]
        elif method == "equals":
            out = [float(positional[0]) == float(positional[1])]
        else:
            out = []
        if m.group("results"):
            names = [n.strip() for n in m.group("results").split(",")]
            for name, value in zip(names, out):
                env[name] = value

    def indent_of(line: str) -> int:
        return len(line) - len(line.lstrip())

    def exec_block(i: int, indent: int) -> int:
        chain_taken = False
        while i < len(lines):
            line = lines[i]
            if not line.strip():
                i += 1
                continue
            if indent_of(line) < indent:
                return i
            stripped = line.strip()
            m = _TEST_RE.match(stripped)
            if m:
                if m.group("kw") == "if":
                    chain_taken = False
                take = (not chain_taken) and env[m.group("var")] == literal(m.group("value"))
                if take:
                    chain_taken = True
                    i = exec_block(i + 1, indent + 4)
                else:
                    i += 1
                    while i < len(lines) and (
                        not lines[i].strip() or indent_of(lines[i]) >= indent + 4
                    ):
                        i += 1
            else:
                call(stripped)
                i += 1
        return i

    exec_block(0, 0)
    return trace
