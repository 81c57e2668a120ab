"""Command-line entry points: serve, validate, build, run, demo init.

Exit codes: 0 clean completion, 2 faulted execution, 3 validation/build
failure, 64 usage error.  Flags beat environment variables beat defaults;
the recognized variables are WORKCELL_PORT, WORKCELL_STORE,
WORKCELL_OBJTYPES, and WORKCELL_MARKERS.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import demo
from .calibration import load_marker_configs
from .compiler import BuildError, build, load_package, save_package
from .errors import WorkcellError
from .executor import Executor
from .model import Project, Scene
from .objtypes.manifest import load_manifests
from .store import Store
from .validation import validate_project, validate_scene

EX_OK = 0
EX_FAULTED = 2
EX_INVALID = 3
EX_USAGE = 64

logger = logging.getLogger("workcell")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EX_USAGE)


def _env(name: str, default: str) -> str:
    return os.environ.get(f"WORKCELL_{name}", default)


def _build_parser() -> _Parser:
    parser = _Parser(prog="workcell", description=__doc__)
    parser.add_argument("--store", default=_env("STORE", "store"), help="store directory")
    parser.add_argument(
        "--objtypes", default=_env("OBJTYPES", "objtypes"), help="object type manifest directory"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the collaboration server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=int(_env("PORT", "8765")))
    serve.add_argument("--markers", default=_env("MARKERS", ""), help="marker config JSON")

    validate = sub.add_parser("validate", help="validate a stored project")
    validate.add_argument("project", help="project uid (or path to a project JSON)")

    build_cmd = sub.add_parser("build", help="build a project into a package")
    build_cmd.add_argument("project", help="project uid (or path to a project JSON)")
    build_cmd.add_argument("-o", "--output", required=True, help="package directory or .zip")
    build_cmd.add_argument("--loop", action="store_true", help="loop the program")

    run = sub.add_parser("run", help="execute a package, events as ndjson on stdout")
    run.add_argument("package", help="package directory or .zip")
    run.add_argument("--once", action="store_true", help="run a single pass")
    run.add_argument("--max-iter", type=int, default=None, help="bound loop iterations")
    run.add_argument(
        "--input", action="append", default=[], metavar="IDX=VALUE",
        help="inject a simulated input value (repeatable)",
    )

    demo_cmd = sub.add_parser("demo", help="demo workplace management")
    demo_cmd.add_argument("action", choices=["init"])
    return parser


def _registry(objtypes_dir: str):
    root = Path(objtypes_dir)
    if not root.is_dir():
        demo.write_manifests(root)
        logger.info("created %s with built-in object types", root)
    return load_manifests(root)


def _load_project(store: Store, ref: str) -> Project:
    if store.exists("projects", ref):
        return Project.from_dict(store.get("projects", ref))
    path = Path(ref)
    if path.is_file():
        return Project.from_dict(json.loads(path.read_text()))
    raise WorkcellError("NOT_FOUND", f"no project {ref!r} in the store or on disk")


def _print_diagnostics(diagnostics) -> None:
    for diag in diagnostics:
        entity = f" [{diag.entity}]" if diag.entity else ""
        sys.stderr.write(f"{diag.rule}{entity}: {diag.message}\n")


def cmd_serve(args) -> int:
    from .server import CollabServer, Session

    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(message)s")
    registry = _registry(args.objtypes)
    markers = load_marker_configs(args.markers) if args.markers else []
    session = Session(Store(args.store), registry, markers)
    server = CollabServer(session, host=args.host, port=args.port)
    import asyncio

    try:
        asyncio.run(server.run())
    except KeyboardInterrupt:
        pass
    return EX_OK


def cmd_validate(args) -> int:
    store = Store(args.store)
    registry = _registry(args.objtypes)
    project = _load_project(store, args.project)
    scene = Scene.from_dict(store.get("scenes", project.scene))
    diagnostics = validate_scene(scene, registry)
    diagnostics += validate_project(project, scene, registry)
    if diagnostics:
        _print_diagnostics(diagnostics)
        return EX_INVALID
    print(f"{project.uid}: ok")
    return EX_OK


def cmd_build(args) -> int:
    store = Store(args.store)
    registry = _registry(args.objtypes)
    project = _load_project(store, args.project)
    scene = Scene.from_dict(store.get("scenes", project.scene))
    try:
        package = build(project, scene, registry, loop=args.loop)
    except BuildError as exc:
        _print_diagnostics(exc.diagnostics)
        return EX_INVALID
    save_package(package, args.output)
    print(package.uid)
    return EX_OK


def cmd_run(args) -> int:
    package = load_package(args.package)
    inputs = {}
    for spec in args.input:
        index, _, value = spec.partition("=")
        try:
            inputs[int(index)] = int(value)
        except ValueError:
            sys.stderr.write(f"error: bad --input {spec!r} (expected IDX=VALUE)\n")
            return EX_USAGE
    max_iterations = 1 if args.once else args.max_iter

    def sink(event):
        sys.stdout.write(json.dumps(event.to_dict()) + "\n")
        sys.stdout.flush()

    state = Executor().run(package, sink, max_iterations=max_iterations, inputs=inputs)
    return EX_OK if state.status == "idle" else EX_FAULTED


def cmd_demo(args) -> int:
    store = Store(args.store)
    demo.write_manifests(args.objtypes)
    scene = demo.demo_scene()
    project = demo.demo_project()
    store.put("scenes", scene.to_dict())
    store.put("projects", project.to_dict())
    print(f"scene {scene.uid}")
    print(f"project {project.uid}")
    print(f"objtypes {args.objtypes}")
    return EX_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "build":
            return cmd_build(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "demo":
            return cmd_demo(args)
    except WorkcellError as exc:
        sys.stderr.write(f"error: {exc.code}: {exc.message}\n")
        return EX_USAGE if exc.code == "NOT_FOUND" else EX_INVALID
    return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
