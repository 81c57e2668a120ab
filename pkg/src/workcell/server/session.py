"""The shared editing session: state, locks, and every RPC handler.

There is exactly one session per server; whatever one user opens, every
user sees.  All mutations are funneled through ``handle`` which the
transport layer calls from a single writer task, so handlers can assume
exclusive access to session state.  Each handler returns its response data
plus the events to broadcast; for entity mutations the response payload is
the broadcast payload (echo consistency).

Locks are hierarchical: holding an action point covers its orientations,
joints, and actions; holding the project or scene covers everything below
them.  Locking an entity is refused while any ancestor or descendant is
held by someone else.  A disconnect releases everything the user held.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Optional

from ..calibration import MarkerObservation, estimate_camera_pose, refine_robot_pose
from ..compiler import BuildError, ExecutionPackage, build
from ..errors import WorkcellError
from ..executor import Executor, execute_single_action
from ..geometry import Orientation, Pose, Position, compose, invert
from ..model import (
    ActionInstance,
    ActionObject,
    ActionPoint,
    Condition,
    Joints,
    LogicItem,
    NamedJoints,
    NamedOrientation,
    ParameterValue,
    Project,
    ProjectParameter,
    Scene,
    TypedValue,
    gen_uid,
)
from ..objtypes.manifest import Registry, discover_features
from ..objtypes.runtime import instantiate
from ..store import Store
from ..validation import validate_project, validate_scene

# Handler metadata: op name -> requirements, filled by the @op decorator.
OPS: dict = {}


def op(name: str, lock: Optional[str] = None, online: bool = False, offline: bool = False,
       needs_scene: bool = False, needs_project: bool = False):
    """Register a session handler with its declarative requirements.

    ``lock`` names the args entry whose entity the caller must hold (the
    special value "@project"/"@scene" targets the open container itself).
    """

    def wrap(fn: Callable) -> Callable:
        OPS[name] = {
            "method": fn.__name__,
            "lock": lock,
            "online": online,
            "offline": offline,
            "needs_scene": needs_scene or needs_project,
            "needs_project": needs_project,
            "doc": (fn.__doc__ or "").strip(),
        }
        fn._op_name = name
        return fn

    return wrap


def _validation_error(diagnostics: list) -> WorkcellError:
    # A cycle is the structural root cause; surface it over incidental rules.
    primary = next((d for d in diagnostics if d.rule == "CYCLE_DETECTED"), diagnostics[0])
    err = WorkcellError(primary.rule, primary.message)
    err.details = [d.to_dict() for d in diagnostics]
    return err


class Session:
    def __init__(self, store: Store, registry: Registry, markers: Optional[list] = None):
        self.store = store
        self.registry = registry
        self.markers = markers or []
        self.users: set = set()
        self.scene: Optional[Scene] = None
        self.project: Optional[Project] = None
        self.online = False
        self.locks: dict = {}  # entity uid -> owner user name
        self.instances: dict = {}  # object uid -> live instance
        self.executor = Executor()
        # The transport injects this to broadcast executor events (which are
        # born on the executor thread, outside the writer task).
        self.emit_async: Callable = lambda event, data: None

    # -- user lifecycle ------------------------------------------------------

    def register_user(self, name: str) -> tuple:
        if not name:
            raise WorkcellError("NAME_TAKEN", "user name must be nonempty")
        if name in self.users:
            raise WorkcellError("NAME_TAKEN", f"user {name!r} is already connected")
        self.users.add(name)
        return self.snapshot(), [("user_joined", {"user": name})]

    def disconnect_user(self, name: str) -> list:
        events = []
        if name in self.users:
            self.users.discard(name)
            for uid, owner in sorted(self.locks.items()):
                if owner == name:
                    events.append(("unlocked", {"uid": uid, "owner": name}))
            self.locks = {uid: o for uid, o in self.locks.items() if o != name}
            events.append(("user_left", {"user": name}))
        return events

    def snapshot(self) -> dict:
        return {
            "users": sorted(self.users),
            "scene": self.scene.to_dict() if self.scene else None,
            "project": self.project.to_dict() if self.project else None,
            "online": self.online,
            "locks": dict(sorted(self.locks.items())),
            "execution": self.executor.state.to_dict(),
        }

    # -- dispatch --------------------------------------------------------------

    def handle(self, user: str, op_name: str, args: dict) -> tuple:
        """Run one RPC; returns (data, events).  Raises WorkcellError."""
        meta = OPS.get(op_name)
        if meta is None:
            raise WorkcellError("UNKNOWN_OP", f"no operation {op_name!r}")
        if meta["needs_scene"] and self.scene is None:
            raise WorkcellError("NOT_OPEN", "no scene is open")
        if meta["needs_project"] and self.project is None:
            raise WorkcellError("NOT_OPEN", "no project is open")
        if meta["online"] and not self.online:
            raise WorkcellError("NOT_ONLINE", f"{op_name} requires the scene to be online")
        if meta["offline"] and self.online:
            raise WorkcellError("SCENE_ONLINE", f"{op_name} requires the scene to be offline")
        if meta["lock"]:
            target = meta["lock"]
            if target == "@scene":
                uid = self.scene.uid
            elif target == "@project":
                uid = self.project.uid
            else:
                uid = args.get(target)
            if uid is None or not self._holds_lock(user, uid):
                raise WorkcellError("LOCK_REQUIRED", f"{op_name} requires the lock on {uid!r}")
        handler = getattr(self, meta["method"])
        return handler(user, args)

    # -- lock machinery ----------------------------------------------------------

    def _known_entities(self) -> set:
        known = set()
        if self.scene:
            known.add(self.scene.uid)
            known.update(o.uid for o in self.scene.objects)
        if self.project:
            known.add(self.project.uid)
            for ap in self.project.action_points:
                known.add(ap.uid)
            for group in (self.project.actions, self.project.parameters, self.project.logic):
                known.update(item.uid for item in group)
        return known

    def _parent_of(self, uid: str) -> Optional[str]:
        if self.scene and uid == self.scene.uid:
            return None
        if self.project and uid == self.project.uid:
            return None
        if self.scene and self.scene.object(uid) is not None:
            return self.scene.uid
        if self.project:
            if self.project.action_point(uid) is not None:
                return self.project.uid
            action = self.project.action(uid)
            if action is not None:
                return action.owner
            for group in (self.project.parameters, self.project.logic):
                if any(item.uid == uid for item in group):
                    return self.project.uid
        return None

    def _ancestors(self, uid: str) -> list:
        chain = [uid]
        seen = {uid}
        parent = self._parent_of(uid)
        while parent is not None and parent not in seen:
            chain.append(parent)
            seen.add(parent)
            parent = self._parent_of(parent)
        return chain

    def _holds_lock(self, user: str, uid: str) -> bool:
        return any(self.locks.get(node) == user for node in self._ancestors(uid))

    def _lock_conflict(self, user: str, uid: str) -> Optional[str]:
        """Owner of a conflicting lock held by someone else, if any."""
        for node in self._ancestors(uid):
            owner = self.locks.get(node)
            if owner is not None and owner != user:
                return owner
        for locked in self.locks:
            if uid in self._ancestors(locked)[1:]:
                owner = self.locks[locked]
                if owner != user:
                    return owner
        return None

    @op("lock")
    def op_lock(self, user: str, args: dict) -> tuple:
        """Acquire the exclusive lock on an entity."""
        uid = args["uid"]
        if uid not in self._known_entities():
            raise WorkcellError("UNKNOWN_ENTITY", f"no entity {uid!r} in the session")
        current = self.locks.get(uid)
        if current == user:
            payload = {"uid": uid, "owner": user}
            return payload, []
        conflict = self._lock_conflict(user, uid)
        if conflict is not None or current is not None:
            raise WorkcellError("ALREADY_LOCKED", conflict or current)
        self.locks[uid] = user
        payload = {"uid": uid, "owner": user}
        return payload, [("locked", payload)]

    @op("unlock")
    def op_unlock(self, user: str, args: dict) -> tuple:
        """Release a lock owned by the caller."""
        uid = args["uid"]
        owner = self.locks.get(uid)
        if owner is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"{uid!r} is not locked")
        if owner != user:
            raise WorkcellError("NOT_OWNER", f"{uid!r} is locked by {owner!r}")
        del self.locks[uid]
        payload = {"uid": uid, "owner": user}
        return payload, [("unlocked", payload)]

    # -- persistence helpers ---------------------------------------------------

    def _commit_scene(self, scene: Scene, check_project: bool = True) -> Scene:
        diagnostics = validate_scene(scene, self.registry)
        if diagnostics:
            raise _validation_error(diagnostics)
        if check_project and self.project is not None:
            diagnostics = validate_project(self.project, scene, self.registry)
            if diagnostics:
                raise _validation_error(diagnostics)
        stamp = self.store.put("scenes", scene.to_dict())
        scene = replace(scene, modified=stamp)
        self.scene = scene
        return scene

    def _commit_project(self, project: Project) -> Project:
        diagnostics = validate_project(project, self.scene, self.registry)
        if diagnostics:
            raise _validation_error(diagnostics)
        stamp = self.store.put("projects", project.to_dict())
        project = replace(project, modified=stamp)
        self.project = project
        return project

    # -- scene/project lifecycle --------------------------------------------------

    @op("new_scene")
    def op_new_scene(self, user: str, args: dict) -> tuple:
        """Create an empty scene and open it."""
        if self.scene is not None:
            raise WorkcellError("ALREADY_OPEN", "close the current scene first")
        scene = Scene(uid=gen_uid("scn"), name=args["name"])
        scene = self._commit_scene(scene)
        return {"scene": scene.to_dict()}, [("scene_opened", {"scene": scene.to_dict()})]

    @op("open_scene")
    def op_open_scene(self, user: str, args: dict) -> tuple:
        """Open a stored scene for every connected user."""
        if self.scene is not None:
            raise WorkcellError("ALREADY_OPEN", "close the current scene first")
        scene = Scene.from_dict(self.store.get("scenes", args["uid"]))
        self.scene = scene
        return {"scene": scene.to_dict()}, [("scene_opened", {"scene": scene.to_dict()})]

    @op("close_scene", needs_scene=True, offline=True)
    def op_close_scene(self, user: str, args: dict) -> tuple:
        """Close the open scene (and project); releases all locks."""
        return self._close_all()

    def _close_all(self) -> tuple:
        if self.executor.state.status in ("running", "paused"):
            raise WorkcellError("EXECUTION_IN_PROGRESS", "stop the execution first")
        events = []
        for uid, owner in sorted(self.locks.items()):
            events.append(("unlocked", {"uid": uid, "owner": owner}))
        self.locks.clear()
        if self.project is not None:
            events.append(("project_closed", {}))
            self.project = None
        events.append(("scene_closed", {}))
        self.scene = None
        return {}, events

    @op("new_project")
    def op_new_project(self, user: str, args: dict) -> tuple:
        """Create a project over a scene and open both."""
        if self.project is not None:
            raise WorkcellError("ALREADY_OPEN", "close the current project first")
        scene_uid = args.get("scene") or (self.scene.uid if self.scene else None)
        if scene_uid is None:
            raise WorkcellError("NOT_OPEN", "no scene given or open")
        scene = Scene.from_dict(self.store.get("scenes", scene_uid))
        project = Project(
            uid=gen_uid("prj"), name=args["name"], scene=scene_uid,
            has_logic=args.get("has_logic", True),
        )
        self.scene = scene
        project = self._commit_project(project)
        events = [("scene_opened", {"scene": scene.to_dict()}),
                  ("project_opened", {"project": project.to_dict()})]
        return {"project": project.to_dict()}, events

    @op("open_project")
    def op_open_project(self, user: str, args: dict) -> tuple:
        """Open a stored project (and its scene) for every connected user."""
        if self.project is not None or self.scene is not None:
            raise WorkcellError("ALREADY_OPEN", "close the current session first")
        project = Project.from_dict(self.store.get("projects", args["uid"]))
        scene = Scene.from_dict(self.store.get("scenes", project.scene))
        self.scene = scene
        self.project = project
        events = [("scene_opened", {"scene": scene.to_dict()}),
                  ("project_opened", {"project": project.to_dict()})]
        return {"project": project.to_dict()}, events

    @op("close_project", needs_project=True, offline=True)
    def op_close_project(self, user: str, args: dict) -> tuple:
        """Close the open project and scene; releases all locks."""
        return self._close_all()

    # -- online / offline ---------------------------------------------------------

    @op("start_scene", needs_scene=True)
    def op_start_scene(self, user: str, args: dict) -> tuple:
        """Go online: create live instances for every scene object."""
        if self.online:
            raise WorkcellError("ALREADY_ONLINE", "the scene is already online")
        instances: dict = {}
        try:
            for obj in self.scene.objects:
                manifest = self.registry.manifest(obj.object_type)
                try:
                    instances[obj.uid] = instantiate(obj, manifest)
                except WorkcellError as exc:
                    raise WorkcellError("INSTANTIATION_FAILED", f"{obj.uid}: {exc.message}")
        except WorkcellError:
            for instance in instances.values():
                instance.close()
            raise
        self.instances = instances
        self.online = True
        return {"online": True}, [("scene_online", {})]

    @op("stop_scene", needs_scene=True)
    def op_stop_scene(self, user: str, args: dict) -> tuple:
        """Go offline: discard all live instances."""
        if not self.online:
            raise WorkcellError("ALREADY_OFFLINE", "the scene is already offline")
        if self.executor.state.status in ("running", "paused"):
            raise WorkcellError("EXECUTION_IN_PROGRESS", "stop the execution first")
        for instance in self.instances.values():
            try:
                instance.close()
            except Exception:
                pass
        self.instances = {}
        self.online = False
        return {"online": False}, [("scene_offline", {})]

    def _refresh_instance_pose(self, uid: str) -> None:
        # A live robot's world-frame math tracks its scene pose.
        instance = self.instances.get(uid)
        obj = self.scene.object(uid) if self.scene else None
        if instance is not None and obj is not None and hasattr(instance, "base"):
            instance.base = obj.pose or Pose()

    # -- scene editing ---------------------------------------------------------------

    @op("add_object", lock="@scene", needs_scene=True, offline=True)
    def op_add_object(self, user: str, args: dict) -> tuple:
        """Add an action object to the scene."""
        manifest = self.registry.manifest(args["object_type"])
        pose = Pose.from_dict(args["pose"]) if args.get("pose") else None
        if pose is None and manifest.physical:
            pose = Pose()
        parameters = tuple(
            (p["name"], TypedValue.from_dict(p)) for p in args.get("parameters", [])
        )
        obj = ActionObject(
            uid=gen_uid("obj"), name=args["name"], object_type=args["object_type"],
            pose=pose, parameters=parameters,
        )
        self._commit_scene(replace(self.scene, objects=self.scene.objects + (obj,)))
        payload = {"object": obj.to_dict(), "features": discover_features(manifest).to_dict()}
        return payload, [("object_added", payload)]

    @op("update_object", lock="uid", needs_scene=True)
    def op_update_object(self, user: str, args: dict) -> tuple:
        """Update an action object's name, pose, or parameters."""
        obj = self.scene.object(args["uid"])
        if obj is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no object {args['uid']!r}")
        if "name" in args:
            obj = replace(obj, name=args["name"])
        if "pose" in args:
            obj = replace(obj, pose=Pose.from_dict(args["pose"]) if args["pose"] else None)
        if "parameters" in args:
            obj = replace(
                obj,
                parameters=tuple(
                    (p["name"], TypedValue.from_dict(p)) for p in args["parameters"]
                ),
            )
        objects = tuple(obj if o.uid == obj.uid else o for o in self.scene.objects)
        self._commit_scene(replace(self.scene, objects=objects))
        self._refresh_instance_pose(obj.uid)
        payload = {"object": obj.to_dict()}
        return payload, [("object_updated", payload)]

    @op("remove_object", lock="uid", needs_scene=True, offline=True)
    def op_remove_object(self, user: str, args: dict) -> tuple:
        """Remove an action object (refused while the open project uses it)."""
        uid = args["uid"]
        if self.scene.object(uid) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no object {uid!r}")
        if self.project is not None:
            used = any(ap.parent == uid for ap in self.project.action_points) or any(
                a.target[0] == uid for a in self.project.actions
            )
            if used:
                raise WorkcellError("REFERENCED", f"object {uid!r} is used by the open project")
        objects = tuple(o for o in self.scene.objects if o.uid != uid)
        self._commit_scene(replace(self.scene, objects=objects))
        self.locks.pop(uid, None)
        payload = {"uid": uid}
        return payload, [("object_removed", payload)]

    # -- project editing ----------------------------------------------------------------

    def _replace_ap(self, ap: ActionPoint) -> None:
        aps = tuple(ap if a.uid == ap.uid else a for a in self.project.action_points)
        self._commit_project(replace(self.project, action_points=aps))

    def _get_ap(self, uid: str) -> ActionPoint:
        ap = self.project.action_point(uid)
        if ap is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no action point {uid!r}")
        return ap

    @op("add_action_point", lock="@project", needs_project=True)
    def op_add_action_point(self, user: str, args: dict) -> tuple:
        """Add a spatial anchor to the project."""
        ap = ActionPoint(
            uid=gen_uid("ap"), name=args["name"],
            position=Position.from_dict(args["position"]),
            parent=args.get("parent"),
        )
        self._commit_project(
            replace(self.project, action_points=self.project.action_points + (ap,))
        )
        payload = {"action_point": ap.to_dict()}
        return payload, [("action_point_added", payload)]

    @op("update_action_point", lock="uid", needs_project=True)
    def op_update_action_point(self, user: str, args: dict) -> tuple:
        """Move or rename an action point."""
        ap = self._get_ap(args["uid"])
        if "name" in args:
            ap = replace(ap, name=args["name"])
        if "position" in args:
            ap = replace(ap, position=Position.from_dict(args["position"]))
        if "parent" in args:
            ap = replace(ap, parent=args["parent"])
        self._replace_ap(ap)
        payload = {"action_point": ap.to_dict()}
        return payload, [("action_point_updated", payload)]

    @op("remove_action_point", lock="uid", needs_project=True)
    def op_remove_action_point(self, user: str, args: dict) -> tuple:
        """Remove an action point (refused while actions are attached)."""
        ap = self._get_ap(args["uid"])
        if any(a.owner == ap.uid for a in self.project.actions):
            raise WorkcellError("REFERENCED", f"action point {ap.uid!r} still owns actions")
        aps = tuple(a for a in self.project.action_points if a.uid != ap.uid)
        self._commit_project(replace(self.project, action_points=aps))
        self.locks.pop(ap.uid, None)
        payload = {"uid": ap.uid}
        return payload, [("action_point_removed", payload)]

    @op("add_orientation", lock="action_point", needs_project=True)
    def op_add_orientation(self, user: str, args: dict) -> tuple:
        """Add a named orientation to an action point."""
        ap = self._get_ap(args["action_point"])
        entry = NamedOrientation(args["name"], Orientation.from_dict(args["orientation"]))
        self._replace_ap(replace(ap, orientations=ap.orientations + (entry,)))
        payload = {"action_point": ap.uid, "orientation": entry.to_dict()}
        return payload, [("orientation_added", payload)]

    @op("update_orientation", lock="action_point", needs_project=True)
    def op_update_orientation(self, user: str, args: dict) -> tuple:
        """Replace a named orientation's value."""
        ap = self._get_ap(args["action_point"])
        if ap.orientation(args["name"]) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no orientation {args['name']!r}")
        entry = NamedOrientation(args["name"], Orientation.from_dict(args["orientation"]))
        orientations = tuple(entry if o.name == entry.name else o for o in ap.orientations)
        self._replace_ap(replace(ap, orientations=orientations))
        payload = {"action_point": ap.uid, "orientation": entry.to_dict()}
        return payload, [("orientation_updated", payload)]

    @op("remove_orientation", lock="action_point", needs_project=True)
    def op_remove_orientation(self, user: str, args: dict) -> tuple:
        """Remove a named orientation."""
        ap = self._get_ap(args["action_point"])
        if ap.orientation(args["name"]) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no orientation {args['name']!r}")
        orientations = tuple(o for o in ap.orientations if o.name != args["name"])
        self._replace_ap(replace(ap, orientations=orientations))
        payload = {"action_point": ap.uid, "name": args["name"]}
        return payload, [("orientation_removed", payload)]

    @op("add_joints", lock="action_point", needs_project=True)
    def op_add_joints(self, user: str, args: dict) -> tuple:
        """Record a named joint configuration on an action point."""
        ap = self._get_ap(args["action_point"])
        entry = NamedJoints(args["name"], args["robot"], Joints.from_dict(args["joints"]))
        self._replace_ap(replace(ap, joints=ap.joints + (entry,)))
        payload = {"action_point": ap.uid, "joints": entry.to_dict()}
        return payload, [("joints_added", payload)]

    @op("update_joints", lock="action_point", needs_project=True)
    def op_update_joints(self, user: str, args: dict) -> tuple:
        """Replace a named joint configuration."""
        ap = self._get_ap(args["action_point"])
        old = ap.joints_entry(args["name"])
        if old is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no joints {args['name']!r}")
        entry = NamedJoints(args["name"], args.get("robot", old.robot),
                            Joints.from_dict(args["joints"]))
        joints = tuple(entry if j.name == entry.name else j for j in ap.joints)
        self._replace_ap(replace(ap, joints=joints))
        payload = {"action_point": ap.uid, "joints": entry.to_dict()}
        return payload, [("joints_updated", payload)]

    @op("remove_joints", lock="action_point", needs_project=True)
    def op_remove_joints(self, user: str, args: dict) -> tuple:
        """Remove a named joint configuration."""
        ap = self._get_ap(args["action_point"])
        if ap.joints_entry(args["name"]) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no joints {args['name']!r}")
        joints = tuple(j for j in ap.joints if j.name != args["name"])
        self._replace_ap(replace(ap, joints=joints))
        payload = {"action_point": ap.uid, "name": args["name"]}
        return payload, [("joints_removed", payload)]

    @op("add_action", lock="action_point", needs_project=True)
    def op_add_action(self, user: str, args: dict) -> tuple:
        """Attach a parameterized action call to an action point."""
        ap = self._get_ap(args["action_point"])
        action = ActionInstance(
            uid=gen_uid("act"), name=args["name"], owner=ap.uid,
            target=(args["object"], args["action"]),
            parameters=tuple(ParameterValue.from_dict(p) for p in args.get("parameters", [])),
            results=tuple(args.get("results", [])),
        )
        self._commit_project(replace(self.project, actions=self.project.actions + (action,)))
        payload = {"action": action.to_dict()}
        return payload, [("action_added", payload)]

    @op("update_action", lock="uid", needs_project=True)
    def op_update_action(self, user: str, args: dict) -> tuple:
        """Update an action's name, parameters, or result names."""
        action = self.project.action(args["uid"])
        if action is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no action {args['uid']!r}")
        if "name" in args:
            action = replace(action, name=args["name"])
        if "parameters" in args:
            action = replace(
                action,
                parameters=tuple(ParameterValue.from_dict(p) for p in args["parameters"]),
            )
        if "results" in args:
            action = replace(action, results=tuple(args["results"]))
        actions = tuple(action if a.uid == action.uid else a for a in self.project.actions)
        self._commit_project(replace(self.project, actions=actions))
        payload = {"action": action.to_dict()}
        return payload, [("action_updated", payload)]

    @op("remove_action", lock="uid", needs_project=True)
    def op_remove_action(self, user: str, args: dict) -> tuple:
        """Remove an action (refused while links or edges reference it)."""
        uid = args["uid"]
        if self.project.action(uid) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no action {uid!r}")
        for li in self.project.logic:
            touches = li.start == uid or li.end == uid or (
                li.condition is not None and li.condition.what[0] == uid
            )
            if touches:
                raise WorkcellError("REFERENCED", f"logic item {li.uid!r} references {uid!r}")
        for other in self.project.actions:
            if any(pv.link is not None and pv.link[0] == uid for pv in other.parameters):
                raise WorkcellError("REFERENCED", f"action {other.uid!r} links to {uid!r}")
        actions = tuple(a for a in self.project.actions if a.uid != uid)
        self._commit_project(replace(self.project, actions=actions))
        self.locks.pop(uid, None)
        payload = {"uid": uid}
        return payload, [("action_removed", payload)]

    @op("add_logic_item", lock="@project", needs_project=True)
    def op_add_logic_item(self, user: str, args: dict) -> tuple:
        """Add a flow edge; the acyclicity and condition rules gate it."""
        condition = Condition.from_dict(args["condition"]) if args.get("condition") else None
        item = LogicItem(uid=gen_uid("lgi"), start=args["start"], end=args["end"],
                         condition=condition)
        self._commit_project(replace(self.project, logic=self.project.logic + (item,)))
        payload = {"logic_item": item.to_dict()}
        return payload, [("logic_item_added", payload)]

    @op("update_logic_item", lock="@project", needs_project=True)
    def op_update_logic_item(self, user: str, args: dict) -> tuple:
        """Re-point or re-condition a flow edge."""
        item = None
        for li in self.project.logic:
            if li.uid == args["uid"]:
                item = li
        if item is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no logic item {args['uid']!r}")
        if "start" in args:
            item = replace(item, start=args["start"])
        if "end" in args:
            item = replace(item, end=args["end"])
        if "condition" in args:
            condition = Condition.from_dict(args["condition"]) if args["condition"] else None
            item = replace(item, condition=condition)
        logic = tuple(item if li.uid == item.uid else li for li in self.project.logic)
        self._commit_project(replace(self.project, logic=logic))
        payload = {"logic_item": item.to_dict()}
        return payload, [("logic_item_updated", payload)]

    @op("remove_logic_item", lock="@project", needs_project=True)
    def op_remove_logic_item(self, user: str, args: dict) -> tuple:
        """Remove a flow edge."""
        if not any(li.uid == args["uid"] for li in self.project.logic):
            raise WorkcellError("UNKNOWN_ENTITY", f"no logic item {args['uid']!r}")
        logic = tuple(li for li in self.project.logic if li.uid != args["uid"])
        self._commit_project(replace(self.project, logic=logic))
        payload = {"uid": args["uid"]}
        return payload, [("logic_item_removed", payload)]

    @op("add_project_parameter", lock="@project", needs_project=True)
    def op_add_project_parameter(self, user: str, args: dict) -> tuple:
        """Add a shared constant."""
        param = ProjectParameter(gen_uid("par"), args["name"], TypedValue.from_dict(args["value"]))
        self._commit_project(
            replace(self.project, parameters=self.project.parameters + (param,))
        )
        payload = {"parameter": param.to_dict()}
        return payload, [("project_parameter_added", payload)]

    @op("update_project_parameter", lock="uid", needs_project=True)
    def op_update_project_parameter(self, user: str, args: dict) -> tuple:
        """Change a shared constant's name or value."""
        param = self.project.parameter(args["uid"])
        if param is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no parameter {args['uid']!r}")
        if "name" in args:
            param = replace(param, name=args["name"])
        if "value" in args:
            param = replace(param, value=TypedValue.from_dict(args["value"]))
        parameters = tuple(param if p.uid == param.uid else p for p in self.project.parameters)
        self._commit_project(replace(self.project, parameters=parameters))
        payload = {"parameter": param.to_dict()}
        return payload, [("project_parameter_updated", payload)]

    @op("remove_project_parameter", lock="uid", needs_project=True)
    def op_remove_project_parameter(self, user: str, args: dict) -> tuple:
        """Remove a shared constant (refused while actions reference it)."""
        uid = args["uid"]
        if self.project.parameter(uid) is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no parameter {uid!r}")
        for action in self.project.actions:
            if any(pv.parameter == uid for pv in action.parameters):
                raise WorkcellError("REFERENCED", f"action {action.uid!r} uses parameter {uid!r}")
        parameters = tuple(p for p in self.project.parameters if p.uid != uid)
        self._commit_project(replace(self.project, parameters=parameters))
        self.locks.pop(uid, None)
        payload = {"uid": uid}
        return payload, [("project_parameter_removed", payload)]

    # -- robot control ------------------------------------------------------------------

    def _robot(self, uid: str):
        instance = self.instances.get(uid)
        if instance is None:
            raise WorkcellError("NOT_ONLINE", f"object {uid!r} has no live instance")
        if not hasattr(instance, "ee_pose"):
            raise WorkcellError("UNKNOWN_ENTITY", f"object {uid!r} is not a robot")
        return instance

    @op("get_end_effector_pose", online=True, needs_scene=True)
    def op_get_end_effector_pose(self, user: str, args: dict) -> tuple:
        """Current end-effector pose (world frame).  Read-only; no lock."""
        robot = self._robot(args["robot"])
        return {"pose": robot.ee_pose().to_dict()}, []

    @op("get_robot_joints", online=True, needs_scene=True)
    def op_get_robot_joints(self, user: str, args: dict) -> tuple:
        """Current joint values.  Read-only; no lock."""
        robot = self._robot(args["robot"])
        return {"joints": robot.joints().to_dict()}, []

    @op("move_to_pose", lock="robot", online=True, needs_project=True)
    def op_move_to_pose(self, user: str, args: dict) -> tuple:
        """Move the end effector to an action point's named orientation."""
        from ..validation import resolve_ap_pose

        robot = self._robot(args["robot"])
        ap = self._get_ap(args["action_point"])
        target = resolve_ap_pose(ap, args.get("orientation", "default"), self.scene)
        robot.move_to_pose(target, args.get("speed"))
        return {"pose": robot.ee_pose().to_dict()}, []

    @op("move_to_joints", lock="robot", online=True, needs_scene=True)
    def op_move_to_joints(self, user: str, args: dict) -> tuple:
        """Move to an explicit joint configuration."""
        robot = self._robot(args["robot"])
        robot.move_to_joints(Joints.from_dict(args["joints"]), args.get("speed"))
        return {"joints": robot.joints().to_dict()}, []

    @op("step_end_effector", lock="robot", online=True, needs_scene=True)
    def op_step_end_effector(self, user: str, args: dict) -> tuple:
        """Translate the end effector by a delta along one world axis."""
        robot = self._robot(args["robot"])
        axis = args["axis"]
        if axis not in ("x", "y", "z"):
            raise WorkcellError("UNKNOWN_ENTITY", f"axis must be x, y, or z, not {axis!r}")
        delta = float(args["delta"])
        pose = robot.ee_pose()
        offset = {"x": (delta, 0, 0), "y": (0, delta, 0), "z": (0, 0, delta)}[axis]
        target = Pose(pose.position + Position(*offset), pose.orientation)
        robot.move_to_pose(target, args.get("speed"))
        return {"pose": robot.ee_pose().to_dict()}, []

    @op("align_to_world_axes", lock="robot", online=True, needs_scene=True)
    def op_align_to_world_axes(self, user: str, args: dict) -> tuple:
        """Snap the end-effector yaw to the nearest multiple of 90 degrees."""
        robot = self._robot(args["robot"])
        pose = robot.ee_pose()
        yaw = pose.orientation.yaw()
        snapped = round(yaw / (math.pi / 2)) * (math.pi / 2)
        robot.move_to_pose(Pose(pose.position, Orientation.from_yaw(snapped)), args.get("speed"))
        return {"pose": robot.ee_pose().to_dict()}, []

    @op("set_hand_teaching", lock="robot", online=True, needs_scene=True)
    def op_set_hand_teaching(self, user: str, args: dict) -> tuple:
        """Toggle hand-teaching; while on, joints may be written directly."""
        robot = self._robot(args["robot"])
        robot.set_hand_teaching(bool(args["on"]))
        payload = {"robot": args["robot"], "on": bool(args["on"])}
        return payload, [("hand_teaching_changed", payload)]

    @op("write_joints", lock="robot", online=True, needs_scene=True)
    def op_write_joints(self, user: str, args: dict) -> tuple:
        """Directly set joints (simulated kinesthetic guidance)."""
        robot = self._robot(args["robot"])
        robot.write_joints(Joints.from_dict(args["joints"]))
        return {"joints": robot.joints().to_dict()}, []

    @op("set_sim_input", online=True, needs_scene=True)
    def op_set_sim_input(self, user: str, args: dict) -> tuple:
        """Inject a simulated digital input value (testing hook)."""
        instance = self.instances.get(args["robot"])
        if instance is None or not hasattr(instance, "set_input"):
            raise WorkcellError("NOT_ONLINE", f"object {args['robot']!r} takes no inputs")
        instance.set_input(int(args["index"]), int(args["value"]))
        return {}, []

    @op("update_action_point_using_robot", lock="action_point", online=True, needs_project=True)
    def op_update_ap_using_robot(self, user: str, args: dict) -> tuple:
        """Robot as the source of precision: copy the current end-effector
        position into the action point and record the joints."""
        robot = self._robot(args["robot"])
        ap = self._get_ap(args["action_point"])
        ee = robot.ee_pose()
        position = ee.position
        if ap.parent is not None:
            parent = self.scene.object(ap.parent)
            if parent is None or parent.pose is None:
                raise WorkcellError("PARENT_MISSING", f"parent {ap.parent!r} has no pose")
            local = compose(invert(parent.pose), ee)
            position = local.position
        name = args.get("name", "teach")
        entry = NamedJoints(name, args["robot"], robot.joints())
        joints = tuple(j for j in ap.joints if j.name != name) + (entry,)
        ap = replace(ap, position=position, joints=joints)
        self._replace_ap(ap)
        payload = {"action_point": ap.to_dict()}
        return payload, [("action_point_updated", payload)]

    # -- build / run ------------------------------------------------------------------------

    @op("build_project", needs_project=True)
    def op_build_project(self, user: str, args: dict) -> tuple:
        """Freeze the open project into a stored execution package."""
        try:
            package = build(self.project, self.scene, self.registry,
                            loop=bool(args.get("loop", False)))
        except BuildError as exc:
            err = WorkcellError("BUILD_FAILED", exc.message)
            err.details = [d.to_dict() for d in exc.diagnostics]
            raise err
        self.store.put("packages", package.to_dict())
        payload = {"package": package.uid}
        return payload, [("package_added", payload)]

    @op("list_packages")
    def op_list_packages(self, user: str, args: dict) -> tuple:
        """Stored execution packages with their metadata."""
        packages = []
        for uid in self.store.list("packages"):
            data = self.store.get("packages", uid)
            packages.append(
                {
                    "uid": data["uid"],
                    "created": data["created"],
                    "loop": data["loop"],
                    "project": data["project"]["uid"],
                    "name": data["project"]["name"],
                }
            )
        return {"packages": packages}, []

    @op("run_package", online=True, needs_scene=True)
    def op_run_package(self, user: str, args: dict) -> tuple:
        """Start executing a stored package; events broadcast to everyone."""
        if self.executor.state.status in ("running", "paused"):
            raise WorkcellError("EXECUTION_IN_PROGRESS", "an execution is already active")
        package = ExecutionPackage.from_dict(self.store.get("packages", args["package"]))
        inputs = {int(k): int(v) for k, v in (args.get("inputs") or {}).items()}
        emit = self.emit_async
        uid = package.uid

        def sink(event):
            data = event.to_dict()
            data["package"] = uid
            emit("execution_event", data)

        self.executor.start(
            package, sink,
            max_iterations=args.get("max_iterations"),
            inputs=inputs,
        )
        payload = {"package": uid, "status": "running"}
        return payload, [("execution_started", payload)]

    @op("pause_execution")
    def op_pause_execution(self, user: str, args: dict) -> tuple:
        """Pause at the next action boundary."""
        self.executor.pause()
        return {}, []

    @op("resume_execution")
    def op_resume_execution(self, user: str, args: dict) -> tuple:
        """Resume a paused execution."""
        self.executor.resume()
        return {}, []

    @op("stop_execution")
    def op_stop_execution(self, user: str, args: dict) -> tuple:
        """Stop between actions, cancelling any running motion."""
        self.executor.stop()
        return {}, []

    @op("execute_action", online=True, needs_project=True)
    def op_execute_action(self, user: str, args: dict) -> tuple:
        """Debug: run a single action instance against the live scene."""
        results = execute_single_action(
            self.project, self.scene, args["action"], self.registry, self.instances
        )
        return {"results": results}, []

    # -- calibration ---------------------------------------------------------------------------

    @op("estimate_camera_pose", lock="camera", needs_scene=True)
    def op_estimate_camera_pose(self, user: str, args: dict) -> tuple:
        """Fuse marker observations and update the camera's scene pose."""
        camera = self.scene.object(args["camera"])
        if camera is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no object {args['camera']!r}")
        observations = [MarkerObservation.from_dict(o) for o in args["observations"]]
        pose, weights = estimate_camera_pose(observations, self.markers)
        updated = replace(camera, pose=pose)
        objects = tuple(updated if o.uid == camera.uid else o for o in self.scene.objects)
        self._commit_scene(replace(self.scene, objects=objects))
        self._refresh_instance_pose(camera.uid)
        payload = {"object": updated.to_dict(), "weights": weights}
        return payload, [("object_updated", {"object": updated.to_dict()})]

    @op("refine_robot_pose", lock="robot", needs_scene=True)
    def op_refine_robot_pose(self, user: str, args: dict) -> tuple:
        """Register an observed cloud against the robot model and update
        the robot's scene pose."""
        import numpy as np

        robot = self.scene.object(args["robot"])
        if robot is None:
            raise WorkcellError("UNKNOWN_ENTITY", f"no object {args['robot']!r}")
        cloud = np.asarray(args["cloud"], dtype=float).reshape(-1, 3)
        joints = None
        instance = self.instances.get(args["robot"])
        if instance is not None and hasattr(instance, "joints"):
            joints = instance.joints()
        pose = refine_robot_pose(self.scene, args["robot"], cloud, self.registry, joints=joints)
        updated = replace(robot, pose=pose)
        objects = tuple(updated if o.uid == robot.uid else o for o in self.scene.objects)
        self._commit_scene(replace(self.scene, objects=objects))
        self._refresh_instance_pose(robot.uid)
        payload = {"object": updated.to_dict()}
        return payload, [("object_updated", payload)]

    # -- introspection ---------------------------------------------------------------------------

    @op("describe")
    def op_describe(self, user: str, args: dict) -> tuple:
        """Machine-readable op/event catalog."""
        return protocol_description(), []

    @op("get_object_types")
    def op_get_object_types(self, user: str, args: dict) -> tuple:
        """All registered object type manifests with discovered features."""
        types = []
        for type_id in self.registry.ids():
            manifest = self.registry.manifest(type_id)
            entry = manifest.to_dict()
            entry["features"] = discover_features(manifest).to_dict()
            types.append(entry)
        return {"object_types": types}, []


EVENTS = [
    "user_joined",
    "user_left",
    "locked",
    "unlocked",
    "scene_opened",
    "scene_closed",
    "project_opened",
    "project_closed",
    "scene_online",
    "scene_offline",
    "object_added",
    "object_updated",
    "object_removed",
    "action_point_added",
    "action_point_updated",
    "action_point_removed",
    "orientation_added",
    "orientation_updated",
    "orientation_removed",
    "joints_added",
    "joints_updated",
    "joints_removed",
    "action_added",
    "action_updated",
    "action_removed",
    "logic_item_added",
    "logic_item_updated",
    "logic_item_removed",
    "project_parameter_added",
    "project_parameter_updated",
    "project_parameter_removed",
    "hand_teaching_changed",
    "package_added",
    "execution_started",
    "execution_event",
]


def protocol_description() -> dict:
    """The wire catalog: every op with its requirements, every event name."""
    ops = {
        "register_user": {
            "lock": None, "online": False, "offline": False,
            "needs_scene": False, "needs_project": False,
            "description": "Join the session under a unique name; returns a snapshot.",
        }
    }
    for name, meta in sorted(OPS.items()):
        ops[name] = {
            "lock": meta["lock"],
            "online": meta["online"],
            "offline": meta["offline"],
            "needs_scene": meta["needs_scene"],
            "needs_project": meta["needs_project"],
            "description": meta["doc"],
        }
    return {"ops": ops, "events": list(EVENTS)}
