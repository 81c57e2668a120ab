// The mirrored session state: a pure replay of the registration snapshot
// plus the ordered event stream.  Nothing else mutates it - the UI renders
// from here and issues RPCs, and the server's events close the loop
// (optimistic local edits are deliberately impossible).

import type {
  ActionInstance,
  ActionPoint,
  EventEnvelope,
  ExecutionEventData,
  ExecutionState,
  LogicItem,
  NamedJoints,
  NamedOrientation,
  Project,
  ProjectParameter,
  Scene,
  ActionObject,
  SessionSnapshot,
} from "./protocol.js";

export class SessionMirror {
  users: string[] = [];
  scene: Scene | null = null;
  project: Project | null = null;
  online = false;
  locks: Record<string, string> = {};
  execution: ExecutionState = {
    package: null,
    status: "idle",
    current_action: null,
    iteration: 0,
  };
  handTeaching: Record<string, boolean> = {};
  packages: string[] = [];

  private listeners: Array<() => void> = [];

  onChange(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  applySnapshot(snapshot: SessionSnapshot): void {
    this.users = [...snapshot.users];
    this.scene = snapshot.scene;
    this.project = snapshot.project;
    this.online = snapshot.online;
    this.locks = { ...snapshot.locks };
    this.execution = { ...snapshot.execution };
    this.notify();
  }

  lockOwner(uid: string): string | null {
    // Hierarchical view: an entity is covered by its own lock or an
    // ancestor's (action point for its actions, project/scene as roots).
    let current: string | null = uid;
    const seen = new Set<string>();
    while (current && !seen.has(current)) {
      const owner = this.locks[current];
      if (owner) return owner;
      seen.add(current);
      current = this.parentOf(current);
    }
    return null;
  }

  private parentOf(uid: string): string | null {
    if (this.scene && uid === this.scene.uid) return null;
    if (this.project && uid === this.project.uid) return null;
    if (this.scene?.objects.some((o) => o.uid === uid)) return this.scene.uid;
    if (this.project) {
      if (this.project.action_points.some((ap) => ap.uid === uid)) return this.project.uid;
      const action = this.project.actions.find((a) => a.uid === uid);
      if (action) return action.owner;
      if (
        this.project.logic.some((li) => li.uid === uid) ||
        this.project.parameters.some((p) => p.uid === uid)
      ) {
        return this.project.uid;
      }
    }
    return null;
  }

  applyEvent(envelope: EventEnvelope): void {
    const data = envelope.data;
    switch (envelope.event) {
      case "user_joined":
        this.users = [...this.users, data.user as string].sort();
        break;
      case "user_left":
        this.users = this.users.filter((u) => u !== data.user);
        break;
      case "locked":
        this.locks = { ...this.locks, [data.uid as string]: data.owner as string };
        break;
      case "unlocked": {
        const next = { ...this.locks };
        delete next[data.uid as string];
        this.locks = next;
        break;
      }
      case "scene_opened":
        this.scene = data.scene as unknown as Scene;
        break;
      case "scene_closed":
        this.scene = null;
        this.online = false;
        break;
      case "project_opened":
        this.project = data.project as unknown as Project;
        break;
      case "project_closed":
        this.project = null;
        break;
      case "scene_online":
        this.online = true;
        break;
      case "scene_offline":
        this.online = false;
        this.handTeaching = {};
        break;
      case "object_added":
      case "object_updated": {
        if (!this.scene) break;
        const object = data.object as unknown as ActionObject;
        const others = this.scene.objects.filter((o) => o.uid !== object.uid);
        this.scene = { ...this.scene, objects: [...others, object] };
        break;
      }
      case "object_removed": {
        if (!this.scene) break;
        this.scene = {
          ...this.scene,
          objects: this.scene.objects.filter((o) => o.uid !== data.uid),
        };
        break;
      }
      case "action_point_added":
      case "action_point_updated":
        this.replaceActionPoint(data.action_point as unknown as ActionPoint);
        break;
      case "action_point_removed":
        if (this.project) {
          this.project = {
            ...this.project,
            action_points: this.project.action_points.filter((ap) => ap.uid !== data.uid),
          };
        }
        break;
      case "orientation_added":
      case "orientation_updated": {
        const ap = this.actionPoint(data.action_point as string);
        if (!ap) break;
        const entry = data.orientation as unknown as NamedOrientation;
        const rest = ap.orientations.filter((o) => o.name !== entry.name);
        this.replaceActionPoint({ ...ap, orientations: [...rest, entry] });
        break;
      }
      case "orientation_removed": {
        const ap = this.actionPoint(data.action_point as string);
        if (!ap) break;
        this.replaceActionPoint({
          ...ap,
          orientations: ap.orientations.filter((o) => o.name !== data.name),
        });
        break;
      }
      case "joints_added":
      case "joints_updated": {
        const ap = this.actionPoint(data.action_point as string);
        if (!ap) break;
        const entry = data.joints as unknown as NamedJoints;
        const rest = ap.joints.filter((j) => j.name !== entry.name);
        this.replaceActionPoint({ ...ap, joints: [...rest, entry] });
        break;
      }
      case "joints_removed": {
        const ap = this.actionPoint(data.action_point as string);
        if (!ap) break;
        this.replaceActionPoint({
          ...ap,
          joints: ap.joints.filter((j) => j.name !== data.name),
        });
        break;
      }
      case "action_added":
      case "action_updated": {
        if (!this.project) break;
        const action = data.action as unknown as ActionInstance;
        const rest = this.project.actions.filter((a) => a.uid !== action.uid);
        this.project = { ...this.project, actions: [...rest, action] };
        break;
      }
      case "action_removed":
        if (this.project) {
          this.project = {
            ...this.project,
            actions: this.project.actions.filter((a) => a.uid !== data.uid),
          };
        }
        break;
      case "logic_item_added":
      case "logic_item_updated": {
        if (!this.project) break;
        const item = data.logic_item as unknown as LogicItem;
        const rest = this.project.logic.filter((li) => li.uid !== item.uid);
        this.project = { ...this.project, logic: [...rest, item] };
        break;
      }
      case "logic_item_removed":
        if (this.project) {
          this.project = {
            ...this.project,
            logic: this.project.logic.filter((li) => li.uid !== data.uid),
          };
        }
        break;
      case "project_parameter_added":
      case "project_parameter_updated": {
        if (!this.project) break;
        const parameter = data.parameter as unknown as ProjectParameter;
        const rest = this.project.parameters.filter((p) => p.uid !== parameter.uid);
        this.project = { ...this.project, parameters: [...rest, parameter] };
        break;
      }
      case "project_parameter_removed":
        if (this.project) {
          this.project = {
            ...this.project,
            parameters: this.project.parameters.filter((p) => p.uid !== data.uid),
          };
        }
        break;
      case "hand_teaching_changed":
        this.handTeaching = {
          ...this.handTeaching,
          [data.robot as string]: data.on as boolean,
        };
        break;
      case "package_added":
        this.packages = [...this.packages, data.package as string];
        break;
      case "execution_started":
        this.execution = {
          ...this.execution,
          package: data.package as string,
          status: "running",
        };
        break;
      case "execution_event": {
        const event = data as unknown as ExecutionEventData;
        if (event.kind === "state_changed" && event.status) {
          this.execution = { ...this.execution, status: event.status };
        }
        if (event.kind === "action_before") {
          this.execution = { ...this.execution, current_action: event.action ?? null };
        }
        if (event.kind === "action_after") {
          this.execution = { ...this.execution, current_action: null };
        }
        break;
      }
      default:
        break;
    }
    this.notify();
  }

  actionPoint(uid: string): ActionPoint | undefined {
    return this.project?.action_points.find((ap) => ap.uid === uid);
  }

  private replaceActionPoint(ap: ActionPoint): void {
    if (!this.project) return;
    const rest = this.project.action_points.filter((a) => a.uid !== ap.uid);
    this.project = { ...this.project, action_points: [...rest, ap] };
  }
}
