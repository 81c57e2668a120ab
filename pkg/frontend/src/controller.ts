// The dashboard session: one connection, one mirror, and the commands the
// panels invoke.  The mirror changes only through server events; commands
// are thin RPC wrappers whose results come back as events.

import { Connection, RpcFailure, type SocketFactory } from "./connection.js";
import { SessionMirror } from "./mirror.js";
import type {
  ActionMeta,
  Condition,
  EventEnvelope,
  ExecutionEventData,
  ObjectTypeManifest,
  ParameterValue,
  Pose,
  Position,
  SessionSnapshot,
} from "./protocol.js";

export interface Toast {
  kind: "error" | "info";
  text: string;
}

export class Dashboard {
  readonly mirror = new SessionMirror();
  readonly types = new Map<string, ObjectTypeManifest>();
  /** Ordered action uids highlighted in the graph view (one per action_before). */
  readonly highlightLog: string[] = [];
  readonly eventLog: ExecutionEventData[] = [];
  readonly toasts: Toast[] = [];
  endEffector: Pose | null = null;
  user = "";

  private connection: Connection;

  constructor(factory: SocketFactory) {
    this.connection = new Connection(factory);
    this.connection.onEvent = (event) => this.handleEvent(event);
  }

  async connect(url: string, user: string): Promise<SessionSnapshot> {
    this.user = user;
    await this.connection.open(url);
    const snapshot = (await this.connection.call("register_user", {
      name: user,
    })) as unknown as SessionSnapshot;
    this.mirror.applySnapshot(snapshot);
    await this.refreshTypes();
    return snapshot;
  }

  close(): void {
    this.connection.close();
  }

  async refreshTypes(): Promise<void> {
    const data = await this.connection.call("get_object_types");
    for (const entry of data.object_types as ObjectTypeManifest[]) {
      this.types.set(entry.id, entry);
    }
  }

  private handleEvent(event: EventEnvelope): void {
    if (event.event === "execution_event") {
      const data = event.data as unknown as ExecutionEventData;
      this.eventLog.push(data);
      if (data.kind === "action_before" && data.action) {
        this.highlightLog.push(data.action);
      }
      if (data.kind === "error" && data.error) {
        this.toasts.push({ kind: "error", text: `${data.name ?? "?"}: ${data.error}` });
      }
    }
    this.mirror.applyEvent(event);
  }

  call(op: string, args: Record<string, unknown> = {}): Promise<Record<string, unknown>> {
    return this.connection.call(op, args).catch((err: unknown) => {
      if (err instanceof RpcFailure) {
        this.toasts.push({ kind: "error", text: err.message });
      }
      throw err;
    });
  }

  // -- session -----------------------------------------------------------

  openProject(uid: string): Promise<Record<string, unknown>> {
    return this.call("open_project", { uid });
  }

  lock(uid: string): Promise<Record<string, unknown>> {
    return this.call("lock", { uid });
  }

  unlock(uid: string): Promise<Record<string, unknown>> {
    return this.call("unlock", { uid });
  }

  holdsLock(uid: string): boolean {
    return this.mirror.lockOwner(uid) === this.user;
  }

  // -- edit flows -----------------------------------------------------------

  addActionPoint(name: string, position: Position, parent?: string) {
    return this.call("add_action_point", { name, position, parent: parent ?? null });
  }

  moveActionPoint(uid: string, position: Position) {
    return this.call("update_action_point", { uid, position });
  }

  addAction(
    actionPoint: string,
    name: string,
    object: string,
    action: string,
    parameters: ParameterValue[],
    results: string[],
  ) {
    return this.call("add_action", {
      action_point: actionPoint,
      name,
      object,
      action,
      parameters,
      results,
    });
  }

  addLogicEdge(start: string, end: string, condition?: Condition) {
    return this.call("add_logic_item", { start, end, condition: condition ?? null });
  }

  actionMeta(objectUid: string, action: string): ActionMeta | undefined {
    const object = this.mirror.scene?.objects.find((o) => o.uid === objectUid);
    const manifest = object ? this.types.get(object.object_type) : undefined;
    return manifest?.actions.find((a) => a.name === action);
  }

  // -- execution panel ----------------------------------------------------------

  build(loop = false) {
    return this.call("build_project", { loop });
  }

  runPackage(packageUid: string, inputs?: Record<string, number>) {
    return this.call("run_package", { package: packageUid, inputs });
  }

  pause() {
    return this.call("pause_execution");
  }

  resume() {
    return this.call("resume_execution");
  }

  stop() {
    return this.call("stop_execution");
  }

  // -- robot panel ------------------------------------------------------------------

  startScene() {
    return this.call("start_scene");
  }

  stopScene() {
    return this.call("stop_scene");
  }

  async step(robot: string, axis: "x" | "y" | "z", delta: number): Promise<void> {
    const data = await this.call("step_end_effector", { robot, axis, delta });
    this.endEffector = data.pose as unknown as Pose;
  }

  async refreshEndEffector(robot: string): Promise<void> {
    const data = await this.call("get_end_effector_pose", { robot });
    this.endEffector = data.pose as unknown as Pose;
  }

  setHandTeaching(robot: string, on: boolean) {
    return this.call("set_hand_teaching", { robot, on });
  }

  alignToWorld(robot: string) {
    return this.call("align_to_world_axes", { robot });
  }

  updatePointFromRobot(actionPoint: string, robot: string, name = "teach") {
    return this.call("update_action_point_using_robot", {
      action_point: actionPoint,
      robot,
      name,
    });
  }
}
