// Pure view models: everything the DOM layer renders is computed here from
// the mirrored session state, so the views are testable without a browser.

import type {
  ActionMeta,
  ActionPoint,
  LogicItem,
  ObjectTypeManifest,
  ParameterMeta,
  ParameterValue,
  Pose,
  Position,
  TypedValue,
} from "./protocol.js";
import type { SessionMirror } from "./mirror.js";

export const NUMERABLE_TYPES = ["boolean", "integer", "enumeration"];

// -- small pose math (top-down scene projection needs real transforms) -------

export function rotate(q: Pose["orientation"], p: Position): Position {
  const { w, x, y, z } = q;
  const tx = 2 * (y * p.z - z * p.y);
  const ty = 2 * (z * p.x - x * p.z);
  const tz = 2 * (x * p.y - y * p.x);
  return {
    x: p.x + w * tx + (y * tz - z * ty),
    y: p.y + w * ty + (z * tx - x * tz),
    z: p.z + w * tz + (x * ty - y * tx),
  };
}

export function transform(pose: Pose, p: Position): Position {
  const r = rotate(pose.orientation, p);
  return {
    x: pose.position.x + r.x,
    y: pose.position.y + r.y,
    z: pose.position.z + r.z,
  };
}

export function yawOf(q: Pose["orientation"]): number {
  return Math.atan2(2 * (q.w * q.z + q.x * q.y), 1 - 2 * (q.y * q.y + q.z * q.z));
}

export function worldPosition(mirror: SessionMirror, ap: ActionPoint): Position {
  if (!ap.parent || !mirror.scene) return ap.position;
  const parent = mirror.scene.objects.find((o) => o.uid === ap.parent);
  if (!parent?.pose) return ap.position;
  return transform(parent.pose, ap.position);
}

// -- program graph -------------------------------------------------------------

export interface GraphNode {
  uid: string;
  label: string;
  group: string; // owning action point name ("" for the sentinels)
  kind: "action" | "start" | "end";
  color: "green" | "red" | "yellow";
  highlighted: boolean;
}

export interface GraphEdge {
  uid: string;
  from: string;
  to: string;
  label: string; // condition rendering, "" when unconditioned
  dashed: false;
}

export interface DataLink {
  from: string; // producing action uid
  to: string; // consuming action uid
  label: string; // result variable name
  dashed: true;
}

export interface GraphView {
  nodes: GraphNode[];
  edges: GraphEdge[];
  dataLinks: DataLink[];
}

function conditionLabel(item: LogicItem): string {
  if (!item.condition) return "";
  return String(item.condition.value.value);
}

export function graphView(mirror: SessionMirror): GraphView {
  const project = mirror.project;
  const highlighted = mirror.execution.current_action;
  const nodes: GraphNode[] = [
    { uid: "START", label: "START", group: "", kind: "start", color: "green", highlighted: false },
    { uid: "END", label: "END", group: "", kind: "end", color: "red", highlighted: false },
  ];
  const edges: GraphEdge[] = [];
  const dataLinks: DataLink[] = [];
  if (!project) return { nodes, edges, dataLinks };

  const apNames = new Map(project.action_points.map((ap) => [ap.uid, ap.name]));
  const ordered = [...project.actions].sort((a, b) => a.uid.localeCompare(b.uid));
  for (const action of ordered) {
    nodes.push({
      uid: action.uid,
      label: action.name,
      group: apNames.get(action.owner) ?? "?",
      kind: "action",
      color: "yellow",
      highlighted: action.uid === highlighted,
    });
    action.parameters.forEach((pv) => {
      if ("link" in pv) {
        const producer = project.actions.find((a) => a.uid === pv.link.action);
        dataLinks.push({
          from: pv.link.action,
          to: action.uid,
          label: producer?.results[pv.link.result] ?? `#${pv.link.result}`,
          dashed: true,
        });
      }
    });
  }
  for (const item of [...project.logic].sort((a, b) => a.uid.localeCompare(b.uid))) {
    edges.push({
      uid: item.uid,
      from: item.start,
      to: item.end,
      label: conditionLabel(item),
      dashed: false,
    });
  }
  return { nodes, edges, dataLinks };
}

// -- 2D top-down scene -----------------------------------------------------------

export interface Footprint {
  uid: string;
  name: string;
  x: number;
  y: number;
  yaw: number;
  shape: { kind: "rect"; width: number; depth: number } | { kind: "circle"; radius: number };
  lockedBy: string | null;
}

export interface SceneMarker {
  uid: string;
  name: string;
  x: number;
  y: number;
  lockedBy: string | null;
}

export interface SceneView {
  footprints: Footprint[];
  actionPoints: SceneMarker[];
  endEffector: { x: number; y: number; yaw: number } | null;
  lockBadges: Array<{ uid: string; name: string; owner: string }>;
}

const DEFAULT_FOOTPRINT = { kind: "rect", width: 0.1, depth: 0.1 } as const;

function footprintShape(manifest?: ObjectTypeManifest): Footprint["shape"] {
  const model = manifest?.model;
  if (!model) return { ...DEFAULT_FOOTPRINT };
  if (model.kind === "box") {
    return { kind: "rect", width: model.size_x ?? 0.1, depth: model.size_y ?? 0.1 };
  }
  if (model.kind === "cylinder" || model.kind === "sphere") {
    return { kind: "circle", radius: model.radius ?? 0.05 };
  }
  return { ...DEFAULT_FOOTPRINT };
}

export function sceneView(
  mirror: SessionMirror,
  types: Map<string, ObjectTypeManifest>,
  endEffector: Pose | null,
): SceneView {
  const footprints: Footprint[] = [];
  const actionPoints: SceneMarker[] = [];
  const lockBadges: Array<{ uid: string; name: string; owner: string }> = [];

  const badge = (uid: string, name: string) => {
    const owner = mirror.locks[uid];
    if (owner) lockBadges.push({ uid, name, owner });
  };

  if (mirror.scene) {
    for (const object of mirror.scene.objects) {
      badge(object.uid, object.name);
      if (!object.pose) continue; // virtual objects have no footprint
      footprints.push({
        uid: object.uid,
        name: object.name,
        x: object.pose.position.x,
        y: object.pose.position.y,
        yaw: yawOf(object.pose.orientation),
        shape: footprintShape(types.get(object.object_type)),
        lockedBy: mirror.lockOwner(object.uid),
      });
    }
  }
  if (mirror.project) {
    for (const ap of mirror.project.action_points) {
      badge(ap.uid, ap.name);
      const world = worldPosition(mirror, ap);
      actionPoints.push({
        uid: ap.uid,
        name: ap.name,
        x: world.x,
        y: world.y,
        lockedBy: mirror.lockOwner(ap.uid),
      });
    }
  }
  const ee = endEffector
    ? { x: endEffector.position.x, y: endEffector.position.y, yaw: yawOf(endEffector.orientation) }
    : null;
  return { footprints, actionPoints, endEffector: ee, lockBadges };
}

// -- parameter forms ------------------------------------------------------------------

export interface FormField {
  name: string;
  type: string;
  minimum?: number;
  maximum?: number;
  allowedValues?: string[];
  description?: string;
}

export function formFields(meta: ActionMeta): FormField[] {
  return meta.parameters.map((p: ParameterMeta) => ({
    name: p.name,
    type: p.type,
    minimum: p.minimum,
    maximum: p.maximum,
    allowedValues: p.allowed_values,
    description: p.description,
  }));
}

// Client-side range/type enforcement; returns a problem string or null.
export function validateFieldInput(field: FormField, raw: string): string | null {
  switch (field.type) {
    case "boolean":
      return raw === "true" || raw === "false" ? null : "expected true or false";
    case "integer": {
      if (!/^-?\d+$/.test(raw.trim())) return "expected an integer";
      const value = Number(raw);
      if (field.minimum !== undefined && value < field.minimum) {
        return `minimum is ${field.minimum}`;
      }
      if (field.maximum !== undefined && value > field.maximum) {
        return `maximum is ${field.maximum}`;
      }
      return null;
    }
    case "double": {
      const value = Number(raw);
      if (!Number.isFinite(value)) return "expected a number";
      if (field.minimum !== undefined && value < field.minimum) {
        return `minimum is ${field.minimum}`;
      }
      if (field.maximum !== undefined && value > field.maximum) {
        return `maximum is ${field.maximum}`;
      }
      return null;
    }
    case "enumeration":
      return field.allowedValues?.includes(raw) ? null : "not an allowed value";
    case "string":
      return null;
    case "pose_ref":
      return raw.includes("/") ? null : "expected action_point/orientation";
    case "joints_ref":
      return raw.includes("/") ? null : "expected action_point/joints";
    default:
      return `unsupported type ${field.type}`;
  }
}

export function fieldToParameterValue(field: FormField, raw: string): ParameterValue {
  switch (field.type) {
    case "boolean":
      return { literal: { type: "boolean", value: raw === "true" } };
    case "integer":
      return { literal: { type: "integer", value: Number(raw) } };
    case "double":
      return { literal: { type: "double", value: Number(raw) } };
    case "enumeration":
      return { literal: { type: "enumeration", value: raw } };
    case "pose_ref": {
      const [actionPoint, orientation] = raw.split("/");
      return { literal: { type: "pose_ref", value: { action_point: actionPoint, orientation } } };
    }
    case "joints_ref": {
      const [actionPoint, name] = raw.split("/");
      return { literal: { type: "joints_ref", value: { action_point: actionPoint, name } } };
    }
    default:
      return { literal: { type: "string", value: raw } };
  }
}

// Condition picker: only numerable results of existing actions qualify.
export interface ConditionChoice {
  action: string; // uid
  actionName: string;
  result: number;
  resultName: string;
  type: string; // numerable type name
}

export function numerableResults(
  mirror: SessionMirror,
  types: Map<string, ObjectTypeManifest>,
): ConditionChoice[] {
  const project = mirror.project;
  const scene = mirror.scene;
  if (!project || !scene) return [];
  const choices: ConditionChoice[] = [];
  for (const action of project.actions) {
    const object = scene.objects.find((o) => o.uid === action.target.object);
    const manifest = object ? types.get(object.object_type) : undefined;
    const meta = manifest?.actions.find((a) => a.name === action.target.action);
    if (!meta) continue;
    meta.returns.forEach((resultType, index) => {
      if (NUMERABLE_TYPES.includes(resultType)) {
        choices.push({
          action: action.uid,
          actionName: action.name,
          result: index,
          resultName: action.results[index] ?? `#${index}`,
          type: resultType,
        });
      }
    });
  }
  return choices;
}

export function conditionValueFor(choice: ConditionChoice, raw: string): TypedValue {
  if (choice.type === "boolean") return { type: "boolean", value: raw === "true" };
  if (choice.type === "integer") return { type: "integer", value: Number(raw) };
  return { type: "enumeration", value: raw };
}

// -- panels ---------------------------------------------------------------------------

export interface RobotPanelView {
  robot: string | null;
  visible: boolean;
  enabled: boolean; // online and locked by this user
  handTeaching: boolean;
  reason: string; // why disabled, for the tooltip
}

export function robotPanel(
  mirror: SessionMirror,
  types: Map<string, ObjectTypeManifest>,
  user: string,
): RobotPanelView {
  const robot = mirror.scene?.objects.find((o) => {
    const manifest = types.get(o.object_type);
    return manifest?.base === "robot";
  });
  if (!robot) {
    return { robot: null, visible: false, enabled: false, handTeaching: false, reason: "no robot" };
  }
  const owner = mirror.lockOwner(robot.uid);
  let reason = "";
  if (!mirror.online) reason = "scene is offline";
  else if (owner !== user) reason = owner ? `locked by ${owner}` : "lock the robot first";
  return {
    robot: robot.uid,
    visible: true,
    enabled: mirror.online && owner === user,
    handTeaching: mirror.handTeaching[robot.uid] ?? false,
    reason,
  };
}

export interface ExecutionPanelView {
  status: string;
  canBuild: boolean;
  canRun: boolean;
  canPause: boolean;
  canResume: boolean;
  canStop: boolean;
}

export function executionPanel(mirror: SessionMirror): ExecutionPanelView {
  const status = mirror.execution.status;
  return {
    status,
    canBuild: mirror.project !== null,
    canRun: mirror.online && !["running", "paused"].includes(status),
    canPause: status === "running",
    canResume: status === "paused",
    canStop: status === "running" || status === "paused",
  };
}
