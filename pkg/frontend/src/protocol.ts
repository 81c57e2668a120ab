// Wire types for the collaboration server protocol.  One WebSocket text
// frame carries one envelope: request, response, or event.  These mirror
// the JSON Schemas shipped in ../schemas/.

export interface Position {
  x: number;
  y: number;
  z: number;
}

export interface Orientation {
  w: number;
  x: number;
  y: number;
  z: number;
}

export interface Pose {
  position: Position;
  orientation: Orientation;
}

export type ValueType =
  | "boolean"
  | "integer"
  | "double"
  | "string"
  | "enumeration"
  | "pose"
  | "joints"
  | "pose_ref"
  | "joints_ref";

export interface TypedValue {
  type: ValueType;
  value: unknown;
}

export interface ObjectParameter extends TypedValue {
  name: string;
}

export interface ActionObject {
  uid: string;
  name: string;
  object_type: string;
  pose: Pose | null;
  parameters: ObjectParameter[];
}

export interface Scene {
  uid: string;
  name: string;
  objects: ActionObject[];
  modified?: string | null;
}

export interface NamedOrientation {
  name: string;
  orientation: Orientation;
}

export interface JointEntry {
  name: string;
  value: number;
}

export interface NamedJoints {
  name: string;
  robot: string;
  joints: JointEntry[];
}

export interface ActionPoint {
  uid: string;
  name: string;
  position: Position;
  parent?: string | null;
  orientations: NamedOrientation[];
  joints: NamedJoints[];
}

export type ParameterValue =
  | { literal: TypedValue }
  | { parameter: string }
  | { link: { action: string; result: number } };

export interface ActionInstance {
  uid: string;
  name: string;
  owner: string;
  target: { object: string; action: string };
  parameters: ParameterValue[];
  results: string[];
}

export interface Condition {
  what: { action: string; result: number };
  value: TypedValue;
}

export interface LogicItem {
  uid: string;
  start: string;
  end: string;
  condition: Condition | null;
}

export interface ProjectParameter {
  uid: string;
  name: string;
  value: TypedValue;
}

export interface Project {
  uid: string;
  name: string;
  scene: string;
  action_points: ActionPoint[];
  actions: ActionInstance[];
  parameters: ProjectParameter[];
  logic: LogicItem[];
  has_logic: boolean;
  modified?: string | null;
}

export interface ExecutionState {
  package: string | null;
  status: "idle" | "running" | "paused" | "stopped" | "faulted";
  current_action: string | null;
  iteration: number;
}

export interface SessionSnapshot {
  users: string[];
  scene: Scene | null;
  project: Project | null;
  online: boolean;
  locks: Record<string, string>;
  execution: ExecutionState;
}

export interface ParameterMeta {
  name: string;
  type: string;
  minimum?: number;
  maximum?: number;
  allowed_values?: string[];
  description?: string;
}

export interface ActionMeta {
  name: string;
  parameters: ParameterMeta[];
  returns: string[];
  blocking?: boolean;
  description?: string;
}

export interface RobotFeatures {
  move_to_pose: boolean;
  forward_kinematics: boolean;
  inverse_kinematics: boolean;
  hand_teaching: boolean;
  stepping: boolean;
}

export interface ObjectTypeManifest {
  id: string;
  base: "generic" | "robot" | "camera" | "virtual";
  description?: string;
  model?: ModelGeometry | null;
  actions: ActionMeta[];
  robot_features?: RobotFeatures | null;
  features?: RobotFeatures;
}

export interface ModelGeometry {
  kind: "box" | "cylinder" | "sphere" | "mesh";
  size_x?: number;
  size_y?: number;
  size_z?: number;
  radius?: number;
  height?: number;
  asset_id?: string;
}

export interface RpcError {
  code: string;
  message: string;
  details?: unknown[];
}

export interface ResponseEnvelope {
  id: number | null;
  ok: boolean;
  data?: Record<string, unknown>;
  error?: RpcError;
}

export interface EventEnvelope {
  event: string;
  data: Record<string, unknown>;
  initiator: string | null;
}

export type ServerEnvelope = ResponseEnvelope | EventEnvelope;

export interface ExecutionEventData {
  kind: "state_changed" | "action_before" | "action_after" | "error";
  timestamp: string;
  package?: string;
  status?: ExecutionState["status"];
  action?: string;
  name?: string;
  parameters?: unknown[];
  results?: unknown[];
  error?: string;
}

export function isEvent(envelope: ServerEnvelope): envelope is EventEnvelope {
  return "event" in envelope;
}
