import { describe, expect, test } from "vitest";

import { SessionMirror } from "../src/mirror.js";
import type { EventEnvelope, SessionSnapshot } from "../src/protocol.js";

const IDENTITY = { w: 1, x: 0, y: 0, z: 0 };

export function demoSnapshot(): SessionSnapshot {
  return {
    users: ["alice"],
    scene: {
      uid: "scn_demo",
      name: "demo",
      objects: [
        {
          uid: "obj_robot",
          name: "robot",
          object_type: "SimScara",
          pose: { position: { x: 0, y: 0, z: 0 }, orientation: IDENTITY },
          parameters: [],
        },
        { uid: "obj_logic", name: "logic", object_type: "Logic", pose: null, parameters: [] },
      ],
    },
    project: {
      uid: "prj_demo",
      name: "demo",
      scene: "scn_demo",
      action_points: [
        {
          uid: "ap_here",
          name: "here",
          position: { x: 0.3, y: 0.05, z: 0.1 },
          parent: null,
          orientations: [{ name: "default", orientation: IDENTITY }],
          joints: [],
        },
      ],
      actions: [
        {
          uid: "act_get",
          name: "get_in_val",
          owner: "ap_here",
          target: { object: "obj_robot", action: "get_input" },
          parameters: [],
          results: ["inp_value"],
        },
        {
          uid: "act_comp",
          name: "comp",
          owner: "ap_here",
          target: { object: "obj_logic", action: "greater_than" },
          parameters: [
            { link: { action: "act_get", result: 0 } },
            { literal: { type: "integer", value: 5 } },
          ],
          results: ["comp_res"],
        },
      ],
      parameters: [],
      logic: [
        { uid: "lgi_1", start: "START", end: "act_get", condition: null },
        {
          uid: "lgi_2",
          start: "act_get",
          end: "act_comp",
          condition: null,
        },
      ],
      has_logic: true,
    },
    online: false,
    locks: {},
    execution: { package: null, status: "idle", current_action: null, iteration: 0 },
  };
}

function event(name: string, data: Record<string, unknown>): EventEnvelope {
  return { event: name, data, initiator: "alice" };
}

describe("snapshot replay", () => {
  test("snapshot populates everything", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    expect(mirror.users).toEqual(["alice"]);
    expect(mirror.scene?.objects).toHaveLength(2);
    expect(mirror.project?.actions).toHaveLength(2);
    expect(mirror.online).toBe(false);
  });

  test("users join and leave", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(event("user_joined", { user: "bob" }));
    expect(mirror.users).toEqual(["alice", "bob"]);
    mirror.applyEvent(event("user_left", { user: "alice" }));
    expect(mirror.users).toEqual(["bob"]);
  });
});

describe("entity events", () => {
  test("action point add, update, remove", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    const ap = {
      uid: "ap_new",
      name: "new",
      position: { x: 0.1, y: 0, z: 0 },
      parent: null,
      orientations: [],
      joints: [],
    };
    mirror.applyEvent(event("action_point_added", { action_point: ap }));
    expect(mirror.actionPoint("ap_new")?.name).toBe("new");

    mirror.applyEvent(
      event("action_point_updated", {
        action_point: { ...ap, position: { x: 0.9, y: 0, z: 0 } },
      }),
    );
    expect(mirror.actionPoint("ap_new")?.position.x).toBe(0.9);

    mirror.applyEvent(event("action_point_removed", { uid: "ap_new" }));
    expect(mirror.actionPoint("ap_new")).toBeUndefined();
  });

  test("orientations and joints nested updates", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(
      event("orientation_added", {
        action_point: "ap_here",
        orientation: { name: "tilted", orientation: { w: 0.9238795, x: 0, y: 0, z: 0.3826834 } },
      }),
    );
    expect(mirror.actionPoint("ap_here")?.orientations).toHaveLength(2);
    mirror.applyEvent(event("orientation_removed", { action_point: "ap_here", name: "tilted" }));
    expect(mirror.actionPoint("ap_here")?.orientations).toHaveLength(1);

    mirror.applyEvent(
      event("joints_added", {
        action_point: "ap_here",
        joints: { name: "taught", robot: "obj_robot", joints: [{ name: "q1", value: 0.2 }] },
      }),
    );
    expect(mirror.actionPoint("ap_here")?.joints[0]?.robot).toBe("obj_robot");
  });

  test("objects and logic items", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(
      event("object_updated", {
        object: {
          uid: "obj_robot",
          name: "robot",
          object_type: "SimScara",
          pose: { position: { x: 0.5, y: 0, z: 0 }, orientation: IDENTITY },
          parameters: [],
        },
      }),
    );
    expect(mirror.scene?.objects.find((o) => o.uid === "obj_robot")?.pose?.position.x).toBe(0.5);

    mirror.applyEvent(
      event("logic_item_added", {
        logic_item: { uid: "lgi_3", start: "act_comp", end: "END", condition: null },
      }),
    );
    expect(mirror.project?.logic).toHaveLength(3);
    mirror.applyEvent(event("logic_item_removed", { uid: "lgi_3" }));
    expect(mirror.project?.logic).toHaveLength(2);
  });
});

describe("locks", () => {
  test("lock table tracks events and hierarchy resolves owners", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(event("locked", { uid: "ap_here", owner: "bob" }));
    expect(mirror.locks).toEqual({ ap_here: "bob" });
    // the action owned by the locked point is covered
    expect(mirror.lockOwner("act_get")).toBe("bob");
    expect(mirror.lockOwner("obj_robot")).toBeNull();
    mirror.applyEvent(event("unlocked", { uid: "ap_here", owner: "bob" }));
    expect(mirror.lockOwner("act_get")).toBeNull();
  });

  test("project lock covers all project entities", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(event("locked", { uid: "prj_demo", owner: "carol" }));
    expect(mirror.lockOwner("ap_here")).toBe("carol");
    expect(mirror.lockOwner("act_comp")).toBe("carol");
    expect(mirror.lockOwner("lgi_1")).toBe("carol");
  });
});

describe("execution state", () => {
  test("state and highlight follow execution events", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    mirror.applyEvent(event("scene_online", {}));
    expect(mirror.online).toBe(true);

    mirror.applyEvent(event("execution_started", { package: "pkg_1", status: "running" }));
    expect(mirror.execution.status).toBe("running");

    mirror.applyEvent(
      event("execution_event", {
        kind: "action_before",
        timestamp: "t",
        action: "act_get",
        name: "get_in_val",
      }),
    );
    expect(mirror.execution.current_action).toBe("act_get");

    mirror.applyEvent(
      event("execution_event", {
        kind: "action_after",
        timestamp: "t",
        action: "act_get",
        name: "get_in_val",
      }),
    );
    expect(mirror.execution.current_action).toBeNull();

    mirror.applyEvent(
      event("execution_event", { kind: "state_changed", timestamp: "t", status: "idle" }),
    );
    expect(mirror.execution.status).toBe("idle");
  });

  test("mirror only changes through events", () => {
    const mirror = new SessionMirror();
    mirror.applySnapshot(demoSnapshot());
    const before = JSON.stringify(mirror.project);
    let changes = 0;
    mirror.onChange(() => changes++);
    // unknown events are ignored but still notify listeners
    mirror.applyEvent(event("totally_unknown", { x: 1 }));
    expect(JSON.stringify(mirror.project)).toBe(before);
    expect(changes).toBe(1);
  });
});
