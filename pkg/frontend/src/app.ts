// Browser bootstrap: renders the view models into SVG/canvas/HTML and wires
// the panels to the dashboard commands.  All state lives in the mirror;
// every user gesture is an RPC and the redraw happens on server events.

import { Dashboard } from "./controller.js";
import {
  conditionValueFor,
  executionPanel,
  formFields,
  graphView,
  numerableResults,
  robotPanel,
  sceneView,
  validateFieldInput,
  fieldToParameterValue,
  type GraphView,
  type SceneView,
} from "./views.js";

const SCALE = 420; // pixels per meter in the scene canvas
const GRAPH_COLORS = { green: "#2e7d32", red: "#c62828", yellow: "#f9a825" };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function drawGraph(svg: SVGSVGElement, view: GraphView): void {
  const byGroup = new Map<string, string[]>();
  for (const node of view.nodes) {
    if (node.kind === "action") {
      const list = byGroup.get(node.group) ?? [];
      list.push(node.uid);
      byGroup.set(node.group, list);
    }
  }
  // simple layered layout: columns by group, START left, END right
  const positions = new Map<string, { x: number; y: number }>();
  positions.set("START", { x: 40, y: 150 });
  let column = 0;
  for (const [, uids] of byGroup) {
    uids.forEach((uid, row) => {
      positions.set(uid, { x: 160 + column * 150, y: 60 + row * 90 });
    });
    column += 1;
  }
  positions.set("END", { x: 160 + column * 150, y: 150 });

  const parts: string[] = [];
  const arrow =
    '<defs><marker id="arr" viewBox="0 0 10 10" refX="9" refY="5" ' +
    'markerWidth="7" markerHeight="7" orient="auto-start-reverse">' +
    '<path d="M 0 0 L 10 5 L 0 10 z" fill="#555"/></marker></defs>';
  parts.push(arrow);
  const lineFor = (
    from: string,
    to: string,
    dashed: boolean,
    label: string,
    stroke: string,
  ) => {
    const a = positions.get(from);
    const b = positions.get(to);
    if (!a || !b) return;
    const dash = dashed ? ' stroke-dasharray="6 4"' : "";
    parts.push(
      `<line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" stroke="${stroke}"` +
        `${dash} marker-end="url(#arr)"/>`,
    );
    if (label) {
      parts.push(
        `<text x="${(a.x + b.x) / 2}" y="${(a.y + b.y) / 2 - 6}" font-size="11" ` +
          `fill="${stroke}">${label}</text>`,
      );
    }
  };
  for (const edge of view.edges) lineFor(edge.from, edge.to, false, edge.label, "#1565c0");
  for (const link of view.dataLinks) lineFor(link.from, link.to, true, link.label, "#333");
  for (const node of view.nodes) {
    const p = positions.get(node.uid);
    if (!p) continue;
    const stroke = node.highlighted ? "#000" : "none";
    const width = node.highlighted ? 4 : 0;
    parts.push(
      `<g data-node="${node.uid}">` +
        `<rect x="${p.x - 45}" y="${p.y - 20}" width="90" height="40" rx="8" ` +
        `fill="${GRAPH_COLORS[node.color]}" stroke="${stroke}" stroke-width="${width}"/>` +
        `<text x="${p.x}" y="${p.y + 4}" text-anchor="middle" font-size="12" ` +
        `fill="#fff">${node.label}</text>` +
        (node.group
          ? `<text x="${p.x}" y="${p.y + 32}" text-anchor="middle" font-size="9" ` +
            `fill="#777">@${node.group}</text>`
          : "") +
        "</g>",
    );
  }
  svg.innerHTML = parts.join("");
}

function drawScene(canvas: HTMLCanvasElement, view: SceneView): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const cx = canvas.width / 2;
  const cy = canvas.height / 2;
  const toPx = (x: number, y: number) => [cx + x * SCALE, cy - y * SCALE] as const;

  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(cx, 0);
  ctx.lineTo(cx, canvas.height);
  ctx.moveTo(0, cy);
  ctx.lineTo(canvas.width, cy);
  ctx.stroke();

  for (const footprint of view.footprints) {
    const [px, py] = toPx(footprint.x, footprint.y);
    ctx.save();
    ctx.translate(px, py);
    ctx.rotate(-footprint.yaw);
    ctx.fillStyle = footprint.lockedBy ? "rgba(198,40,40,0.25)" : "rgba(21,101,192,0.25)";
    ctx.strokeStyle = "#1565c0";
    if (footprint.shape.kind === "rect") {
      const w = footprint.shape.width * SCALE;
      const d = footprint.shape.depth * SCALE;
      ctx.fillRect(-w / 2, -d / 2, w, d);
      ctx.strokeRect(-w / 2, -d / 2, w, d);
    } else {
      ctx.beginPath();
      ctx.arc(0, 0, footprint.shape.radius * SCALE, 0, Math.PI * 2);
      ctx.fill();
      ctx.stroke();
    }
    ctx.restore();
    ctx.fillStyle = "#333";
    ctx.font = "11px sans-serif";
    const suffix = footprint.lockedBy ? ` [${footprint.lockedBy}]` : "";
    ctx.fillText(footprint.name + suffix, px + 6, py - 6);
  }

  for (const ap of view.actionPoints) {
    const [px, py] = toPx(ap.x, ap.y);
    ctx.fillStyle = "#6a1b9a";
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillStyle = "#333";
    const suffix = ap.lockedBy ? ` [${ap.lockedBy}]` : "";
    ctx.fillText(ap.name + suffix, px + 7, py + 4);
  }

  if (view.endEffector) {
    const [px, py] = toPx(view.endEffector.x, view.endEffector.y);
    ctx.strokeStyle = "#d81b60";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(px, py, 8, 0, Math.PI * 2);
    ctx.moveTo(px, py);
    ctx.lineTo(px + 14 * Math.cos(view.endEffector.yaw), py - 14 * Math.sin(view.endEffector.yaw));
    ctx.stroke();
    ctx.lineWidth = 1;
  }
}

function renderLockList(target: HTMLElement, view: SceneView): void {
  target.innerHTML = view.lockBadges
    .map((badge) => `<li><b>${badge.name}</b> locked by ${badge.owner}</li>`)
    .join("");
}

async function main(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const url = params.get("server") ?? `ws://${location.hostname || "127.0.0.1"}:8765/ws`;
  const user = params.get("user") ?? `operator-${Math.floor(Math.random() * 1000)}`;

  const dashboard = new Dashboard((u) => new WebSocket(u));
  await dashboard.connect(url, user);
  el<HTMLElement>("whoami").textContent = `${user} @ ${url}`;

  const svg = document.querySelector<SVGSVGElement>("#graph");
  const canvas = el<HTMLCanvasElement>("scene");
  const locksEl = el<HTMLUListElement>("locks");
  const logEl = el<HTMLPreElement>("log");
  const toastsEl = el<HTMLElement>("toasts");
  const statusEl = el<HTMLElement>("status");

  const redraw = () => {
    const graph = graphView(dashboard.mirror);
    if (svg) drawGraph(svg, graph);
    const scene = sceneView(dashboard.mirror, dashboard.types, dashboard.endEffector);
    drawScene(canvas, scene);
    renderLockList(locksEl, scene);

    const exec = executionPanel(dashboard.mirror);
    statusEl.textContent = `${exec.status} | online: ${dashboard.mirror.online} | users: ${dashboard.mirror.users.join(", ")}`;
    el<HTMLButtonElement>("btn-run").disabled = !exec.canRun || dashboard.mirror.packages.length === 0;
    el<HTMLButtonElement>("btn-pause").disabled = !exec.canPause;
    el<HTMLButtonElement>("btn-resume").disabled = !exec.canResume;
    el<HTMLButtonElement>("btn-stop").disabled = !exec.canStop;
    el<HTMLButtonElement>("btn-build").disabled = !exec.canBuild;

    const robot = robotPanel(dashboard.mirror, dashboard.types, dashboard.user);
    const panel = el<HTMLElement>("robot-panel");
    panel.title = robot.reason;
    for (const button of panel.querySelectorAll("button, input")) {
      (button as HTMLButtonElement).disabled = !robot.enabled;
    }
    el<HTMLButtonElement>("btn-lock-robot").disabled = !robot.visible || !dashboard.mirror.online;

    logEl.textContent = dashboard.eventLog
      .slice(-12)
      .map((e) => `${e.kind} ${e.name ?? e.status ?? ""}`)
      .join("\n");
    toastsEl.innerHTML = dashboard.toasts
      .slice(-3)
      .map((t) => `<div class="toast ${t.kind}">${t.text}</div>`)
      .join("");
  };
  dashboard.mirror.onChange(redraw);

  const robotUid = () => robotPanel(dashboard.mirror, dashboard.types, dashboard.user).robot;
  const stepSize = () => Number(el<HTMLInputElement>("step-size").value) || 0.01;
  const guard = (fn: () => Promise<unknown>) => () => void fn().catch(() => redraw());

  el<HTMLButtonElement>("btn-open").onclick = guard(() =>
    dashboard.openProject(el<HTMLInputElement>("project-uid").value),
  );
  el<HTMLButtonElement>("btn-online").onclick = guard(() => dashboard.startScene());
  el<HTMLButtonElement>("btn-offline").onclick = guard(() => dashboard.stopScene());
  el<HTMLButtonElement>("btn-build").onclick = guard(() => dashboard.build());
  el<HTMLButtonElement>("btn-run").onclick = guard(() =>
    dashboard.runPackage(dashboard.mirror.packages[dashboard.mirror.packages.length - 1]),
  );
  el<HTMLButtonElement>("btn-pause").onclick = guard(() => dashboard.pause());
  el<HTMLButtonElement>("btn-resume").onclick = guard(() => dashboard.resume());
  el<HTMLButtonElement>("btn-stop").onclick = guard(() => dashboard.stop());
  el<HTMLButtonElement>("btn-lock-robot").onclick = guard(async () => {
    const robot = robotUid();
    if (robot) await (dashboard.holdsLock(robot) ? dashboard.unlock(robot) : dashboard.lock(robot));
  });
  for (const axis of ["x", "y", "z"] as const) {
    el<HTMLButtonElement>(`btn-step-${axis}-plus`).onclick = guard(async () => {
      const robot = robotUid();
      if (robot) await dashboard.step(robot, axis, stepSize());
    });
    el<HTMLButtonElement>(`btn-step-${axis}-minus`).onclick = guard(async () => {
      const robot = robotUid();
      if (robot) await dashboard.step(robot, axis, -stepSize());
    });
  }
  el<HTMLInputElement>("hand-teach").onchange = guard(async () => {
    const robot = robotUid();
    if (robot) {
      await dashboard.setHandTeaching(robot, el<HTMLInputElement>("hand-teach").checked);
    }
  });
  el<HTMLButtonElement>("btn-update-point").onclick = guard(async () => {
    const robot = robotUid();
    const ap = el<HTMLInputElement>("teach-ap").value;
    if (robot && ap) await dashboard.updatePointFromRobot(ap, robot);
  });
  el<HTMLButtonElement>("btn-align").onclick = guard(async () => {
    const robot = robotUid();
    if (robot) await dashboard.alignToWorld(robot);
  });
  el<HTMLButtonElement>("btn-add-ap").onclick = guard(() =>
    dashboard.addActionPoint(el<HTMLInputElement>("ap-name").value, {
      x: Number(el<HTMLInputElement>("ap-x").value) || 0,
      y: Number(el<HTMLInputElement>("ap-y").value) || 0,
      z: Number(el<HTMLInputElement>("ap-z").value) || 0,
    }),
  );

  // drag an action point marker to move it (z preserved); the update RPC
  // goes out on release and the marker snaps to the server's echo
  let dragging: { uid: string; z: number } | null = null;
  const canvasPoint = (ev: MouseEvent) => {
    const rect = canvas.getBoundingClientRect();
    return {
      x: (ev.clientX - rect.left - canvas.width / 2) / SCALE,
      y: -(ev.clientY - rect.top - canvas.height / 2) / SCALE,
    };
  };
  canvas.onmousedown = (ev) => {
    const at = canvasPoint(ev);
    const view = sceneView(dashboard.mirror, dashboard.types, dashboard.endEffector);
    for (const marker of view.actionPoints) {
      if (Math.hypot(marker.x - at.x, marker.y - at.y) < 0.02) {
        const ap = dashboard.mirror.actionPoint(marker.uid);
        if (ap && !ap.parent) dragging = { uid: marker.uid, z: ap.position.z };
        return;
      }
    }
  };
  canvas.onmouseup = (ev) => {
    if (!dragging) return;
    const at = canvasPoint(ev);
    const target = dragging;
    dragging = null;
    void dashboard
      .moveActionPoint(target.uid, { x: at.x, y: at.y, z: target.z })
      .catch(() => redraw());
  };

  renderActionForm(dashboard, redraw);
  renderEdgeForm(dashboard, redraw);
  dashboard.mirror.onChange(() => {
    renderActionForm(dashboard, redraw);
    renderEdgeForm(dashboard, redraw);
  });

  // end-effector marker polling while online
  setInterval(() => {
    const robot = robotUid();
    if (robot && dashboard.mirror.online) {
      void dashboard.refreshEndEffector(robot).then(redraw, () => {});
    }
  }, 500);

  redraw();
}

function options(values: Array<[string, string]>, selected?: string): string {
  return values
    .map(
      ([value, label]) =>
        `<option value="${value}"${value === selected ? " selected" : ""}>${label}</option>`,
    )
    .join("");
}

// Add-action flow: the parameter form is generated from the action's
// manifest metadata and ranges are enforced before the RPC goes out.
function renderActionForm(dashboard: Dashboard, redraw: () => void): void {
  const root = el<HTMLElement>("action-form");
  const mirror = dashboard.mirror;
  if (!mirror.project || !mirror.scene) {
    root.innerHTML = "<i>open a project to add actions</i>";
    return;
  }
  const previous = {
    object: root.querySelector<HTMLSelectElement>("[name=object]")?.value,
    action: root.querySelector<HTMLSelectElement>("[name=action]")?.value,
  };
  const objects = mirror.scene.objects;
  const objectUid = previous.object ?? objects[0]?.uid;
  const manifest = dashboard.types.get(
    objects.find((o) => o.uid === objectUid)?.object_type ?? "",
  );
  const actionName = previous.action ?? manifest?.actions[0]?.name;
  const meta = manifest?.actions.find((a) => a.name === actionName);
  const fields = meta ? formFields(meta) : [];

  root.innerHTML = `
    <label>point <select name="owner">${options(
      mirror.project.action_points.map((ap) => [ap.uid, ap.name]),
    )}</select></label>
    <label>name <input name="name" size="10"></label>
    <label>object <select name="object">${options(
      objects.map((o) => [o.uid, o.name]),
      objectUid,
    )}</select></label>
    <label>action <select name="action">${options(
      (manifest?.actions ?? []).map((a) => [a.name, a.name]),
      actionName,
    )}</select></label>
    ${fields
      .map(
        (field) => `<label>${field.name} (${field.type})
          <input name="param-${field.name}" size="8"
                 title="${field.description ?? ""}">
          <span class="problem" data-for="${field.name}"></span></label>`,
      )
      .join("")}
    <label>results <input name="results" size="10"
           placeholder="comma separated"></label>
    <button name="submit">add action</button>`;

  root.querySelector<HTMLSelectElement>("[name=object]")!.onchange = () =>
    renderActionForm(dashboard, redraw);
  root.querySelector<HTMLSelectElement>("[name=action]")!.onchange = () =>
    renderActionForm(dashboard, redraw);
  root.querySelector<HTMLButtonElement>("[name=submit]")!.onclick = () => {
    if (!meta) return;
    const parameters = [];
    for (const field of fields) {
      const input = root.querySelector<HTMLInputElement>(`[name=param-${field.name}]`)!;
      const problem = validateFieldInput(field, input.value);
      root.querySelector(`[data-for=${field.name}]`)!.textContent = problem ?? "";
      if (problem) return; // client-side range enforcement
      parameters.push(fieldToParameterValue(field, input.value));
    }
    const results = root
      .querySelector<HTMLInputElement>("[name=results]")!
      .value.split(",")
      .map((s) => s.trim())
      .filter(Boolean);
    void dashboard
      .addAction(
        root.querySelector<HTMLSelectElement>("[name=owner]")!.value,
        root.querySelector<HTMLInputElement>("[name=name]")!.value,
        root.querySelector<HTMLSelectElement>("[name=object]")!.value,
        root.querySelector<HTMLSelectElement>("[name=action]")!.value,
        parameters,
        results,
      )
      .catch(() => redraw());
  };
}

// Add-edge flow: the condition picker offers only numerable prior results.
function renderEdgeForm(dashboard: Dashboard, redraw: () => void): void {
  const root = el<HTMLElement>("edge-form");
  const mirror = dashboard.mirror;
  if (!mirror.project) {
    root.innerHTML = "<i>open a project to add edges</i>";
    return;
  }
  const actionOptions = mirror.project.actions.map(
    (a) => [a.uid, a.name] as [string, string],
  );
  const choices = numerableResults(mirror, dashboard.types);
  root.innerHTML = `
    <label>from <select name="start">${options([["START", "START"], ...actionOptions])}</select></label>
    <label>to <select name="end">${options([...actionOptions, ["END", "END"]])}</select></label>
    <label>condition <select name="condition">
      <option value="">(none)</option>
      ${options(
        choices.map((c) => [
          `${c.action}:${c.result}:${c.type}`,
          `${c.actionName}.${c.resultName} (${c.type})`,
        ]),
      )}
    </select></label>
    <label>value <input name="value" size="6" placeholder="true"></label>
    <button name="submit">add edge</button>`;
  root.querySelector<HTMLButtonElement>("[name=submit]")!.onclick = () => {
    const conditionRaw = root.querySelector<HTMLSelectElement>("[name=condition]")!.value;
    let condition;
    if (conditionRaw) {
      const [action, result, type] = conditionRaw.split(":");
      const choice = choices.find(
        (c) => c.action === action && c.result === Number(result) && c.type === type,
      )!;
      condition = {
        what: { action, result: Number(result) },
        value: conditionValueFor(choice, root.querySelector<HTMLInputElement>("[name=value]")!.value),
      };
    }
    void dashboard
      .addLogicEdge(
        root.querySelector<HTMLSelectElement>("[name=start]")!.value,
        root.querySelector<HTMLSelectElement>("[name=end]")!.value,
        condition,
      )
      .catch(() => redraw());
  };
}

main().catch((err) => {
  document.body.innerHTML = `<pre style="color:#c62828">${String(err)}</pre>`;
});
