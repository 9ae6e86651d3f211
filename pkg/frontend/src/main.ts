/**
 * Browser bootstrap: DOM glue between pointer events, the view-model
 * reducers, and the socket client.  All state lives in one ViewModel;
 * every mutation goes through a reducer and every frame is rendered from
 * scratch.  The server URL comes from the `server` query parameter.
 */

import { canvasToWorld, CANVAS_HEIGHT, CANVAS_WIDTH, partExtents } from "./layout.js";
import { WorkbenchClient } from "./net.js";
import type { PartSpec } from "./protocol.js";
import { render } from "./render.js";
import {
  applyServerMessage,
  beginDrag,
  clearToast,
  dropLayer,
  endDrag,
  initialViewModel,
  moveDrag,
  setConnection,
  setLayerOverride,
  type ViewModel,
} from "./viewmodel.js";

function serverUrl(): string {
  const param = new URLSearchParams(window.location.search).get("server");
  return param ?? "ws://127.0.0.1:8765/session";
}

function partAt(vm: ViewModel, worldX: number, worldY: number): PartSpec | null {
  const parts = vm.snapshot?.parts ?? [];
  for (let i = parts.length - 1; i >= 0; i--) {
    const part = parts[i]!;
    if (part.status === "in_hand") continue;
    const { ex, ey } = partExtents(part.type_id, part.yaw);
    if (Math.abs(worldX - part.x) <= ex && Math.abs(worldY - part.y) <= ey) return part;
  }
  return null;
}

function start(): void {
  const canvas = document.createElement("canvas");
  canvas.width = CANVAS_WIDTH;
  canvas.height = CANVAS_HEIGHT;
  document.body.style.margin = "0";
  document.body.style.background = "#11131a";
  document.body.appendChild(canvas);
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2d canvas unavailable");

  let vm = initialViewModel();
  let toastTimer: ReturnType<typeof setTimeout> | null = null;

  const client = new WorkbenchClient(
    serverUrl(),
    (msg) => {
      vm = applyServerMessage(vm, msg);
      if (msg.type === "ERROR") {
        if (toastTimer !== null) clearTimeout(toastTimer);
        toastTimer = setTimeout(() => {
          vm = clearToast(vm);
        }, 4000);
      }
    },
    (status) => {
      vm = setConnection(vm, status);
    },
  );
  client.connect();

  const toWorld = (event: PointerEvent | MouseEvent) => {
    const rect = canvas.getBoundingClientRect();
    return canvasToWorld(event.clientX - rect.left, event.clientY - rect.top);
  };

  canvas.addEventListener("pointerdown", (event) => {
    if (event.button !== 0) return;
    const { x, y } = toWorld(event);
    const part = partAt(vm, x, y);
    if (part === null) return;
    canvas.setPointerCapture(event.pointerId);
    const emitted = beginDrag(vm, part.id, x, y);
    vm = emitted.vm;
    emitted.actions.forEach((a) => client.send(a));
  });

  canvas.addEventListener("pointermove", (event) => {
    const { x, y } = toWorld(event);
    vm = moveDrag(vm, x, y);
  });

  canvas.addEventListener("pointerup", () => {
    const emitted = endDrag(vm);
    vm = emitted.vm;
    emitted.actions.forEach((a) => client.send(a));
  });

  // A placed part's context control: remove it back to the supply.
  canvas.addEventListener("contextmenu", (event) => {
    event.preventDefault();
    const { x, y } = toWorld(event);
    const part = partAt(vm, x, y);
    if (part !== null && part.status === "placed") {
      client.send({ action: "remove", id: part.id });
    }
  });

  window.addEventListener("keydown", (event) => {
    if (event.key === "[") vm = setLayerOverride(vm, Math.max(0, dropLayer(vm) - 1));
    else if (event.key === "]") vm = setLayerOverride(vm, dropLayer(vm) + 1);
    else if (event.key === "0" || event.key === "Escape") vm = setLayerOverride(vm, null);
  });

  const frame = () => {
    render(ctx, vm);
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

start();
