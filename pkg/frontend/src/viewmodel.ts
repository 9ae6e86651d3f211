/**
 * View model and reducers.  The server is authoritative: every reducer is
 * a pure function, the step counter only ever moves on SNAPSHOT/EVENT
 * messages, and drag handling merely emits ACTION messages whose effects
 * come back over the socket.  Rendering is a pure function of this state.
 */

import { snapToCell, type Cell } from "./layout.js";
import type {
  Action,
  HighlightsMsg,
  ServerMessage,
  SnapshotMsg,
  StepSpec,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed" | "error";

export interface EventEntry {
  kind: string;
  step_index: number | null;
  frame: number;
}

export interface DragState {
  partId: number;
  typeId: string;
  worldX: number;
  worldY: number;
  cell: Cell | null;
}

export interface ViewModel {
  connection: ConnectionStatus;
  sid: string;
  snapshot: SnapshotMsg | null;
  highlights: HighlightsMsg | null;
  /** Most recent events, newest last, capped at 50. */
  events: EventEntry[];
  /** Step counter per the last SNAPSHOT or EVENT, never advanced locally. */
  currentStep: number | null;
  done: boolean;
  toast: string | null;
  drag: DragState | null;
  /** Drop layer override; null follows the active instruction. */
  layerOverride: number | null;
}

export const EVENT_FEED_LIMIT = 50;

export function initialViewModel(): ViewModel {
  return {
    connection: "connecting",
    sid: "",
    snapshot: null,
    highlights: null,
    events: [],
    currentStep: null,
    done: false,
    toast: null,
    drag: null,
    layerOverride: null,
  };
}

export function setConnection(vm: ViewModel, connection: ConnectionStatus): ViewModel {
  // A dropped socket invalidates local interaction state; the next
  // SNAPSHOT after reconnecting repopulates the scene.
  if (connection !== "open") {
    return { ...vm, connection, drag: null, highlights: null };
  }
  return { ...vm, connection };
}

export function applyServerMessage(vm: ViewModel, msg: ServerMessage): ViewModel {
  switch (msg.type) {
    case "SNAPSHOT":
      return {
        ...vm,
        sid: msg.sid,
        snapshot: msg,
        currentStep: msg.current_step,
        done: msg.done,
      };
    case "HIGHLIGHTS":
      return { ...vm, sid: msg.sid, highlights: msg };
    case "EVENT": {
      const events = [...vm.events, { kind: msg.kind, step_index: msg.step_index, frame: msg.frame }];
      if (events.length > EVENT_FEED_LIMIT) events.splice(0, events.length - EVENT_FEED_LIMIT);
      let { currentStep, done, highlights } = vm;
      if (msg.kind === "STEP_STARTED" || msg.kind === "STEP_REGRESSED") {
        currentStep = msg.step_index;
      } else if (msg.kind === "SESSION_COMPLETED") {
        currentStep = null;
        done = true;
        highlights = null;
      }
      return { ...vm, sid: msg.sid, events, currentStep, done, highlights };
    }
    case "ERROR":
      // Roll interaction state back to what the server last confirmed.
      return { ...vm, toast: `${msg.code}: ${msg.message}`, drag: null };
  }
}

/** The placement the active step asks for, per the authoritative snapshot. */
export function instructedStep(vm: ViewModel): StepSpec | null {
  if (vm.snapshot === null || vm.currentStep === null) return null;
  return vm.snapshot.steps[vm.currentStep] ?? null;
}

export interface Emitted {
  vm: ViewModel;
  actions: Action[];
}

/**
 * Grab a part.  Supply parts emit pick; placed parts emit remove then
 * pick, so dragging a placed part relocates it.  Parts already in hand
 * resume the drag without re-emitting.
 */
export function beginDrag(vm: ViewModel, partId: number, worldX: number, worldY: number): Emitted {
  const part = vm.snapshot?.parts.find((p) => p.id === partId);
  if (!part || vm.drag !== null) return { vm, actions: [] };
  const actions: Action[] =
    part.status === "in_supply"
      ? [{ action: "pick", id: partId }]
      : part.status === "placed"
        ? [
            { action: "remove", id: partId },
            { action: "pick", id: partId },
          ]
        : [];
  const drag: DragState = { partId, typeId: part.type_id, worldX, worldY, cell: null };
  return { vm: { ...vm, drag: moveCell(drag, vm) }, actions };
}

function dropRotation(vm: ViewModel): number {
  // The drop chooses only the cell; orientation follows the active
  // instruction (the overlay shows the part already turned that way).
  return instructedStep(vm)?.rot ?? 0;
}

export function dropLayer(vm: ViewModel): number {
  return vm.layerOverride ?? instructedStep(vm)?.layer ?? 0;
}

function moveCell(drag: DragState, vm: ViewModel): DragState {
  return { ...drag, cell: snapToCell(drag.worldX, drag.worldY, drag.typeId, dropRotation(vm)) };
}

export function moveDrag(vm: ViewModel, worldX: number, worldY: number): ViewModel {
  if (vm.drag === null) return vm;
  return { ...vm, drag: moveCell({ ...vm.drag, worldX, worldY }, vm) };
}

/**
 * Release the drag.  A snappable hover cell emits place; anywhere else
 * emits nothing and the part simply stays in hand.
 */
export function endDrag(vm: ViewModel): Emitted {
  const drag = vm.drag;
  if (drag === null) return { vm, actions: [] };
  const cleared = { ...vm, drag: null };
  if (drag.cell === null) return { vm: cleared, actions: [] };
  return {
    vm: cleared,
    actions: [
      {
        action: "place",
        id: drag.partId,
        x: drag.cell.x,
        y: drag.cell.y,
        layer: dropLayer(vm),
        rot: dropRotation(vm),
      },
    ],
  };
}

export function setLayerOverride(vm: ViewModel, layer: number | null): ViewModel {
  const next = { ...vm, layerOverride: layer };
  return vm.drag === null ? next : { ...next, drag: moveCell(vm.drag, next) };
}

export function clearToast(vm: ViewModel): ViewModel {
  return vm.toast === null ? vm : { ...vm, toast: null };
}
