/**
 * Wire types for the session server's WebSocket JSON protocol.
 *
 * Every message carries `v` (protocol version, 1) and `sid` (session id).
 * Unknown message types and unknown fields are ignored on receipt; missing
 * or mistyped required fields make parseServerMessage return null so a
 * broken frame can never corrupt the view model.
 */

export const PROTOCOL_VERSION = 1;

export interface Box {
  center_x: number;
  center_y: number;
  extent_x: number;
  extent_y: number;
  height: number;
  label: string;
}

export interface StepSpec {
  index: number;
  type_id: string;
  x: number;
  y: number;
  layer: number;
  rot: number;
}

export type PartStatus = "in_supply" | "in_hand" | "placed";

export interface PartSpec {
  id: number;
  type_id: string;
  status: PartStatus;
  x: number;
  y: number;
  yaw: number;
}

export interface SnapshotMsg {
  type: "SNAPSHOT";
  sid: string;
  plan: string;
  mode: string;
  tick: number;
  frame: number;
  done: boolean;
  current_step: number | null;
  step_status: string[];
  steps: StepSpec[];
  parts: PartSpec[];
}

export interface HighlightsMsg {
  type: "HIGHLIGHTS";
  sid: string;
  tick: number;
  label: string;
  source_box: Box | null;
  target_box: Box;
  layer_geometry: Box[];
}

export interface EventMsg {
  type: "EVENT";
  sid: string;
  kind: string;
  step_index: number | null;
  frame: number;
}

export interface ErrorMsg {
  type: "ERROR";
  sid: string;
  code: string;
  message: string;
}

export type ServerMessage = SnapshotMsg | HighlightsMsg | EventMsg | ErrorMsg;

export type Role = "display" | "actor" | "detector";

export interface PickAction {
  action: "pick";
  id: number;
}

export interface PlaceAction {
  action: "place";
  id: number;
  x: number;
  y: number;
  layer: number;
  rot: number;
}

export interface RemoveAction {
  action: "remove";
  id: number;
}

export type Action = PickAction | PlaceAction | RemoveAction;

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function num(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function optNum(value: unknown): value is number | null {
  return value === null || num(value);
}

function str(value: unknown): value is string {
  return typeof value === "string";
}

function parseBox(value: unknown): Box | null {
  if (!isRecord(value)) return null;
  const { center_x, center_y, extent_x, extent_y, height, label } = value;
  if (!num(center_x) || !num(center_y) || !num(extent_x) || !num(extent_y)) return null;
  if (!num(height) || !str(label)) return null;
  return { center_x, center_y, extent_x, extent_y, height, label };
}

function parseSnapshot(m: Record<string, unknown>, sid: string): SnapshotMsg | null {
  if (!str(m.plan) || !str(m.mode) || !num(m.tick) || typeof m.done !== "boolean") return null;
  if (!optNum(m.current_step) || !Array.isArray(m.step_status)) return null;
  if (!Array.isArray(m.steps) || !Array.isArray(m.parts)) return null;
  const steps: StepSpec[] = [];
  for (const raw of m.steps) {
    if (!isRecord(raw)) return null;
    const { index, type_id, x, y, layer, rot } = raw;
    if (!num(index) || !str(type_id) || !num(x) || !num(y) || !num(layer) || !num(rot)) return null;
    steps.push({ index, type_id, x, y, layer, rot });
  }
  const parts: PartSpec[] = [];
  for (const raw of m.parts) {
    if (!isRecord(raw)) return null;
    const { id, type_id, status, x, y, yaw } = raw;
    if (!num(id) || !str(type_id) || !num(x) || !num(y) || !num(yaw)) return null;
    if (status !== "in_supply" && status !== "in_hand" && status !== "placed") return null;
    parts.push({ id, type_id, status, x, y, yaw });
  }
  return {
    type: "SNAPSHOT",
    sid,
    plan: m.plan,
    mode: m.mode,
    tick: m.tick,
    frame: num(m.frame) ? m.frame : -1,
    done: m.done,
    current_step: m.current_step,
    step_status: m.step_status.filter(str),
    steps,
    parts,
  };
}

/** Decode one server frame; null when it is not a well-formed known message. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!isRecord(data) || data.v !== PROTOCOL_VERSION || !str(data.sid) || !str(data.type)) {
    return null;
  }
  const sid = data.sid;
  switch (data.type) {
    case "SNAPSHOT":
      return parseSnapshot(data, sid);
    case "HIGHLIGHTS": {
      const target = parseBox(data.target_box);
      const source = data.source_box === null ? null : parseBox(data.source_box);
      if (!num(data.tick) || !str(data.label) || target === null) return null;
      if (!Array.isArray(data.layer_geometry)) return null;
      const layer: Box[] = [];
      for (const raw of data.layer_geometry) {
        const box = parseBox(raw);
        if (box === null) return null;
        layer.push(box);
      }
      if (data.source_box !== null && source === null) return null;
      return {
        type: "HIGHLIGHTS",
        sid,
        tick: data.tick,
        label: data.label,
        source_box: source,
        target_box: target,
        layer_geometry: layer,
      };
    }
    case "EVENT":
      if (!str(data.kind) || !optNum(data.step_index) || !num(data.frame)) return null;
      return { type: "EVENT", sid, kind: data.kind, step_index: data.step_index, frame: data.frame };
    case "ERROR":
      if (!str(data.code) || !str(data.message)) return null;
      return { type: "ERROR", sid, code: data.code, message: data.message };
    default:
      return null;
  }
}

export function helloFrame(role: Role): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, sid: "", type: "HELLO", role });
}

export function actionFrame(sid: string, action: Action): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, sid, type: "ACTION", ...action });
}
