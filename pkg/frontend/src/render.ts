/**
 * Canvas renderer: a pure function of the view model.
 *
 * Build-area geometry is drawn exclusively from the latest HIGHLIGHTS
 * message (already filtered to the active layer by the server), so no
 * stale or off-layer boxes can ever appear.  The snapshot contributes
 * only the supply half and the textual instruction.
 */

import {
  CANVAS_HEIGHT,
  CANVAS_WIDTH,
  cellCenter,
  dividerX,
  metersToPx,
  partExtents,
  rotatedFootprint,
  worldToCanvas,
  PITCH_M,
} from "./layout.js";
import type { Box } from "./protocol.js";
import { dropLayer, instructedStep, type ViewModel } from "./viewmodel.js";

/** The slice of CanvasRenderingContext2D the renderer uses.  The style
 * properties take the DOM union type so the real context is assignable;
 * the renderer itself only ever writes color strings. */
export interface Draw2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

const COLORS = {
  background: "#1c1f26",
  buildHalf: "#232732",
  divider: "#3a4152",
  text: "#e8eaf0",
  dim: "#9aa3b5",
  supplyPart: "#5a86c5",
  heldPart: "#7fa8e0",
  placedGeometry: "#3f7d5a",
  target: "#f2c14e",
  source: "#6fd08c",
  ghostOk: "#f2c14e",
  error: "#d06060",
};

function boxRect(box: Box): { x: number; y: number; w: number; h: number } {
  const top = worldToCanvas(box.center_x - box.extent_x, box.center_y - box.extent_y);
  return {
    x: top.x,
    y: top.y,
    w: metersToPx(2 * box.extent_x),
    h: metersToPx(2 * box.extent_y),
  };
}

function strokeBox(ctx: Draw2D, box: Box, color: string, width: number): void {
  const r = boxRect(box);
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.strokeRect(r.x, r.y, r.w, r.h);
}

function fillBox(ctx: Draw2D, box: Box, color: string, alpha: number): void {
  const r = boxRect(box);
  ctx.globalAlpha = alpha;
  ctx.fillStyle = color;
  ctx.fillRect(r.x, r.y, r.w, r.h);
  ctx.globalAlpha = 1;
}

function labelBox(ctx: Draw2D, box: Box, text: string, color: string): void {
  const r = boxRect(box);
  ctx.fillStyle = color;
  ctx.font = "13px sans-serif";
  ctx.fillText(text, r.x, r.y - 4);
}

function drawFrame(ctx: Draw2D): void {
  ctx.globalAlpha = 1;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, CANVAS_WIDTH, CANVAS_HEIGHT);
  const split = dividerX();
  ctx.fillStyle = COLORS.buildHalf;
  ctx.fillRect(0, 0, split, CANVAS_HEIGHT);
  ctx.fillStyle = COLORS.divider;
  ctx.fillRect(split - 1, 0, 2, CANVAS_HEIGHT);
  ctx.fillStyle = COLORS.dim;
  ctx.font = "12px sans-serif";
  ctx.fillText("assembly", 12, CANVAS_HEIGHT - 10);
  ctx.fillText("supply", split + 12, CANVAS_HEIGHT - 10);
}

function drawSupply(ctx: Draw2D, vm: ViewModel): void {
  if (vm.snapshot === null) return;
  for (const part of vm.snapshot.parts) {
    if (part.status !== "in_supply") continue;
    const { ex, ey } = partExtents(part.type_id, part.yaw);
    const top = worldToCanvas(part.x - ex, part.y - ey);
    ctx.fillStyle = COLORS.supplyPart;
    ctx.fillRect(top.x, top.y, metersToPx(2 * ex), metersToPx(2 * ey));
    ctx.fillStyle = COLORS.dim;
    ctx.font = "10px sans-serif";
    ctx.fillText(part.type_id, top.x, top.y + metersToPx(2 * ey) + 10);
  }
}

function drawHighlights(ctx: Draw2D, vm: ViewModel): void {
  const hl = vm.highlights;
  if (hl === null) return;
  for (const box of hl.layer_geometry) {
    fillBox(ctx, box, COLORS.placedGeometry, 0.55);
  }
  fillBox(ctx, hl.target_box, COLORS.target, 0.2);
  strokeBox(ctx, hl.target_box, COLORS.target, 2);
  labelBox(ctx, hl.target_box, hl.label, COLORS.target);
  if (hl.source_box !== null) {
    strokeBox(ctx, hl.source_box, COLORS.source, 2);
    labelBox(ctx, hl.source_box, hl.label, COLORS.source);
  }
}

function drawDrag(ctx: Draw2D, vm: ViewModel): void {
  const drag = vm.drag;
  if (drag === null) return;
  const step = instructedStep(vm);
  const rot = step?.rot ?? 0;
  const { w, d } = rotatedFootprint(drag.typeId, rot);
  if (drag.cell !== null) {
    const center = cellCenter(drag.cell, drag.typeId, rot);
    const top = worldToCanvas(center.x - (w * PITCH_M) / 2, center.y - (d * PITCH_M) / 2);
    ctx.strokeStyle = COLORS.ghostOk;
    ctx.lineWidth = 1;
    ctx.strokeRect(top.x, top.y, metersToPx(w * PITCH_M), metersToPx(d * PITCH_M));
  }
  const { ex, ey } = partExtents(drag.typeId, 0);
  const top = worldToCanvas(drag.worldX - ex, drag.worldY - ey);
  ctx.globalAlpha = 0.8;
  ctx.fillStyle = COLORS.heldPart;
  ctx.fillRect(top.x, top.y, metersToPx(2 * ex), metersToPx(2 * ey));
  ctx.globalAlpha = 1;
}

function instructionLine(vm: ViewModel): string {
  if (vm.done) return "Assembly complete";
  const step = instructedStep(vm);
  if (step === null || vm.snapshot === null) return "Waiting for session…";
  const n = vm.snapshot.steps.length;
  return (
    `Step ${step.index + 1}/${n}: place ${step.type_id} at (${step.x}, ${step.y})` +
    ` layer ${step.layer}, rot ${step.rot}°`
  );
}

function drawHud(ctx: Draw2D, vm: ViewModel): void {
  ctx.fillStyle = COLORS.text;
  ctx.font = "15px sans-serif";
  ctx.fillText(instructionLine(vm), 12, 22);
  if (vm.layerOverride !== null) {
    ctx.fillStyle = COLORS.dim;
    ctx.font = "12px sans-serif";
    ctx.fillText(`drop layer override: ${dropLayer(vm)}`, 12, 40);
  }
  const recent = vm.events.slice(-6);
  ctx.font = "11px sans-serif";
  recent.forEach((e, i) => {
    ctx.fillStyle = COLORS.dim;
    const step = e.step_index === null ? "" : ` ${e.step_index}`;
    ctx.fillText(`${e.kind}${step} @${e.frame}`, 12, CANVAS_HEIGHT - 30 - (recent.length - 1 - i) * 14);
  });
  if (vm.connection !== "open") {
    ctx.fillStyle = COLORS.error;
    ctx.font = "14px sans-serif";
    ctx.fillText(
      vm.connection === "connecting" ? "connecting…" : `connection ${vm.connection}, retrying…`,
      CANVAS_WIDTH / 2 - 80,
      22,
    );
  }
  if (vm.toast !== null) {
    ctx.fillStyle = COLORS.error;
    ctx.font = "13px sans-serif";
    ctx.fillText(vm.toast, CANVAS_WIDTH / 2 - 120, 44);
  }
}

export function render(ctx: Draw2D, vm: ViewModel): void {
  drawFrame(ctx);
  drawSupply(ctx, vm);
  drawHighlights(ctx, vm);
  drawDrag(ctx, vm);
  drawHud(ctx, vm);
}
