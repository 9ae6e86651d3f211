/**
 * Replays a recorded broadcast stream (bundled egg plan, perfect script,
 * zero noise) through the view model and renderer, asserting on the
 * captured draw calls: the overlay must show exactly what the latest
 * HIGHLIGHTS message carries, and nothing from any other layer.
 */

import { readFileSync } from "node:fs";

import { beforeAll, describe, expect, it } from "vitest";

import { cellCenter, dividerX, metersToPx, worldToCanvas } from "../src/layout.js";
import type { Box, HighlightsMsg, ServerMessage } from "../src/protocol.js";
import { parseServerMessage } from "../src/protocol.js";
import { render, type Draw2D } from "../src/render.js";
import { applyServerMessage, initialViewModel, type ViewModel } from "../src/viewmodel.js";

interface Rect {
  op: "fill" | "stroke";
  x: number;
  y: number;
  w: number;
  h: number;
}

interface Text {
  text: string;
  x: number;
  y: number;
}

class RecordingDraw implements Draw2D {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 0;
  font = "";
  globalAlpha = 1;
  rects: Rect[] = [];
  texts: Text[] = [];

  fillRect(x: number, y: number, w: number, h: number): void {
    this.rects.push({ op: "fill", x, y, w, h });
  }

  strokeRect(x: number, y: number, w: number, h: number): void {
    this.rects.push({ op: "stroke", x, y, w, h });
  }

  fillText(text: string, x: number, y: number): void {
    this.texts.push({ text, x, y });
  }
}

function draw(vm: ViewModel): RecordingDraw {
  const ctx = new RecordingDraw();
  render(ctx, vm);
  return ctx;
}

function expectedRect(box: Box): { x: number; y: number; w: number; h: number } {
  const top = worldToCanvas(box.center_x - box.extent_x, box.center_y - box.extent_y);
  return { x: top.x, y: top.y, w: metersToPx(2 * box.extent_x), h: metersToPx(2 * box.extent_y) };
}

/** Brick-sized rectangles in the build half: the overlay under test. */
function overlayRects(ctx: RecordingDraw): Rect[] {
  const split = dividerX();
  return ctx.rects.filter((r) => r.x < split && r.w < 100 && r.h < 100);
}

function sameRect(a: Rect, b: { x: number; y: number; w: number; h: number }): boolean {
  const eps = 1e-6;
  return (
    Math.abs(a.x - b.x) < eps &&
    Math.abs(a.y - b.y) < eps &&
    Math.abs(a.w - b.w) < eps &&
    Math.abs(a.h - b.h) < eps
  );
}

let messages: ServerMessage[] = [];

beforeAll(() => {
  const raw = readFileSync(new URL("./fixtures/egg_session.ndjson", import.meta.url), "utf8");
  messages = raw
    .trim()
    .split("\n")
    .map((line) => {
      const msg = parseServerMessage(line);
      expect(msg, line.slice(0, 80)).not.toBeNull();
      return msg!;
    });
});

describe("recorded egg session", () => {
  it("completes all 34 steps in order", () => {
    const completed = messages
      .filter((m) => m.type === "EVENT" && m.kind === "STEP_COMPLETED")
      .map((m) => (m.type === "EVENT" ? m.step_index : null));
    expect(completed).toEqual([...Array(34).keys()]);
  });

  it("shows step 0's target box and label on connect", () => {
    let vm = initialViewModel();
    vm = applyServerMessage(vm, messages[0]!); // HELLO's snapshot
    expect(vm.currentStep).toBe(0);
    const firstHl = messages.find((m) => m.type === "HIGHLIGHTS") as HighlightsMsg;
    for (const msg of messages) {
      vm = applyServerMessage(vm, msg);
      if (msg === firstHl) break;
    }

    const step = vm.snapshot!.steps[0]!;
    const center = cellCenter({ x: step.x, y: step.y }, step.type_id, step.rot);
    expect(firstHl.target_box.center_x).toBeCloseTo(center.x, 9);
    expect(firstHl.target_box.center_y).toBeCloseTo(center.y, 9);
    expect(firstHl.label).toBe(step.type_id);

    const ctx = draw(vm);
    const target = expectedRect(firstHl.target_box);
    expect(ctx.rects.some((r) => r.op === "stroke" && sameRect(r, target))).toBe(true);
    const label = ctx.texts.find((t) => Math.abs(t.x - target.x) < 1e-6 && t.y < target.y);
    expect(label?.text).toBe(step.type_id);
    expect(ctx.texts.some((t) => t.text.startsWith("Step 1/34: place 2x6"))).toBe(true);
  });

  it("draws the source box only when the message carries one", () => {
    let vm = initialViewModel();
    const firstHl = messages.find((m) => m.type === "HIGHLIGHTS") as HighlightsMsg;
    for (const msg of messages) {
      vm = applyServerMessage(vm, msg);
      if (msg === firstHl) break;
    }
    const split = dividerX();
    const withSource = draw(vm);
    expect(firstHl.source_box).not.toBeNull();
    expect(withSource.rects.filter((r) => r.op === "stroke" && r.x >= split)).toHaveLength(1);

    vm = applyServerMessage(vm, { ...firstHl, source_box: null });
    const withoutSource = draw(vm);
    expect(withoutSource.rects.filter((r) => r.op === "stroke" && r.x >= split)).toHaveLength(0);
    expect(withoutSource.rects.some((r) => r.op === "stroke" && sameRect(r, expectedRect(firstHl.target_box)))).toBe(
      true,
    );
  });

  it("renders only the latest HIGHLIGHTS geometry in the build half", () => {
    let vm = initialViewModel();
    const checkedLayers = new Set<number>();
    for (const msg of messages) {
      vm = applyServerMessage(vm, msg);
      if (msg.type !== "HIGHLIGHTS" || vm.currentStep === null) continue;
      const steps = vm.snapshot!.steps;
      const layer = steps[vm.currentStep]!.layer;
      checkedLayers.add(layer);

      const drawn = overlayRects(draw(vm));
      const allowed = [msg.target_box, ...msg.layer_geometry].map(expectedRect);
      for (const rect of drawn) {
        expect(
          allowed.some((a) => sameRect(rect, a)),
          `stray box at layer ${layer}, tick ${msg.tick}`,
        ).toBe(true);
      }
      // target fill + target stroke + one fill per same-layer placement
      expect(drawn).toHaveLength(2 + msg.layer_geometry.length);

      // The recorded geometry is exactly the reached placements of the
      // active layer: no other layer ever leaks into the overlay.
      const key = (x: number, y: number) => `${x.toFixed(6)},${y.toFixed(6)}`;
      const expected = steps
        .slice(0, vm.currentStep + 1)
        .filter((s) => s.layer === layer)
        .map((s) => {
          const c = cellCenter({ x: s.x, y: s.y }, s.type_id, s.rot);
          return key(c.x, c.y);
        })
        .sort();
      const got = msg.layer_geometry.map((b) => key(b.center_x, b.center_y)).sort();
      expect(got, `tick ${msg.tick}`).toEqual(expected);
    }
    // The sweep exercised every layer of the sculpture, not just layer 0.
    expect([...checkedLayers].sort()).toEqual([0, 1, 2, 3, 4, 5]);
  });
});
