/**
 * Detection overlays: red boxes for moths with their top species
 * prediction, blue boxes for non-moths.
 */

import type { Detection } from "./types.js";

export const MOTH_COLOR = "#e53935";
export const NON_MOTH_COLOR = "#1e88e5";

export interface DrawingContext {
  canvas: { width: number; height: number };
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  measureText(text: string): { width: number };
}

export function detectionLabel(detection: Detection): string {
  if (detection.binary === null) return "unclassified";
  const [label, score] = detection.binary;
  if (label === "moth" && detection.species && detection.species.length > 0) {
    const [taxon, probability] = detection.species[0];
    return `taxon ${taxon} ${(probability * 100).toFixed(0)}%`;
  }
  return `${label} ${(score * 100).toFixed(0)}%`;
}

export function drawDetections(
  ctx: DrawingContext,
  detections: Detection[],
  scale = 1,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.lineWidth = 2;
  ctx.font = "12px sans-serif";
  for (const detection of detections) {
    const [x0, y0, x1, y1] = detection.box;
    const isMoth = detection.binary?.[0] === "moth";
    const color = isMoth ? MOTH_COLOR : NON_MOTH_COLOR;
    ctx.strokeStyle = color;
    ctx.strokeRect(x0 * scale, y0 * scale, (x1 - x0) * scale, (y1 - y0) * scale);

    const label = detectionLabel(detection);
    const width = ctx.measureText(label).width + 6;
    ctx.fillStyle = color;
    ctx.fillRect(x0 * scale, y0 * scale - 14, width, 14);
    ctx.fillStyle = "#ffffff";
    ctx.fillText(label, x0 * scale + 3, y0 * scale - 3);
  }
}
