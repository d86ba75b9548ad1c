/** Canvas painter. Scenes arrive in abstract 960x540 coordinates and are
 * scaled uniformly to the viewport; no layout decisions happen here. */

import type { Scene } from "./interpolate.js";

export const ABSTRACT_W = 960;
export const ABSTRACT_H = 540;

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const canvas = ctx.canvas;
  const scale = Math.min(canvas.width / ABSTRACT_W, canvas.height / ABSTRACT_H);
  const ox = (canvas.width - ABSTRACT_W * scale) / 2;
  const oy = (canvas.height - ABSTRACT_H * scale) / 2;

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.save();
  ctx.translate(ox, oy);
  ctx.scale(scale, scale);

  if (scene.axis) {
    drawAxis(ctx, scene);
  }
  for (const unit of scene.units) {
    if (unit.opacity <= 0) continue;
    ctx.globalAlpha = unit.opacity;
    ctx.beginPath();
    ctx.arc(unit.x, unit.y, Math.max(0.1, unit.radius), 0, Math.PI * 2);
    ctx.fillStyle = unit.fill;
    ctx.fill();
    if (unit.strokeWidth > 0) {
      ctx.lineWidth = unit.strokeWidth;
      ctx.strokeStyle = "#6d4c00";
      ctx.stroke();
    }
  }
  ctx.globalAlpha = 1;

  drawAnnotations(ctx, scene);
  ctx.restore();
}

function drawAxis(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const axis = scene.axis;
  if (!axis) return;
  ctx.globalAlpha = 1;
  ctx.strokeStyle = "#c5ccd3";
  ctx.fillStyle = "#5a6570";
  ctx.lineWidth = 1;
  ctx.font = "13px system-ui, sans-serif";
  ctx.textAlign = "center";
  const margin = 48;
  const ticks = axis.ticks;
  if (axis.channel === "x") {
    const y = ABSTRACT_H - 18;
    ctx.beginPath();
    ctx.moveTo(margin, y - 14);
    ctx.lineTo(ABSTRACT_W - margin, y - 14);
    ctx.stroke();
    const extent = ABSTRACT_W - 2 * margin;
    ticks.forEach((tick, i) => {
      const x = margin + ((i + 0.5) * extent) / Math.max(1, ticks.length);
      ctx.fillText(tick, x, y);
    });
    ctx.fillText(axis.attribute, ABSTRACT_W / 2, y + 16);
  } else {
    const x = 30;
    const extent = ABSTRACT_H - 2 * margin;
    ctx.textAlign = "left";
    ticks.forEach((tick, i) => {
      const y = margin + ((i + 0.5) * extent) / Math.max(1, ticks.length);
      ctx.fillText(tick, x, y);
    });
    ctx.save();
    ctx.translate(12, ABSTRACT_H / 2);
    ctx.rotate(-Math.PI / 2);
    ctx.textAlign = "center";
    ctx.fillText(axis.attribute, 0, 0);
    ctx.restore();
  }
}

function drawAnnotations(ctx: CanvasRenderingContext2D, scene: Scene): void {
  const byId = new Map(scene.units.map((u) => [u.id, u]));
  ctx.font = "13px system-ui, sans-serif";
  ctx.textAlign = "center";
  for (const note of scene.annotations) {
    if (note.opacity <= 0) continue;
    const targets = note.targets
      .map((id) => byId.get(id))
      .filter((u) => u !== undefined);
    if (!targets.length) continue;
    const cx = targets.reduce((acc, u) => acc + u!.x, 0) / targets.length;
    const top = Math.min(...targets.map((u) => u!.y - u!.radius));
    ctx.globalAlpha = note.opacity;
    const width = ctx.measureText(note.text).width + 16;
    const x = Math.min(Math.max(cx, width / 2 + 4), ABSTRACT_W - width / 2 - 4);
    const y = Math.max(top - 26, 18);
    ctx.fillStyle = "#2d3741";
    roundedRect(ctx, x - width / 2, y - 14, width, 22, 5);
    ctx.fill();
    ctx.fillStyle = "#ffffff";
    ctx.fillText(note.text, x, y + 2);
  }
  ctx.globalAlpha = 1;
}

function roundedRect(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  w: number,
  h: number,
  r: number,
): void {
  ctx.beginPath();
  ctx.moveTo(x + r, y);
  ctx.arcTo(x + w, y, x + w, y + h, r);
  ctx.arcTo(x + w, y + h, x, y + h, r);
  ctx.arcTo(x, y + h, x, y, r);
  ctx.arcTo(x, y, x + w, y, r);
  ctx.closePath();
}
