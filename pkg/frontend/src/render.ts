// Canvas rendering.  The layered slice view is the exact one: each of the 9
// vertical levels drawn as its own 11x11 top-down grid so a cell can always
// be read off unambiguously.  The isometric composite alongside it is there
// for shape recognition only.

import { COLOR_HEX } from "./actions.js";
import { ZONE_X, ZONE_Y, ZONE_Z, type Grid, type Pose } from "./state.js";

export const CELL = 14; // px per cell in a slice
export const SLICE_GAP = 10;
export const SLICE_HEADER = 16;
export const SLICE_COLS = 3;

export const ISO_TILE_W = 24;
export const ISO_TILE_H = 12;
export const ISO_RISE = 14; // px a cell climbs per y level

export interface SliceOrigin {
  px: number;
  py: number;
}

/** Top-left pixel of layer y's slice in the 3x3 slice sheet. */
export function sliceOrigin(y: number): SliceOrigin {
  const col = y % SLICE_COLS;
  const row = Math.floor(y / SLICE_COLS);
  const w = ZONE_X * CELL + SLICE_GAP;
  const h = ZONE_Z * CELL + SLICE_HEADER + SLICE_GAP;
  return { px: col * w, py: row * h + SLICE_HEADER };
}

export function layersCanvasSize(): { width: number; height: number } {
  const rows = Math.ceil(ZONE_Y / SLICE_COLS);
  return {
    width: SLICE_COLS * (ZONE_X * CELL + SLICE_GAP) - SLICE_GAP,
    height: rows * (ZONE_Z * CELL + SLICE_HEADER + SLICE_GAP) - SLICE_GAP,
  };
}

/** Screen position of cell (x, y, z)'s top face center in the iso view. */
export function isoProject(
  x: number,
  y: number,
  z: number,
  originX: number,
  originY: number,
): { px: number; py: number } {
  return {
    px: originX + ((x - z) * ISO_TILE_W) / 2,
    py: originY + ((x + z) * ISO_TILE_H) / 2 - y * ISO_RISE,
  };
}

export function isoCanvasSize(): { width: number; height: number } {
  const width = (ZONE_X + ZONE_Z) * (ISO_TILE_W / 2) + 20;
  const height = (ZONE_X + ZONE_Z) * (ISO_TILE_H / 2) + ZONE_Y * ISO_RISE + 30;
  return { width, height };
}

function shade(hex: string, factor: number): string {
  const n = parseInt(hex.slice(1), 16);
  const r = Math.round(Math.min(255, ((n >> 16) & 0xff) * factor));
  const g = Math.round(Math.min(255, ((n >> 8) & 0xff) * factor));
  const b = Math.round(Math.min(255, (n & 0xff) * factor));
  return `rgb(${r},${g},${b})`;
}

export interface DrawOptions {
  pose?: Pose | null;
  highlight?: Set<string>; // "x,y,z" keys of match-counted cells
}

export function drawLayers(ctx: CanvasRenderingContext2D, grid: Grid, opts: DrawOptions = {}): void {
  const { width, height } = layersCanvasSize();
  ctx.clearRect(0, 0, width, height);
  ctx.font = "11px sans-serif";
  ctx.textBaseline = "alphabetic";

  for (let y = 0; y < ZONE_Y; y++) {
    const { px, py } = sliceOrigin(y);
    ctx.fillStyle = "#9aa3b2";
    ctx.fillText(`y=${y}`, px, py - 4);
    ctx.fillStyle = "#12151c";
    ctx.fillRect(px, py, ZONE_X * CELL, ZONE_Z * CELL);
    ctx.strokeStyle = "#272c38";
    ctx.lineWidth = 1;
    for (let i = 0; i <= ZONE_X; i++) {
      ctx.beginPath();
      ctx.moveTo(px + i * CELL + 0.5, py);
      ctx.lineTo(px + i * CELL + 0.5, py + ZONE_Z * CELL);
      ctx.stroke();
    }
    for (let j = 0; j <= ZONE_Z; j++) {
      ctx.beginPath();
      ctx.moveTo(px, py + j * CELL + 0.5);
      ctx.lineTo(px + ZONE_X * CELL, py + j * CELL + 0.5);
      ctx.stroke();
    }
    for (let z = 0; z < ZONE_Z; z++) {
      for (let x = 0; x < ZONE_X; x++) {
        const color = grid[y][z][x];
        if (color === 0) continue;
        ctx.fillStyle = COLOR_HEX[color] ?? "#888";
        ctx.fillRect(px + x * CELL + 1, py + z * CELL + 1, CELL - 2, CELL - 2);
        if (opts.highlight?.has(`${x},${y},${z}`)) {
          ctx.strokeStyle = "#ffffff";
          ctx.lineWidth = 2;
          ctx.strokeRect(px + x * CELL + 2, py + z * CELL + 2, CELL - 4, CELL - 4);
        }
      }
    }
    if (opts.pose && Math.floor(opts.pose.y) === y) {
      const ax = px + opts.pose.x * CELL + CELL / 2;
      const az = py + opts.pose.z * CELL + CELL / 2;
      ctx.fillStyle = "#f4f6fa";
      ctx.beginPath();
      ctx.arc(ax, az, 4, 0, Math.PI * 2);
      ctx.fill();
      // yaw 0 looks along +z (down the slice), 90 along +x (right)
      const rad = (opts.pose.yaw * Math.PI) / 180;
      ctx.strokeStyle = "#f4f6fa";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(ax, az);
      ctx.lineTo(ax + Math.sin(rad) * 9, az + Math.cos(rad) * 9);
      ctx.stroke();
    }
  }
}

export function drawIso(ctx: CanvasRenderingContext2D, grid: Grid, opts: DrawOptions = {}): void {
  const { width, height } = isoCanvasSize();
  ctx.clearRect(0, 0, width, height);
  const originX = ZONE_Z * (ISO_TILE_W / 2) + 10;
  const originY = ZONE_Y * ISO_RISE + 10;

  // Floor outline.
  ctx.strokeStyle = "#2c3242";
  ctx.lineWidth = 1;
  for (let z = 0; z <= ZONE_Z; z++) {
    const a = isoProject(0, 0, z, originX, originY);
    const b = isoProject(ZONE_X, 0, z, originX, originY);
    ctx.beginPath();
    ctx.moveTo(a.px, a.py + ISO_TILE_H / 2);
    ctx.lineTo(b.px, b.py + ISO_TILE_H / 2);
    ctx.stroke();
  }
  for (let x = 0; x <= ZONE_X; x++) {
    const a = isoProject(x, 0, 0, originX, originY);
    const b = isoProject(x, 0, ZONE_Z, originX, originY);
    ctx.beginPath();
    ctx.moveTo(a.px, a.py + ISO_TILE_H / 2);
    ctx.lineTo(b.px, b.py + ISO_TILE_H / 2);
    ctx.stroke();
  }

  // Painter's order: back-to-front scanlines, bottom-up within each.
  for (let s = 0; s <= ZONE_X + ZONE_Z - 2; s++) {
    for (let y = 0; y < ZONE_Y; y++) {
      for (let x = Math.max(0, s - ZONE_Z + 1); x <= Math.min(ZONE_X - 1, s); x++) {
        const z = s - x;
        const color = grid[y][z][x];
        if (color === 0) continue;
        const hex = COLOR_HEX[color] ?? "#888888";
        const { px, py } = isoProject(x, y, z, originX, originY);
        const hw = ISO_TILE_W / 2;
        const hh = ISO_TILE_H / 2;
        const lit = opts.highlight?.has(`${x},${y},${z}`);

        // left face
        ctx.fillStyle = shade(hex, 0.55);
        ctx.beginPath();
        ctx.moveTo(px - hw, py);
        ctx.lineTo(px, py + hh);
        ctx.lineTo(px, py + hh + ISO_RISE);
        ctx.lineTo(px - hw, py + ISO_RISE);
        ctx.closePath();
        ctx.fill();
        // right face
        ctx.fillStyle = shade(hex, 0.75);
        ctx.beginPath();
        ctx.moveTo(px + hw, py);
        ctx.lineTo(px, py + hh);
        ctx.lineTo(px, py + hh + ISO_RISE);
        ctx.lineTo(px + hw, py + ISO_RISE);
        ctx.closePath();
        ctx.fill();
        // top face
        ctx.fillStyle = lit ? shade(hex, 1.35) : hex;
        ctx.beginPath();
        ctx.moveTo(px, py - hh);
        ctx.lineTo(px + hw, py);
        ctx.lineTo(px, py + hh);
        ctx.lineTo(px - hw, py);
        ctx.closePath();
        ctx.fill();
        if (lit) {
          ctx.strokeStyle = "#ffffff";
          ctx.lineWidth = 1.5;
          ctx.stroke();
        }
      }
    }
  }
}
