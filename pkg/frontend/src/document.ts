/** Editor document: a base map plus an ordered stack of vector edits.
 *
 * Edits are stored as vector operations and rasterized only at flatten
 * time, so undo/redo restores prior flattened maps bit-exactly. Every
 * rasterizer writes whole class indices (hard edges, no anti-aliasing):
 * a flattened pixel is always a palette member.
 */

import { IndexRaster, cloneRaster, makeRaster } from "./raster.js";

export interface RectEdit {
  kind: "rect";
  classIndex: number;
  x0: number;
  y0: number;
  x1: number; // exclusive
  y1: number; // exclusive
}

export interface PolygonEdit {
  kind: "polygon";
  classIndex: number;
  /** Closed automatically; vertices in pixel coordinates. */
  points: Array<[number, number]>;
}

export interface BrushEdit {
  kind: "brush";
  classIndex: number;
  radius: number;
  /** Polyline of stroke sample points. */
  points: Array<[number, number]>;
}

export type EditOp = RectEdit | PolygonEdit | BrushEdit;

export interface ViewState {
  zoom: number;
  showMask: boolean;
  showHeatmap: boolean;
}

function clampInt(v: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, Math.round(v)));
}

function paintRect(target: IndexRaster, op: RectEdit): void {
  const x0 = clampInt(Math.min(op.x0, op.x1), 0, target.width);
  const x1 = clampInt(Math.max(op.x0, op.x1), 0, target.width);
  const y0 = clampInt(Math.min(op.y0, op.y1), 0, target.height);
  const y1 = clampInt(Math.max(op.y0, op.y1), 0, target.height);
  for (let y = y0; y < y1; y++) {
    target.data.fill(op.classIndex, y * target.width + x0, y * target.width + x1);
  }
}

/** Even-odd scanline fill; a pixel belongs to the polygon when its center
 * (x + 0.5, y + 0.5) is inside. */
function paintPolygon(target: IndexRaster, op: PolygonEdit): void {
  const pts = op.points;
  if (pts.length < 3) return;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [, y] of pts) {
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  const yStart = Math.max(0, Math.floor(minY));
  const yEnd = Math.min(target.height - 1, Math.ceil(maxY));
  for (let y = yStart; y <= yEnd; y++) {
    const cy = y + 0.5;
    const xs: number[] = [];
    for (let i = 0; i < pts.length; i++) {
      const [ax, ay] = pts[i];
      const [bx, by] = pts[(i + 1) % pts.length];
      if (ay === by) continue;
      if ((cy >= ay && cy < by) || (cy >= by && cy < ay)) {
        xs.push(ax + ((cy - ay) / (by - ay)) * (bx - ax));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const x0 = Math.max(0, Math.ceil(xs[k] - 0.5));
      const x1 = Math.min(target.width - 1, Math.floor(xs[k + 1] - 0.5 - 1e-9));
      if (x1 >= x0) {
        target.data.fill(op.classIndex, y * target.width + x0, y * target.width + x1 + 1);
      }
    }
  }
}

function paintDisc(target: IndexRaster, cx: number, cy: number, radius: number,
                   classIndex: number): void {
  const r2 = radius * radius;
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(target.height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(target.width - 1, Math.ceil(cx + radius));
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        target.data[y * target.width + x] = classIndex;
      }
    }
  }
}

function paintBrush(target: IndexRaster, op: BrushEdit): void {
  if (op.points.length === 0) return;
  let [px, py] = op.points[0];
  paintDisc(target, px, py, op.radius, op.classIndex);
  for (let i = 1; i < op.points.length; i++) {
    const [qx, qy] = op.points[i];
    const dist = Math.hypot(qx - px, qy - py);
    const steps = Math.max(1, Math.ceil(dist));
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      paintDisc(target, px + (qx - px) * t, py + (qy - py) * t, op.radius, op.classIndex);
    }
    [px, py] = [qx, qy];
  }
}

export class EditorDocument {
  readonly baseMap: IndexRaster;
  sampleId: string | null = null;
  checkpointId: string | null = null;
  view: ViewState = { zoom: 1, showMask: false, showHeatmap: false };

  private layers: EditOp[] = [];
  private redoStack: EditOp[] = [];

  constructor(baseMap: IndexRaster) {
    this.baseMap = cloneRaster(baseMap);
  }

  get editCount(): number {
    return this.layers.length;
  }

  get edits(): readonly EditOp[] {
    return this.layers;
  }

  applyEdit(op: EditOp): void {
    if (op.classIndex < 0 || !Number.isInteger(op.classIndex)) {
      throw new Error(`invalid palette class ${op.classIndex}`);
    }
    this.layers.push(op);
    this.redoStack = [];
  }

  undo(): boolean {
    const op = this.layers.pop();
    if (op === undefined) return false;
    this.redoStack.push(op);
    return true;
  }

  redo(): boolean {
    const op = this.redoStack.pop();
    if (op === undefined) return false;
    this.layers.push(op);
    return true;
  }

  clearEdits(): void {
    this.layers = [];
    this.redoStack = [];
  }

  /** Rasterize the edit stack over the base map; later layers win. */
  flatten(): IndexRaster {
    const out = cloneRaster(this.baseMap);
    for (const op of this.layers) {
      switch (op.kind) {
        case "rect":
          paintRect(out, op);
          break;
        case "polygon":
          paintPolygon(out, op);
          break;
        case "brush":
          paintBrush(out, op);
          break;
      }
    }
    return out;
  }
}

export function emptyDocument(width: number, height: number): EditorDocument {
  return new EditorDocument(makeRaster(width, height));
}
