/** DOM wiring for the map editor. All pixel logic lives in document.ts /
 * submit.ts; this file is canvas + event glue. */

import { SampleDetail, ServiceClient, ServiceError } from "./api.js";
import { canvasCodec } from "./codec.js";
import { EditorDocument, EditOp } from "./document.js";
import { IndexRaster, Palette, rasterToRgba, rgbaToRaster } from "./raster.js";
import { Panel, panelsEqual, submitForge } from "./submit.js";

type Tool = "rect" | "polygon" | "brush";

interface AppState {
  doc: EditorDocument | null;
  sample: SampleDetail | null;
  palette: Palette | null;
  tool: Tool;
  classIndex: number;
  brushRadius: number;
  polygonPoints: Array<[number, number]>;
  dragStart: [number, number] | null;
  brushTrail: Array<[number, number]>;
  translator: string | null;
  detector: string | null;
  lastMask: Panel | null;
  lastHeatmap: string | null;
}

const state: AppState = {
  doc: null, sample: null, palette: null, tool: "rect", classIndex: 0,
  brushRadius: 4, polygonPoints: [], dragStart: null, brushTrail: [],
  translator: null, detector: null, lastMask: null, lastHeatmap: null,
};

const client = new ServiceClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function banner(message: string | null): void {
  const box = el<HTMLDivElement>("error-banner");
  box.textContent = message ?? "";
  box.style.display = message ? "block" : "none";
}

function drawRaster(canvas: HTMLCanvasElement, raster: IndexRaster, palette: Palette): void {
  canvas.width = raster.width;
  canvas.height = raster.height;
  const ctx = canvas.getContext("2d")!;
  ctx.putImageData(new ImageData(rasterToRgba(raster, palette), raster.width, raster.height), 0, 0);
}

function drawPanel(canvas: HTMLCanvasElement, panel: Panel): void {
  canvas.width = panel.width;
  canvas.height = panel.height;
  canvas.getContext("2d")!.putImageData(
    new ImageData(panel.rgba, panel.width, panel.height), 0, 0);
}

function redrawEditor(): void {
  if (!state.doc || !state.palette) return;
  drawRaster(el<HTMLCanvasElement>("editor-canvas"), state.doc.flatten(), state.palette);
}

function renderPaletteButtons(): void {
  const bar = el<HTMLDivElement>("palette-bar");
  bar.innerHTML = "";
  if (!state.palette) return;
  state.palette.names.forEach((name, i) => {
    const [r, g, b] = state.palette!.colors[i];
    const btn = document.createElement("button");
    btn.textContent = name;
    btn.style.background = `rgb(${r},${g},${b})`;
    btn.className = i === state.classIndex ? "palette selected" : "palette";
    btn.onclick = () => {
      state.classIndex = i;
      renderPaletteButtons();
    };
    bar.appendChild(btn);
  });
}

function canvasPoint(evt: MouseEvent): [number, number] {
  const canvas = el<HTMLCanvasElement>("editor-canvas");
  const rect = canvas.getBoundingClientRect();
  const x = ((evt.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((evt.clientY - rect.top) / rect.height) * canvas.height;
  return [x, y];
}

function applyEdit(op: EditOp): void {
  state.doc?.applyEdit(op);
  redrawEditor();
}

async function loadListings(): Promise<void> {
  const samples = await client.listSamples();
  const sampleSel = el<HTMLSelectElement>("sample-select");
  sampleSel.innerHTML = "";
  for (const s of samples) {
    const opt = document.createElement("option");
    opt.value = s.id;
    opt.textContent = `${s.id} (${s.split})`;
    sampleSel.appendChild(opt);
  }
  const checkpoints = await client.listCheckpoints();
  const ckptSel = el<HTMLSelectElement>("checkpoint-select");
  const detSel = el<HTMLSelectElement>("detector-select");
  ckptSel.innerHTML = "";
  detSel.innerHTML = "<option value=''>(none)</option>";
  for (const c of checkpoints) {
    const opt = document.createElement("option");
    opt.value = c.id;
    opt.textContent = c.arch ? `${c.id} [${c.arch}]` : c.id;
    (c.type === "detector" ? detSel : ckptSel).appendChild(opt);
  }
  if (samples.length) await selectSample(samples[0].id);
  state.translator = ckptSel.value || null;
  state.detector = detSel.value || null;
}

async function selectSample(id: string): Promise<void> {
  const detail = await client.getSample(id);
  state.sample = detail;
  state.palette = detail.palette;
  const mapPanel = await canvasCodec.decodeImage(detail.map_png);
  const baseMap = rgbaToRaster(mapPanel.rgba, mapPanel.width, mapPanel.height, detail.palette);
  state.doc = new EditorDocument(baseMap);
  state.doc.sampleId = id;
  state.classIndex = 0;
  renderPaletteButtons();
  redrawEditor();
  const pristine = await canvasCodec.decodeImage(detail.image_png);
  drawPanel(el<HTMLCanvasElement>("pristine-canvas"), pristine);
}

async function onSubmit(): Promise<void> {
  if (!state.doc || !state.sample || !state.palette || !state.translator) {
    banner("load a sample and pick a checkpoint first");
    return;
  }
  banner(null);
  el<HTMLButtonElement>("submit-btn").disabled = true;
  try {
    const view = await submitForge(state.doc, {
      client, codec: canvasCodec, palette: state.palette,
      originalMapPng: state.sample.map_png,
      pristinePng: state.sample.image_png,
      checkpoint: state.translator,
    });
    drawPanel(el<HTMLCanvasElement>("pristine-canvas"), view.pristine);
    drawRaster(el<HTMLCanvasElement>("tampered-canvas"), view.tamperedMap, state.palette);
    drawPanel(el<HTMLCanvasElement>("blended-canvas"), view.blended);
    state.lastMask = view.mask;
    el<HTMLSpanElement>("noop-note").textContent =
      panelsEqual(view.blended, view.pristine) ? "(no edits: blended == pristine)" : "";
    void redrawOverlays();
    if (state.detector) {
      const det = await client.detect(view.blendedPng, state.detector);
      state.lastHeatmap = det.heatmap_png;
      void redrawOverlays();
    }
  } catch (err) {
    if ((err as DOMException)?.name === "AbortError") return; // replaced
    const msg = err instanceof ServiceError
      ? `service error ${err.status} (${err.code}): ${err.message}`
      : `service unreachable: ${(err as Error).message}`;
    banner(msg); // document state intentionally untouched
  } finally {
    el<HTMLButtonElement>("submit-btn").disabled = false;
  }
}

async function redrawOverlays(): Promise<void> {
  const maskOn = el<HTMLInputElement>("mask-toggle").checked;
  const heatOn = el<HTMLInputElement>("heatmap-toggle").checked;
  const overlay = el<HTMLCanvasElement>("overlay-canvas");
  const blended = el<HTMLCanvasElement>("blended-canvas");
  overlay.width = blended.width;
  overlay.height = blended.height;
  const ctx = overlay.getContext("2d")!;
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  if (maskOn && state.lastMask) {
    const tint = new Uint8ClampedArray(state.lastMask.rgba.length);
    for (let i = 0; i < state.lastMask.rgba.length; i += 4) {
      tint[i] = 255;
      tint[i + 3] = state.lastMask.rgba[i] > 127 ? 96 : 0;
    }
    ctx.putImageData(new ImageData(tint, state.lastMask.width, state.lastMask.height), 0, 0);
  }
  if (heatOn && state.lastHeatmap) {
    const heat = await canvasCodec.decodeImage(state.lastHeatmap);
    const img = new ImageData(heat.rgba, heat.width, heat.height);
    const off = document.createElement("canvas");
    off.width = heat.width;
    off.height = heat.height;
    off.getContext("2d")!.putImageData(img, 0, 0);
    ctx.globalAlpha = 0.4;
    ctx.drawImage(off, 0, 0);
    ctx.globalAlpha = 1.0;
  }
}

function wireTools(): void {
  const canvas = el<HTMLCanvasElement>("editor-canvas");
  canvas.addEventListener("mousedown", (evt) => {
    const p = canvasPoint(evt);
    if (state.tool === "rect" || state.tool === "brush") {
      state.dragStart = p;
      state.brushTrail = [p];
    } else {
      state.polygonPoints.push(p);
    }
  });
  canvas.addEventListener("mousemove", (evt) => {
    if (state.tool === "brush" && state.dragStart) {
      state.brushTrail.push(canvasPoint(evt));
    }
  });
  canvas.addEventListener("mouseup", (evt) => {
    const p = canvasPoint(evt);
    if (state.tool === "rect" && state.dragStart) {
      applyEdit({ kind: "rect", classIndex: state.classIndex,
                  x0: state.dragStart[0], y0: state.dragStart[1], x1: p[0], y1: p[1] });
    } else if (state.tool === "brush" && state.dragStart) {
      applyEdit({ kind: "brush", classIndex: state.classIndex,
                  radius: state.brushRadius, points: state.brushTrail });
    }
    state.dragStart = null;
    state.brushTrail = [];
  });
  canvas.addEventListener("dblclick", () => {
    if (state.tool === "polygon" && state.polygonPoints.length >= 3) {
      applyEdit({ kind: "polygon", classIndex: state.classIndex,
                  points: state.polygonPoints.slice() });
      state.polygonPoints = [];
    }
  });
}

export function boot(): void {
  wireTools();
  el<HTMLSelectElement>("sample-select").onchange = (e) =>
    void selectSample((e.target as HTMLSelectElement).value);
  el<HTMLSelectElement>("checkpoint-select").onchange = (e) => {
    state.translator = (e.target as HTMLSelectElement).value || null;
  };
  el<HTMLSelectElement>("detector-select").onchange = (e) => {
    state.detector = (e.target as HTMLSelectElement).value || null;
  };
  for (const tool of ["rect", "polygon", "brush"] as Tool[]) {
    el<HTMLButtonElement>(`tool-${tool}`).onclick = () => {
      state.tool = tool;
      state.polygonPoints = [];
    };
  }
  el<HTMLButtonElement>("undo-btn").onclick = () => {
    state.doc?.undo();
    redrawEditor();
  };
  el<HTMLButtonElement>("redo-btn").onclick = () => {
    state.doc?.redo();
    redrawEditor();
  };
  el<HTMLButtonElement>("submit-btn").onclick = () => void onSubmit();
  el<HTMLInputElement>("mask-toggle").onchange = () => void redrawOverlays();
  el<HTMLInputElement>("heatmap-toggle").onchange = () => void redrawOverlays();
  el<HTMLInputElement>("brush-size").onchange = (e) => {
    state.brushRadius = Number((e.target as HTMLInputElement).value);
  };
  loadListings().catch((err) => banner(`service unreachable: ${err.message}`));
}
