/** Class-indexed rasters and palettes, mirroring the service's data model. */

export interface Palette {
  names: string[];
  /** colors[i] = [r, g, b], exact 8-bit values. */
  colors: number[][];
}

export interface IndexRaster {
  width: number;
  height: number;
  /** Row-major class indices, length = width * height. */
  data: Uint8Array;
}

export function makeRaster(width: number, height: number, fill = 0): IndexRaster {
  const data = new Uint8Array(width * height);
  if (fill !== 0) data.fill(fill);
  return { width, height, data };
}

export function cloneRaster(r: IndexRaster): IndexRaster {
  return { width: r.width, height: r.height, data: new Uint8Array(r.data) };
}

export function rastersEqual(a: IndexRaster, b: IndexRaster): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

/** Palette-exact RGBA rendering; alpha is always 255 (no anti-aliasing). */
export function rasterToRgba(r: IndexRaster, palette: Palette): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(r.width * r.height * 4);
  for (let i = 0; i < r.data.length; i++) {
    const color = palette.colors[r.data[i]] ?? [0, 0, 0];
    out[i * 4] = color[0];
    out[i * 4 + 1] = color[1];
    out[i * 4 + 2] = color[2];
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Recover class indices from exact palette colors (inverse of rasterToRgba). */
export function rgbaToRaster(
  rgba: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
  palette: Palette,
): IndexRaster {
  const lookup = new Map<number, number>();
  palette.colors.forEach(([r, g, b], idx) => lookup.set((r << 16) | (g << 8) | b, idx));
  const raster = makeRaster(width, height);
  for (let i = 0; i < width * height; i++) {
    const key = (rgba[i * 4] << 16) | (rgba[i * 4 + 1] << 8) | rgba[i * 4 + 2];
    const idx = lookup.get(key);
    if (idx === undefined) {
      throw new Error(`pixel ${i} color is not a palette member`);
    }
    raster.data[i] = idx;
  }
  return raster;
}
