/** Canvas-backed PNG codec used in the browser. */

import { PngCodec } from "./api.js";
import { IndexRaster, Palette, rasterToRgba } from "./raster.js";

function canvasOf(width: number, height: number): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  return canvas;
}

export const canvasCodec: PngCodec = {
  async encodeMap(raster: IndexRaster, palette: Palette): Promise<string> {
    const canvas = canvasOf(raster.width, raster.height);
    const ctx = canvas.getContext("2d")!;
    const image = new ImageData(rasterToRgba(raster, palette), raster.width, raster.height);
    ctx.putImageData(image, 0, 0);
    const url = canvas.toDataURL("image/png");
    return url.slice(url.indexOf(",") + 1);
  },

  async decodeImage(b64: string) {
    const img = new Image();
    img.src = `data:image/png;base64,${b64}`;
    await img.decode();
    const canvas = canvasOf(img.naturalWidth, img.naturalHeight);
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(img, 0, 0);
    const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
    return { width: canvas.width, height: canvas.height,
             rgba: data.data as Uint8ClampedArray<ArrayBuffer> };
  },
};
