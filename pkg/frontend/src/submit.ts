/** The submit-forge pipeline: flatten -> encode -> POST /api/forge ->
 * decode panels for the side-by-side view. Document state is never
 * mutated here, so a failed submission leaves the editor untouched.
 */

import { ForgeResult, PngCodec, ServiceClient } from "./api.js";
import { EditorDocument } from "./document.js";
import { IndexRaster, Palette } from "./raster.js";

export interface Panel {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

export interface ForgeView {
  tamperedMap: IndexRaster;
  pristine: Panel;
  blended: Panel;
  generated: Panel;
  mask: Panel;
  /** Raw service payloads, e.g. for follow-up detect calls. */
  blendedPng: string;
  maskPng: string;
}

export interface SubmitContext {
  client: ServiceClient;
  codec: PngCodec;
  palette: Palette;
  /** base64 PNGs of the selected sample, as served by /api/samples/{id}. */
  originalMapPng: string;
  pristinePng: string;
  checkpoint: string;
  dilation?: number;
  feather?: number;
}

export async function submitForge(doc: EditorDocument,
                                  ctx: SubmitContext): Promise<ForgeView> {
  const tampered = doc.flatten();
  const tamperedPng = await ctx.codec.encodeMap(tampered, ctx.palette);
  const result: ForgeResult = await ctx.client.forge({
    map_png: ctx.originalMapPng,
    tampered_png: tamperedPng,
    image_png: ctx.pristinePng,
    checkpoint: ctx.checkpoint,
    dilation: ctx.dilation,
    feather: ctx.feather,
  });
  const [pristine, blended, generated, mask] = await Promise.all([
    ctx.codec.decodeImage(ctx.pristinePng),
    ctx.codec.decodeImage(result.blended_png),
    ctx.codec.decodeImage(result.generated_png),
    ctx.codec.decodeImage(result.mask_png),
  ]);
  return { tamperedMap: tampered, pristine, blended, generated, mask,
           blendedPng: result.blended_png, maskPng: result.mask_png };
}

export function panelsEqual(a: Panel, b: Panel): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.rgba.length; i++) {
    if (a.rgba[i] !== b.rgba[i]) return false;
  }
  return true;
}
