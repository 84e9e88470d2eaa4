/** Typed client for the forging service.
 *
 * PNG encoding/decoding is injected (canvas-backed in the browser, a
 * pass-through codec in tests) so the submission pipeline is testable
 * without a DOM. At most one forge request is in flight: a newer
 * submission aborts and replaces the pending one.
 */

import { IndexRaster, Palette } from "./raster.js";

export interface PngCodec {
  encodeMap(raster: IndexRaster, palette: Palette): Promise<string>; // base64 PNG
  decodeImage(b64: string): Promise<{ width: number; height: number; rgba: Uint8ClampedArray<ArrayBuffer> }>;
}

export interface SampleSummary {
  id: string;
  split: string;
  palette: Palette;
}

export interface SampleDetail extends SampleSummary {
  map_png: string;
  image_png: string;
}

export interface CheckpointSummary {
  id: string;
  type: string;
  arch?: string;
}

export interface ForgeResult {
  blended_png: string;
  mask_png: string;
  generated_png: string;
}

export interface ForgeRequestBody {
  map_png: string;
  tampered_png: string;
  image_png: string;
  checkpoint: string;
  dilation?: number;
  feather?: number;
}

export class ServiceError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseError(resp: Response): Promise<ServiceError> {
  try {
    const body = await resp.json();
    return new ServiceError(resp.status, body?.error?.code ?? "unknown",
      body?.error?.message ?? resp.statusText);
  } catch {
    return new ServiceError(resp.status, "unknown", resp.statusText);
  }
}

export class ServiceClient {
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  listSamples(): Promise<SampleSummary[]> {
    return this.getJson("/api/samples");
  }

  getSample(id: string): Promise<SampleDetail> {
    return this.getJson(`/api/samples/${id}`);
  }

  listCheckpoints(): Promise<CheckpointSummary[]> {
    return this.getJson("/api/checkpoints");
  }

  /** Submit a forge request, cancelling any still-pending submission. */
  async forge(body: ForgeRequestBody): Promise<ForgeResult> {
    if (this.inflight) this.inflight.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/api/forge`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
        signal: controller.signal,
      });
      if (!resp.ok) throw await parseError(resp);
      return (await resp.json()) as ForgeResult;
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  async detect(image_png: string, checkpoint: string, stride = 8): Promise<{
    shape: number[];
    scores_b64: string;
    heatmap_png: string;
  }> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/detect`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_png, checkpoint, stride }),
    });
    if (!resp.ok) throw await parseError(resp);
    return await resp.json();
  }
}
