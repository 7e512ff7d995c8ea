/** Thin typed client over the inference service HTTP API. */

import type {
  ExemplarItem,
  InpaintRequestBody,
  InpaintResponseBody,
  MixRequestBody,
  ModelInfo,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`service responded ${status}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const parsed = await res.json().catch(() => undefined);
    if (!res.ok) throw new ServiceError(res.status, parsed);
    return parsed as T;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`);
    const parsed = await res.json().catch(() => undefined);
    if (!res.ok) throw new ServiceError(res.status, parsed);
    return parsed as T;
  }

  inpaint(body: InpaintRequestBody): Promise<InpaintResponseBody> {
    return this.post("/inpaint", body);
  }

  mix(body: MixRequestBody): Promise<InpaintResponseBody> {
    return this.post("/mix", body);
  }

  model(): Promise<ModelInfo> {
    return this.get("/model");
  }

  async health(): Promise<boolean> {
    try {
      const res = await this.fetchImpl(`${this.baseUrl}/health`);
      return res.ok;
    } catch {
      return false;
    }
  }

  async exemplars(): Promise<ExemplarItem[]> {
    const body = await this.get<{ items: ExemplarItem[] }>("/exemplars");
    return body.items;
  }
}
