/** Thin typed client for the control service. */

import type { EvaluateResponse, ExplainPayload, WindowPayload } from "./types.js";

export class ApiHttpError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiHttpError(resp.status, body.detail ?? resp.statusText);
    }
    return body as T;
  }

  health(): Promise<{ ok: boolean; session: boolean }> {
    return this.request("/health");
  }

  window(cursor?: number): Promise<WindowPayload> {
    const q = cursor === undefined ? "" : `?cursor=${cursor}`;
    return this.request(`/window${q}`);
  }

  evaluate(schedule: number[][], cursor?: number): Promise<EvaluateResponse> {
    return this.request("/evaluate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ schedule_fraction: schedule, cursor }),
    });
  }

  suggest(cursor?: number): Promise<EvaluateResponse> {
    return this.request("/suggest", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cursor }),
    });
  }

  explain(cursor?: number, nPerturb?: number): Promise<ExplainPayload> {
    const params = new URLSearchParams();
    if (cursor !== undefined) params.set("cursor", String(cursor));
    if (nPerturb !== undefined) params.set("n_perturb", String(nPerturb));
    const q = params.toString();
    return this.request(`/explain${q ? "?" + q : ""}`);
  }
}
