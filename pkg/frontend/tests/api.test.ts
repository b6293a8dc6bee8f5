import { describe, expect, it, vi } from "vitest";

import { ApiHttpError, Client } from "../src/api";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async (_input: string, _init?: RequestInit) => {
    return {
      ok: status >= 200 && status < 300,
      status,
      statusText: String(status),
      json: async () => body,
    } as Response;
  });
}

describe("client", () => {
  it("posts the schedule to /evaluate", async () => {
    const fetchImpl = mockFetch(200, { levels_ft: [] });
    const client = new Client("", fetchImpl);
    await client.evaluate([[0.5]], 71);
    const [url, init] = fetchImpl.mock.calls[0];
    expect(url).toBe("/evaluate");
    expect(init?.method).toBe("POST");
    expect(JSON.parse(init?.body as string)).toEqual({
      schedule_fraction: [[0.5]],
      cursor: 71,
    });
  });

  it("propagates error details with status codes", async () => {
    const client = new Client("", mockFetch(400, { detail: "schedule[1][0]=1.5 outside [0,1]" }));
    await expect(client.evaluate([[1.5]])).rejects.toThrowError(ApiHttpError);
    await expect(client.evaluate([[1.5]])).rejects.toThrow("schedule[1][0]");
  });

  it("builds explain query strings", async () => {
    const fetchImpl = mockFetch(200, {});
    const client = new Client("", fetchImpl);
    await client.explain(42, 500);
    expect(fetchImpl.mock.calls[0][0]).toBe("/explain?cursor=42&n_perturb=500");
  });

  it("requests the window without a cursor by default", async () => {
    const fetchImpl = mockFetch(200, {});
    const client = new Client("", fetchImpl);
    await client.window();
    expect(fetchImpl.mock.calls[0][0]).toBe("/window");
  });
});
