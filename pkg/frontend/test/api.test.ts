import { afterEach, describe, expect, it, vi } from "vitest";

import { ServiceClient, ServiceError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("service client", () => {
  it("creates sessions with the documented payload", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse(201, { session_id: "s1", goal: { domains: [] }, turn_limit: 20 }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const client = new ServiceClient("http://svc");
    const created = await client.createSession(2);
    expect(created.session_id).toBe("s1");
    expect(fetchMock).toHaveBeenCalledWith(
      "http://svc/sessions",
      expect.objectContaining({ method: "POST", body: JSON.stringify({ n_domains: 2 }) }),
    );
  });

  it("posts utterances to the session path", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValue(jsonResponse(200, { reply: "hello", turn_index: 1, dialog_over: false }));
    vi.stubGlobal("fetch", fetchMock);
    const reply = await new ServiceClient().sendUtterance("sid", "hi there");
    expect(reply.reply).toBe("hello");
    expect(fetchMock.mock.calls[0][0]).toBe("/sessions/sid/utterances");
  });

  it("maps service errors onto ServiceError with code and status", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValue(jsonResponse(409, { code: "turn_limit", message: "capped" }));
    vi.stubGlobal("fetch", fetchMock);
    const client = new ServiceClient();
    await expect(client.sendUtterance("sid", "hi")).rejects.toMatchObject({
      status: 409,
      code: "turn_limit",
    });
    try {
      await client.sendUtterance("sid", "hi");
    } catch (error) {
      expect(error).toBeInstanceOf(ServiceError);
    }
  });

  it("submits verdicts and parses per-slot checks", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse(200, {
        verified: false,
        completed: true,
        per_slot: { "hotel.phone": { submitted: "123", match: false } },
      }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const verdict = await new ServiceClient().submitVerdict("sid", true, { "hotel.phone": "123" });
    expect(verdict.per_slot["hotel.phone"].match).toBe(false);
    expect(JSON.parse(fetchMock.mock.calls[0][1].body)).toEqual({
      completed: true,
      values: { "hotel.phone": "123" },
    });
  });

  it("health returns false when the service is down", async () => {
    vi.stubGlobal("fetch", vi.fn().mockRejectedValue(new Error("connection refused")));
    expect(await new ServiceClient().health()).toBe(false);
  });
});
