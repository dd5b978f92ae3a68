// ApiClient unit tests against a recorded fetch stub.

import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../../src/api";

interface Recorded {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

function stubClient(
  status: number,
  payload: unknown,
): { client: ApiClient; calls: Recorded[] } {
  const calls: Recorded[] = [];
  const fetchImpl = (async (url: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(url),
      method: init?.method ?? "GET",
      headers: (init?.headers as Record<string, string>) ?? {},
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    });
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return { client: new ApiClient("http://svc", fetchImpl), calls };
}

describe("ApiClient", () => {
  it("logs in and attaches the bearer token to later calls", async () => {
    const { client, calls } = stubClient(200, {
      token: "tok123",
      expires_at: 1,
      role: "admin",
    });
    await client.login("admin", "pw");
    expect(calls[0]).toMatchObject({
      url: "http://svc/api/login",
      method: "POST",
      body: { username: "admin", password: "pw" },
    });
    expect(client.role).toBe("admin");
    await client.listKbs();
    expect(calls[1].headers["Authorization"]).toBe("Bearer tok123");
  });

  it("maps error bodies onto ApiError with diagnostics", async () => {
    const { client } = stubClient(422, {
      detail: "knowledge base failed validation",
      diagnostics: [{ severity: "error", code: "undeclared-variable", message: "x", location: null }],
    });
    client.token = "t";
    const err = await client.uploadKb({ id: "k", dsl: "" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.diagnostics[0].code).toBe("undeclared-variable");
  });

  it("answers with a value or a refusal", async () => {
    const { client, calls } = stubClient(200, { id: "s", status: "done" });
    client.token = "t";
    await client.postAnswer("s", { kind: "boolean", payload: true });
    await client.postAnswer("s", null);
    expect(calls[0].body).toEqual({ value: { kind: "boolean", payload: true } });
    expect(calls[1].body).toEqual({ unknown: true });
  });

  it("encodes rule deletion as query parameters", async () => {
    const { client, calls } = stubClient(200, { id: "k", version: 2, diagnostics: [] });
    client.token = "t";
    await client.deleteRule("chest", "R2", 1);
    expect(calls[0].url).toBe("http://svc/api/kbs/chest/rules?rule=R2&if_version=1");
    expect(calls[0].method).toBe("DELETE");
  });

  it("validateDsl marks the request as validate-only", async () => {
    const { client, calls } = stubClient(200, { valid: true, diagnostics: [] });
    client.token = "t";
    const result = await client.validateDsl("rulebase t {}");
    expect(result.valid).toBe(true);
    expect(calls[0].body).toEqual({ dsl: "rulebase t {}", validate_only: true });
  });

  it("logout clears identity", async () => {
    const { client } = stubClient(200, { token: "x", expires_at: 0, role: "practitioner" });
    await client.login("u", "p");
    client.logout();
    expect(client.token).toBeNull();
    expect(client.role).toBeNull();
  });
});
