// Typed client for the consultation service. All state lives on the server;
// this class only carries the bearer token and the base URL.

import type {
  ApiValue,
  DiagnosticView,
  HowView,
  KbDetail,
  KbSummary,
  Role,
  SessionView,
  StoredVersion,
  UserView,
  ValidationResult,
  WhyView,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
    public diagnostics: DiagnosticView[] = [],
  ) {
    super(detail);
  }
}

export interface LoginResult {
  token: string;
  expires_at: number;
  role: Role;
}

type FetchLike = typeof fetch;

export class ApiClient {
  token: string | null = null;
  role: Role | null = null;
  username: string | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (response.status === 204) return undefined as T;
    const text = await response.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = null;
    }
    if (!response.ok) {
      const doc = (parsed ?? {}) as { detail?: unknown; diagnostics?: DiagnosticView[] };
      const detail = typeof doc.detail === "string" ? doc.detail : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail, doc.diagnostics ?? []);
    }
    return parsed as T;
  }

  async login(username: string, password: string): Promise<LoginResult> {
    const result = await this.request<LoginResult>("POST", "/api/login", {
      username,
      password,
    });
    this.token = result.token;
    this.role = result.role;
    this.username = username;
    return result;
  }

  logout(): void {
    this.token = null;
    this.role = null;
    this.username = null;
  }

  // knowledge bases -------------------------------------------------------

  listKbs(): Promise<KbSummary[]> {
    return this.request("GET", "/api/kbs");
  }

  getKb(id: string, version?: number): Promise<KbDetail> {
    const suffix = version !== undefined ? `?version=${version}` : "";
    return this.request("GET", `/api/kbs/${encodeURIComponent(id)}${suffix}`);
  }

  uploadKb(args: { id?: string; dsl: string; if_version?: number }): Promise<StoredVersion> {
    return this.request("POST", "/api/kbs", args);
  }

  validateDsl(dsl: string): Promise<ValidationResult> {
    return this.request("POST", "/api/kbs", { dsl, validate_only: true });
  }

  deleteKb(id: string): Promise<void> {
    return this.request("DELETE", `/api/kbs/${encodeURIComponent(id)}`);
  }

  addRule(kbId: string, dsl: string, rulebase?: string, ifVersion?: number): Promise<StoredVersion> {
    return this.request("POST", `/api/kbs/${encodeURIComponent(kbId)}/rules`, {
      dsl,
      rulebase,
      if_version: ifVersion,
    });
  }

  replaceRule(
    kbId: string,
    ruleId: string,
    dsl: string,
    rulebase?: string,
    ifVersion?: number,
  ): Promise<StoredVersion> {
    return this.request("PUT", `/api/kbs/${encodeURIComponent(kbId)}/rules`, {
      rule: ruleId,
      dsl,
      rulebase,
      if_version: ifVersion,
    });
  }

  deleteRule(kbId: string, ruleId: string, ifVersion?: number): Promise<StoredVersion> {
    const params = new URLSearchParams({ rule: ruleId });
    if (ifVersion !== undefined) params.set("if_version", String(ifVersion));
    return this.request("DELETE", `/api/kbs/${encodeURIComponent(kbId)}/rules?${params}`);
  }

  // consultations ---------------------------------------------------------

  createSession(args: {
    kb_id: string;
    mode: string;
    goal?: string;
    version?: number;
    initial_facts?: Record<string, ApiValue>;
  }): Promise<SessionView> {
    return this.request("POST", "/api/sessions", args);
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(id)}`);
  }

  postAnswer(id: string, value: ApiValue | null): Promise<SessionView> {
    const body = value === null ? { unknown: true } : { value };
    return this.request("POST", `/api/sessions/${encodeURIComponent(id)}/answers`, body);
  }

  why(id: string): Promise<WhyView> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(id)}/why`);
  }

  how(id: string, variable: string): Promise<HowView> {
    return this.request(
      "GET",
      `/api/sessions/${encodeURIComponent(id)}/how/${encodeURIComponent(variable)}`,
    );
  }

  archive(id: string): Promise<unknown> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(id)}/archive`);
  }

  listCases(): Promise<unknown[]> {
    return this.request("GET", "/api/cases");
  }

  // users -------------------------------------------------------------------

  listUsers(): Promise<UserView[]> {
    return this.request("GET", "/api/users");
  }

  createUser(username: string, password: string, role: Role): Promise<UserView> {
    return this.request("POST", "/api/users", { username, password, role });
  }

  deleteUser(username: string): Promise<void> {
    return this.request("DELETE", `/api/users/${encodeURIComponent(username)}`);
  }
}
