// Typed client over the service API described in api-schema.json.
// Pure transport: all verification happens server-side.

export interface GoalDomain {
  domain: string;
  constraints: Record<string, string>;
  requests: string[];
}

export interface Goal {
  domains: GoalDomain[];
}

export interface CreatedSession {
  session_id: string;
  goal: Goal;
  turn_limit: number;
}

export interface Reply {
  reply: string;
  turn_index: number;
  dialog_over: boolean;
}

export interface SlotCheck {
  submitted: string | null;
  match: boolean;
}

export interface VerdictResult {
  verified: boolean;
  per_slot: Record<string, SlotCheck>;
  completed: boolean;
}

export interface Metrics {
  sessions: number;
  closed: number;
  with_verdict: number;
  verified_successes: number;
  verified_success_rate: number | null;
  mean_turns: number | null;
}

export interface SessionRecord {
  session_id: string;
  goal: Goal;
  turns: Array<{ turn: number; user_text: string; reply: string }>;
  closed: boolean;
  close_reason: string | null;
  verdict: (VerdictResult & { turns: number; values: Record<string, string> }) | null;
  turn_limit: number;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ServiceError> {
  let code = "unknown";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? JSON.stringify(body);
  } catch {
    // non-JSON error body; keep defaults
  }
  return new ServiceError(response.status, code, message);
}

export class ServiceClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  createSession(nDomains?: number): Promise<CreatedSession> {
    const body: Record<string, unknown> = {};
    if (nDomains !== undefined) body.n_domains = nDomains;
    return this.request<CreatedSession>("POST", "/sessions", body);
  }

  sendUtterance(sessionId: string, text: string): Promise<Reply> {
    return this.request<Reply>("POST", `/sessions/${sessionId}/utterances`, { text });
  }

  submitVerdict(
    sessionId: string,
    completed: boolean,
    values: Record<string, string>,
  ): Promise<VerdictResult> {
    return this.request<VerdictResult>("POST", `/sessions/${sessionId}/verdict`, {
      completed,
      values,
    });
  }

  getSession(sessionId: string): Promise<SessionRecord> {
    return this.request<SessionRecord>("GET", `/sessions/${sessionId}`);
  }

  metrics(): Promise<Metrics> {
    return this.request<Metrics>("GET", "/metrics");
  }

  async health(): Promise<boolean> {
    try {
      const body = await this.request<{ status: string }>("GET", "/health");
      return body.status === "ok";
    } catch {
      return false;
    }
  }
}
