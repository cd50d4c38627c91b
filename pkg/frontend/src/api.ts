import {
  Choice,
  CreateSessionRequest,
  SessionSummary,
  TraceResponse,
  createSessionRequestSchema,
  createSessionResponseSchema,
  errorResponseSchema,
  sessionResponseSchema,
  traceResponseSchema,
} from "./schema.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    detail = errorResponseSchema.parse(await resp.json()).detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

/** Thin typed client over the session service; every response body is
 * validated against the wire schema before use. */
export class SessionApi {
  constructor(private baseUrl: string = "") {}

  buildPreferenceBody(choice: Choice): { choice: Choice } {
    return { choice };
  }

  buildCreateBody(form: CreateSessionRequest): CreateSessionRequest {
    return createSessionRequestSchema.parse(form);
  }

  async createSession(form: CreateSessionRequest): Promise<SessionSummary> {
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(this.buildCreateBody(form)),
    });
    if (!resp.ok) await parseError(resp);
    return createSessionResponseSchema.parse(await resp.json()).session;
  }

  async getSession(id: string): Promise<SessionSummary> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}`);
    if (!resp.ok) await parseError(resp);
    return sessionResponseSchema.parse(await resp.json()).session;
  }

  async step(id: string): Promise<SessionSummary> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/step`, {
      method: "POST",
    });
    if (!resp.ok) await parseError(resp);
    return sessionResponseSchema.parse(await resp.json()).session;
  }

  async sendPreference(id: string, choice: Choice): Promise<SessionSummary> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/preference`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(this.buildPreferenceBody(choice)),
    });
    if (!resp.ok) await parseError(resp);
    return sessionResponseSchema.parse(await resp.json()).session;
  }

  async getTrace(id: string): Promise<TraceResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/trace`);
    if (!resp.ok) await parseError(resp);
    return traceResponseSchema.parse(await resp.json());
  }
}
