import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { SessionApi } from "../src/api.js";
import {
  createSessionRequestSchema,
  createSessionResponseSchema,
  errorResponseSchema,
  preferenceRequestSchema,
  sessionResponseSchema,
  traceResponseSchema,
} from "../src/schema.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function load(name: string): unknown {
  return JSON.parse(readFileSync(join(FIXTURES, `${name}.json`), "utf-8"));
}

describe("service response fixtures parse in the client", () => {
  it("create session response", () => {
    expect(() => createSessionResponseSchema.parse(load("create_session_response"))).not.toThrow();
  });

  it("session summaries in every phase fixture", () => {
    for (const name of [
      "session_response_idle",
      "step_response_awaiting",
      "step_response_experimented",
      "preference_response_0",
      "preference_response_1",
      "preference_response_2",
    ]) {
      const parsed = sessionResponseSchema.parse(load(name));
      expect(parsed.session.id).toBeTruthy();
    }
  });

  it("awaiting fixtures expose a well-formed pair", () => {
    const parsed = sessionResponseSchema.parse(load("step_response_awaiting"));
    const pair = parsed.session.current_pair;
    expect(pair).not.toBeNull();
    expect(pair!.y1.length).toBe(pair!.objective_names.length);
    expect(pair!.axis_low.length).toBe(pair!.y2.length);
  });

  it("trace response", () => {
    const trace = traceResponseSchema.parse(load("trace_response"));
    expect(trace.questions.length).toBeGreaterThan(0);
    expect(trace.experiments.length).toBeGreaterThan(0);
  });

  it("error responses", () => {
    expect(errorResponseSchema.parse(load("error_response_conflict")).detail).toMatch(/phase/);
    expect(errorResponseSchema.parse(load("error_response_not_found")).detail).toMatch(/unknown/);
  });

  it("every response fixture parses under some client schema", () => {
    const schemas = [
      createSessionResponseSchema,
      sessionResponseSchema,
      traceResponseSchema,
      errorResponseSchema,
      createSessionRequestSchema,
      preferenceRequestSchema,
    ];
    for (const file of readdirSync(FIXTURES)) {
      const payload = JSON.parse(readFileSync(join(FIXTURES, file), "utf-8"));
      const parsed = schemas.some((s) => s.safeParse(payload).success);
      expect(parsed, `${file} did not parse under any schema`).toBe(true);
    }
  });
});

describe("client request builders reproduce the request fixtures", () => {
  it("preference bodies", () => {
    const api = new SessionApi("");
    expect(api.buildPreferenceBody("1")).toEqual(load("preference_request_0"));
    expect(api.buildPreferenceBody("tie")).toEqual(load("preference_request_1"));
    expect(api.buildPreferenceBody("2")).toEqual(load("preference_request_2"));
  });

  it("create-session body round-trips the fixture", () => {
    const api = new SessionApi("");
    const fixture = load("create_session_request") as Record<string, unknown>;
    expect(api.buildCreateBody(fixture as never)).toEqual(fixture);
  });
});
