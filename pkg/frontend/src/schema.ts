import { z } from "zod";

/** Wire schemas for the session service JSON API. */

export const phaseSchema = z.enum([
  "idle",
  "experimenting",
  "awaiting_preference",
  "finished",
]);
export type Phase = z.infer<typeof phaseSchema>;

export const pairViewSchema = z.object({
  question_id: z.number().int().positive(),
  iteration: z.number().int().nonnegative(),
  y1: z.array(z.number()),
  y2: z.array(z.number()),
  objective_names: z.array(z.string()),
  axis_low: z.array(z.number()),
  axis_high: z.array(z.number()),
});
export type PairView = z.infer<typeof pairViewSchema>;

export const problemMetaSchema = z.object({
  name: z.string(),
  objective_names: z.array(z.string()),
  axis_low: z.array(z.number()),
  axis_high: z.array(z.number()),
});

export const sessionSummarySchema = z.object({
  id: z.string(),
  phase: phaseSchema,
  iteration: z.number().int().nonnegative(),
  budget: z.number().int().nonnegative(),
  init_questions_remaining: z.number().int().nonnegative(),
  n_observations: z.number().int().nonnegative(),
  n_comparisons: z.number().int().nonnegative(),
  current_pair: pairViewSchema.nullable(),
  best_outputs: z.array(
    z.object({ index: z.number().int(), y: z.array(z.number()) }),
  ),
  problem: problemMetaSchema,
  created_at: z.number(),
  updated_at: z.number(),
});
export type SessionSummary = z.infer<typeof sessionSummarySchema>;

export const sessionResponseSchema = z.object({ session: sessionSummarySchema });
export const createSessionResponseSchema = z.object({
  id: z.string(),
  session: sessionSummarySchema,
});

export const questionSchema = z.object({
  question_id: z.number().int(),
  iteration: z.number().int(),
  i: z.number().int(),
  j: z.number().int(),
  y1: z.array(z.number()),
  y2: z.array(z.number()),
  label: z.union([z.literal(1), z.literal(-1), z.literal(0)]).nullable(),
  asked_at: z.number(),
  answered_at: z.number().nullable(),
});
export type Question = z.infer<typeof questionSchema>;

export const experimentSchema = z.object({
  t: z.number().int(),
  x: z.array(z.number()),
  y: z.array(z.number()),
  acquisition_value: z.number().nullable(),
});
export type Experiment = z.infer<typeof experimentSchema>;

export const traceResponseSchema = z.object({
  id: z.string(),
  phase: phaseSchema,
  questions: z.array(questionSchema),
  experiments: z.array(experimentSchema),
  model_ranking: z.array(z.number().int()).nullable(),
  n_observations: z.number().int(),
});
export type TraceResponse = z.infer<typeof traceResponseSchema>;

export const errorResponseSchema = z.object({ detail: z.string() });

/** Choices the console can submit for the pending question. */
export type Choice = "1" | "2" | "tie";
export const preferenceRequestSchema = z.object({
  choice: z.enum(["1", "2", "tie"]),
});

/** Session creation form payload; the service validates the full config. */
export const createSessionRequestSchema = z
  .object({
    problem: z.string(),
    iterations: z.number().int().positive(),
    seed: z.number().int().optional(),
    init_observations: z.number().int().optional(),
    init_comparisons: z.number().int().optional(),
    ensemble_size: z.number().int().optional(),
    monotone: z.boolean().optional(),
    activation: z.string().optional(),
    train: z.record(z.unknown()).optional(),
    acquisition: z.record(z.unknown()).optional(),
  })
  .passthrough();
export type CreateSessionRequest = z.infer<typeof createSessionRequestSchema>;
