import { CreateSessionRequest } from "./schema.js";

export interface WizardForm {
  problem: string;
  iterations: string;
  seed: string;
  ensembleSize: string;
  monotone: boolean;
  pairCriterion: string;
}

export type WizardResult =
  | { ok: true; request: CreateSessionRequest }
  | { ok: false; field: string; message: string };

/** Validate the session form; errors name the offending field so the page
 * can surface them inline. */
export function buildCreateRequest(form: WizardForm): WizardResult {
  const iterations = Number(form.iterations);
  if (!Number.isInteger(iterations) || iterations < 1) {
    return { ok: false, field: "iterations", message: "budget must be a positive integer" };
  }
  const ensembleSize = Number(form.ensembleSize);
  if (!Number.isInteger(ensembleSize) || ensembleSize < 1) {
    return { ok: false, field: "ensembleSize", message: "ensemble size must be >= 1" };
  }
  const seed = Number(form.seed);
  if (!Number.isInteger(seed)) {
    return { ok: false, field: "seed", message: "seed must be an integer" };
  }
  if (form.pairCriterion !== "ieubo" && form.pairCriterion !== "eubo") {
    return { ok: false, field: "pairCriterion", message: "unknown pair criterion" };
  }
  return {
    ok: true,
    request: {
      problem: form.problem,
      iterations,
      seed,
      ensemble_size: ensembleSize,
      monotone: form.monotone,
      acquisition: { pair_criterion: form.pairCriterion },
    },
  };
}
