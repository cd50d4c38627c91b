import { SessionSummary } from "./schema.js";

/** Console state: the last fetched session snapshot plus in-flight flags.
 * Everything the DOM shows derives from this through pure functions. */
export interface UiState {
  session: SessionSummary | null;
  requestInFlight: boolean;
  answeredQuestionIds: ReadonlySet<number>;
  lastError: string | null;
  offline: boolean;
}

export const initialState: UiState = {
  session: null,
  requestInFlight: false,
  answeredQuestionIds: new Set(),
  lastError: null,
  offline: false,
};

export type UiEvent =
  | { kind: "snapshot"; session: SessionSummary }
  | { kind: "request-start" }
  | { kind: "request-end" }
  | { kind: "answered"; questionId: number }
  | { kind: "error"; message: string; offline?: boolean }
  | { kind: "recovered" };

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "snapshot":
      return { ...state, session: event.session, lastError: null, offline: false };
    case "request-start":
      return { ...state, requestInFlight: true };
    case "request-end":
      return { ...state, requestInFlight: false };
    case "answered": {
      const answered = new Set(state.answeredQuestionIds);
      answered.add(event.questionId);
      return { ...state, answeredQuestionIds: answered };
    }
    case "error":
      return { ...state, lastError: event.message, offline: event.offline ?? false };
    case "recovered":
      return { ...state, lastError: null, offline: false };
  }
}

/** A preference may go out only for the currently pending question, once,
 * and never while another mutating request is outstanding. */
export function canSubmitPreference(state: UiState): boolean {
  const pair = state.session?.current_pair;
  return (
    !!pair &&
    state.session?.phase === "awaiting_preference" &&
    !state.requestInFlight &&
    !state.answeredQuestionIds.has(pair.question_id)
  );
}

export function canStep(state: UiState): boolean {
  return state.session?.phase === "idle" && !state.requestInFlight;
}

export interface ViewModel {
  phaseLabel: string;
  progress: string;
  showPreferencePanel: boolean;
  showSummaryCard: boolean;
  submitEnabled: boolean;
  stepEnabled: boolean;
  banner: string | null;
}

export function viewModel(state: UiState): ViewModel {
  const s = state.session;
  if (!s) {
    return {
      phaseLabel: "no session",
      progress: "",
      showPreferencePanel: false,
      showSummaryCard: false,
      submitEnabled: false,
      stepEnabled: false,
      banner: state.lastError,
    };
  }
  const answered = s.n_comparisons;
  return {
    phaseLabel: s.phase.replace("_", " "),
    progress:
      `iteration ${s.iteration}/${s.budget} - ${s.n_observations} evaluations - ` +
      `${answered} answers` +
      (s.init_questions_remaining > 0
        ? ` - ${s.init_questions_remaining} warm-up questions left`
        : ""),
    showPreferencePanel: s.phase === "awaiting_preference" && !!s.current_pair,
    showSummaryCard: s.phase === "finished",
    submitEnabled: canSubmitPreference(state),
    stepEnabled: canStep(state),
    banner: state.offline
      ? `service unreachable, retrying: ${state.lastError}`
      : state.lastError,
  };
}
