import { ApiError, SessionApi } from "./api.js";
import { renderBestOutputs, renderHistory, renderPair } from "./render.js";
import { Choice } from "./schema.js";
import {
  UiState,
  canStep,
  canSubmitPreference,
  initialState,
  reduce,
  viewModel,
} from "./state.js";
import { WizardForm, buildCreateRequest } from "./wizard.js";

const POLL_INTERVAL_MS = 1000;

/** Page controller: owns the UI state, talks to the service, repaints.
 * All DOM updates flow through render(); polling never blocks input. */
export class App {
  state: UiState = initialState;
  sessionId: string | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private api: SessionApi,
  ) {}

  private dispatch(event: Parameters<typeof reduce>[1]): void {
    this.state = reduce(this.state, event);
    this.render();
  }

  async createSession(form: WizardForm): Promise<void> {
    const built = buildCreateRequest(form);
    if (!built.ok) {
      this.showFieldError(built.field, built.message);
      return;
    }
    if (this.state.requestInFlight) return; // duplicate submit guard
    this.dispatch({ kind: "request-start" });
    try {
      const session = await this.api.createSession(built.request);
      this.sessionId = session.id;
      this.dispatch({ kind: "snapshot", session });
      this.startPolling();
      void this.step();
    } catch (err) {
      this.handleError(err);
    } finally {
      this.dispatch({ kind: "request-end" });
    }
  }

  async attach(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    await this.refresh();
    this.startPolling();
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const session = await this.api.getSession(this.sessionId);
      this.dispatch({ kind: "snapshot", session });
    } catch (err) {
      this.handleError(err, true);
    }
  }

  async step(): Promise<void> {
    if (!this.sessionId || !canStep(this.state)) return;
    this.dispatch({ kind: "request-start" });
    try {
      const session = await this.api.step(this.sessionId);
      this.dispatch({ kind: "snapshot", session });
    } catch (err) {
      this.handleError(err);
    } finally {
      this.dispatch({ kind: "request-end" });
      await this.refreshTrace();
    }
  }

  async submitPreference(choice: Choice): Promise<void> {
    if (!this.sessionId || !canSubmitPreference(this.state)) return;
    const questionId = this.state.session?.current_pair?.question_id;
    this.dispatch({ kind: "request-start" });
    try {
      const session = await this.api.sendPreference(this.sessionId, choice);
      if (questionId !== undefined) {
        this.dispatch({ kind: "answered", questionId });
      }
      this.dispatch({ kind: "snapshot", session });
      this.dispatch({ kind: "request-end" });
      await this.refreshTrace();
      // immediately request the next optimization step
      if (session.phase === "idle") await this.step();
    } catch (err) {
      this.dispatch({ kind: "request-end" });
      if (err instanceof ApiError && err.status === 409) {
        // stale question: refresh to the service's view, nothing lost
        await this.refresh();
      } else {
        this.handleError(err);
      }
    }
  }

  async refreshTrace(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const trace = await this.api.getTrace(this.sessionId);
      const history = this.root.querySelector<HTMLElement>("#history");
      if (history) renderHistory(history, trace.questions);
    } catch {
      // non-fatal; trace refreshes on the next poll
    }
  }

  startPolling(): void {
    if (this.pollTimer !== null) return;
    this.pollTimer = setInterval(() => {
      void this.refresh();
      void this.refreshTrace();
    }, POLL_INTERVAL_MS);
  }

  stopPolling(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
  }

  private handleError(err: unknown, transient = false): void {
    if (err instanceof ApiError) {
      this.dispatch({ kind: "error", message: err.detail, offline: false });
    } else {
      this.dispatch({
        kind: "error",
        message: err instanceof Error ? err.message : String(err),
        offline: true,
      });
      if (transient) return;
    }
  }

  private showFieldError(field: string, message: string): void {
    const el = this.root.querySelector<HTMLElement>(`[data-error-for="${field}"]`);
    if (el) el.textContent = message;
  }

  render(): void {
    const vm = viewModel(this.state);
    const session = this.state.session;
    const get = (id: string) => this.root.querySelector<HTMLElement>(`#${id}`);

    const phase = get("phase");
    if (phase) phase.textContent = vm.phaseLabel;
    const progress = get("progress");
    if (progress) progress.textContent = vm.progress;
    const banner = get("banner");
    if (banner) {
      banner.textContent = vm.banner ?? "";
      banner.classList.toggle("hidden", vm.banner === null);
    }

    const panel = get("preference-panel");
    if (panel) {
      panel.classList.toggle("hidden", !vm.showPreferencePanel);
      if (vm.showPreferencePanel && session?.current_pair) {
        const pairBox = get("pair-view");
        if (pairBox) renderPair(pairBox, session.current_pair);
      }
      panel
        .querySelectorAll<HTMLButtonElement>("button[data-choice]")
        .forEach((button) => (button.disabled = !vm.submitEnabled));
    }

    const summary = get("summary-card");
    if (summary) summary.classList.toggle("hidden", !vm.showSummaryCard);
    const stepButton = this.root.querySelector<HTMLButtonElement>("#step-button");
    if (stepButton) stepButton.disabled = !vm.stepEnabled;
    if (session) {
      const best = get("best-outputs");
      if (best) renderBestOutputs(best, session);
    }
  }

  bindDom(): void {
    this.root
      .querySelectorAll<HTMLButtonElement>("button[data-choice]")
      .forEach((button) => {
        button.addEventListener("click", () => {
          void this.submitPreference(button.dataset.choice as Choice);
        });
      });
    const stepButton = this.root.querySelector<HTMLButtonElement>("#step-button");
    stepButton?.addEventListener("click", () => void this.step());
    const form = this.root.querySelector<HTMLFormElement>("#wizard");
    form?.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const data = new FormData(form);
      void this.createSession({
        problem: String(data.get("problem") ?? "dtlz2"),
        iterations: String(data.get("iterations") ?? ""),
        seed: String(data.get("seed") ?? "0"),
        ensembleSize: String(data.get("ensembleSize") ?? "8"),
        monotone: data.get("monotone") === "on",
        pairCriterion: String(data.get("pairCriterion") ?? "ieubo"),
      });
    });
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "ArrowLeft") void this.submitPreference("1");
      else if (ev.key === "ArrowRight") void this.submitPreference("2");
      else if (ev.key === " ") {
        ev.preventDefault();
        void this.submitPreference("tie");
      }
    });
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const app = new App(root, new SessionApi(""));
  app.bindDom();
  app.render();
  const params = new URLSearchParams(window.location.search);
  const existing = params.get("session");
  if (existing) void app.attach(existing);
}

declare global {
  interface Window {
    bopeBoot?: () => void;
  }
}

if (typeof window !== "undefined") {
  window.bopeBoot = boot;
  if (document.readyState !== "loading") boot();
  else document.addEventListener("DOMContentLoaded", boot);
}
