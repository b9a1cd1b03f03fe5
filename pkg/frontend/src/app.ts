/** The session screens: policy picker, live play, and the terminal summary.
 *
 * State lives in the service; this class only keeps the current descriptor,
 * the step results it has seen, and a single in-flight request. Reloading
 * with the same ``#session=...`` hash refetches the descriptor and rebuilds
 * the identical screen.
 */

import {
  Api,
  ApiError,
  type Direction,
  type PolicyInfo,
  type SessionDescriptor,
  type StepResult,
} from "./api.js";
import { renderBeliefPanel } from "./belief.js";
import { renderTable } from "./table.js";

export function sessionIdFromHash(hash: string): string | null {
  const match = /(?:^|[#&])session=([^&]+)/.exec(hash);
  return match ? decodeURIComponent(match[1]!) : null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function goalName(goal: number): string {
  return goal === -90 ? "Goal 1 (-90°)" : "Goal 2 (+90°)";
}

export class App {
  /** Every step result this client has played or replayed, in order. */
  readonly stepLog: StepResult[] = [];

  private session: SessionDescriptor | null = null;
  private policy: PolicyInfo | null = null;
  private policies: PolicyInfo[] = [];
  private busy = false;
  private inflight: Promise<void> = Promise.resolve();
  private retryThunk: (() => Promise<void>) | null = null;
  private stepsSeen = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api,
  ) {}

  /** Resolves once the current in-flight request (if any) has settled. */
  settled(): Promise<void> {
    return this.inflight;
  }

  current(): SessionDescriptor | null {
    return this.session;
  }

  async start(): Promise<void> {
    const sessionId = sessionIdFromHash(window.location.hash);
    if (sessionId === null) {
      await this.showPicker();
      return;
    }
    try {
      this.policies = await this.api.listPolicies();
      const descriptor = await this.api.getSession(sessionId);
      this.adopt(descriptor);
    } catch (error) {
      await this.showPicker(error instanceof ApiError ? error.message : "service unreachable");
    }
  }

  /** The bytes the trace download button saves. */
  traceText(): Promise<string> {
    if (!this.session) throw new Error("no session");
    return this.api.fetchTrace(this.session.id);
  }

  // -- picker ---------------------------------------------------------------

  private async showPicker(note?: string): Promise<void> {
    let policies: PolicyInfo[];
    try {
      policies = await this.api.listPolicies();
    } catch {
      this.renderPickerError("The service is unreachable. Check the URL and reload.");
      return;
    }
    this.policies = policies;
    const screen = el("section", { id: "screen-pick" });
    screen.appendChild(el("h2", {}, "Start a table-carrying session"));
    if (note) screen.appendChild(el("p", { class: "note", id: "pick-note" }, note));

    const policySelect = el("select", { id: "policy-select" });
    for (const policy of policies) {
      const option = el("option", { value: policy.id }, `${policy.id} (${policy.variant})`);
      option.dataset.variant = policy.variant;
      policySelect.appendChild(option);
    }
    const policyLabel = el("label", {}, "Robot policy ");
    policyLabel.appendChild(policySelect);

    const prefSelect = el("select", { id: "preference-select" });
    prefSelect.appendChild(el("option", { value: "" }, "model default"));
    prefSelect.appendChild(el("option", { value: "counterclockwise" }, "counterclockwise"));
    prefSelect.appendChild(el("option", { value: "clockwise" }, "clockwise"));
    const prefLabel = el("label", {}, "Your preferred direction ");
    prefLabel.appendChild(prefSelect);

    const startBtn = el("button", { id: "start-btn" }, "Start");
    const errorLine = el("p", { id: "pick-error", hidden: "" });
    startBtn.addEventListener("click", () => {
      this.inflight = this.createSession(policySelect, prefSelect, errorLine);
    });

    screen.appendChild(policyLabel);
    screen.appendChild(prefLabel);
    screen.appendChild(startBtn);
    screen.appendChild(errorLine);
    this.root.replaceChildren(screen);
  }

  private renderPickerError(message: string): void {
    const screen = el("section", { id: "screen-pick" });
    screen.appendChild(el("p", { id: "pick-error" }, message));
    this.root.replaceChildren(screen);
  }

  private async createSession(
    policySelect: HTMLSelectElement,
    prefSelect: HTMLSelectElement,
    errorLine: HTMLElement,
  ): Promise<void> {
    const policyId = policySelect.value;
    const policy = this.policies.find((p) => p.id === policyId);
    if (!policy) return;
    const body: { variant: string; policy_id: string; preference?: Direction } = {
      variant: policy.variant,
      policy_id: policy.id,
    };
    if (prefSelect.value) body.preference = prefSelect.value as Direction;
    try {
      const descriptor = await this.api.createSession(body);
      window.location.hash = `session=${encodeURIComponent(descriptor.id)}`;
      this.adopt(descriptor);
    } catch (error) {
      errorLine.hidden = false;
      errorLine.textContent = error instanceof ApiError ? error.message : "network failure, try again";
    }
  }

  // -- play -----------------------------------------------------------------

  private adopt(descriptor: SessionDescriptor): void {
    this.session = descriptor;
    this.policy = this.policies.find((p) => p.id === descriptor.policy_id) ?? null;
    this.stepsSeen = descriptor.steps;
    this.stepLog.length = 0;
    if (descriptor.status === "finished") {
      this.renderDone(descriptor.goal);
      return;
    }
    this.renderPlay();
    if (descriptor.last_step) this.applyFeedback(descriptor.last_step);
  }

  private grids(): { alpha: number[]; compliance: number[] } {
    if (this.policy) {
      return { alpha: this.policy.alpha_grid, compliance: this.policy.compliance_grid };
    }
    const n = this.session?.belief.alpha_marginal.length ?? 0;
    const m = this.session?.belief.compliance_marginal.length ?? 0;
    return { alpha: [...Array(n).keys()], compliance: [...Array(m).keys()] };
  }

  private renderPlay(): void {
    const session = this.session!;
    const screen = el("section", { id: "screen-play" });
    screen.appendChild(el("p", { id: "status-line" }));
    screen.appendChild(el("div", { id: "table-area" }));
    screen.appendChild(el("p", { id: "orientation-line" }));

    const bubble = el("div", { id: "bubble", class: "bubble", hidden: "" });
    screen.appendChild(bubble);
    screen.appendChild(el("div", { id: "move-banner", hidden: "" }, "The table did not move."));

    const errorBanner = el("div", { id: "error-banner", hidden: "" });
    errorBanner.appendChild(el("span", { id: "error-text" }));
    const retryBtn = el("button", { id: "retry-btn" }, "Retry");
    retryBtn.addEventListener("click", () => {
      if (this.retryThunk) this.inflight = this.retryThunk();
    });
    errorBanner.appendChild(retryBtn);
    screen.appendChild(errorBanner);

    const controls = el("div", { class: "controls" });
    const cw = el("button", { id: "btn-clockwise" }, "Rotate clockwise");
    const ccw = el("button", { id: "btn-counterclockwise" }, "Rotate counterclockwise");
    cw.addEventListener("click", () => this.clickDirection("clockwise"));
    ccw.addEventListener("click", () => this.clickDirection("counterclockwise"));
    controls.appendChild(cw);
    controls.appendChild(ccw);
    screen.appendChild(controls);

    screen.appendChild(el("div", { id: "belief-panel" }));
    this.root.replaceChildren(screen);

    this.updateStatus(session.status, session.orientation);
    renderBeliefPanel(this.panel(), session.belief, this.grids());
  }

  private panel(): HTMLElement {
    return this.root.querySelector<HTMLElement>("#belief-panel")!;
  }

  private updateStatus(status: string, orientation: number): void {
    const statusLine = this.root.querySelector<HTMLElement>("#status-line");
    if (statusLine) {
      const variant = this.session?.variant ?? "";
      statusLine.textContent = `${variant} · step ${this.stepsSeen} · ${status}`;
    }
    const orientationLine = this.root.querySelector<HTMLElement>("#orientation-line");
    if (orientationLine) {
      const sign = orientation > 0 ? "+" : "";
      orientationLine.textContent = `Table at ${sign}${orientation}°`;
    }
    const tableArea = this.root.querySelector<HTMLElement>("#table-area");
    if (tableArea) renderTable(tableArea, orientation);
    this.updateButtons();
  }

  private updateButtons(): void {
    const disabled = this.busy || this.session?.status !== "active";
    for (const id of ["#btn-clockwise", "#btn-counterclockwise"]) {
      const button = this.root.querySelector<HTMLButtonElement>(id);
      if (button) button.disabled = disabled;
    }
  }

  clickDirection(direction: Direction): void {
    if (this.busy || !this.session || this.session.status !== "active") return;
    this.inflight = this.play(direction);
  }

  private async play(direction: Direction): Promise<void> {
    const session = this.session!;
    this.busy = true;
    this.updateButtons();
    try {
      const result = await this.api.step(session.id, direction);
      this.retryThunk = null;
      this.hideError();
      this.applyStep(result);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // finished elsewhere; resync rather than retry
        try {
          this.adopt(await this.api.getSession(session.id));
        } catch {
          this.showError("session unavailable", null);
        }
      } else if (error instanceof ApiError) {
        this.showError(error.message, null);
      } else {
        this.showError("Network failure. Your session is intact.", () => this.play(direction));
      }
    } finally {
      this.busy = false;
      this.updateButtons();
    }
  }

  private applyStep(result: StepResult): void {
    this.stepLog.push(result);
    this.stepsSeen = result.index + 1;
    const session = this.session!;
    session.status = result.status;
    session.orientation = result.orientation;
    session.terminal = result.terminal;
    session.goal = result.goal;
    session.belief = result.belief;
    session.last_step = result;
    session.steps = this.stepsSeen;
    if (result.status === "finished") {
      this.renderDone(result.goal);
      return;
    }
    this.updateStatus(result.status, result.orientation);
    this.applyFeedback(result);
    renderBeliefPanel(this.panel(), result.belief, this.grids());
  }

  /** Bubble and frozen-step banner for the step on screen. */
  private applyFeedback(result: StepResult): void {
    const bubble = this.root.querySelector<HTMLElement>("#bubble");
    if (bubble) {
      bubble.hidden = result.utterance === null;
      bubble.textContent = result.utterance ?? "";
    }
    const banner = this.root.querySelector<HTMLElement>("#move-banner");
    if (banner) banner.hidden = result.table_moved;
  }

  private showError(message: string, retry: (() => Promise<void>) | null): void {
    this.retryThunk = retry;
    const banner = this.root.querySelector<HTMLElement>("#error-banner");
    const text = this.root.querySelector<HTMLElement>("#error-text");
    const retryBtn = this.root.querySelector<HTMLButtonElement>("#retry-btn");
    if (banner) banner.hidden = false;
    if (text) text.textContent = message;
    if (retryBtn) retryBtn.hidden = retry === null;
  }

  private hideError(): void {
    const banner = this.root.querySelector<HTMLElement>("#error-banner");
    if (banner) banner.hidden = true;
  }

  // -- terminal summary -------------------------------------------------------

  private renderDone(goal: number | null): void {
    const session = this.session!;
    const screen = el("section", { id: "screen-done" });
    screen.appendChild(el("h2", {}, "Session finished"));
    const line =
      goal === null
        ? "No goal was reached before the step limit."
        : `The table reached ${goalName(goal)}.`;
    screen.appendChild(el("p", { id: "goal-line" }, line));

    const download = el("button", { id: "download-btn" }, "Download trace");
    download.addEventListener("click", () => {
      this.inflight = this.traceText()
        .then((text) => triggerDownload(text, `${session.id}.ndjson`))
        .catch(() => {
          const note = this.root.querySelector<HTMLElement>("#done-note");
          if (note) note.textContent = "Trace download failed; the session is still stored.";
        });
    });
    screen.appendChild(download);

    const again = el("button", { id: "again-btn" }, "Play again");
    again.addEventListener("click", () => {
      window.location.hash = "";
      this.session = null;
      this.inflight = this.showPicker();
    });
    screen.appendChild(again);
    screen.appendChild(el("p", { id: "done-note" }));

    const panel = el("div", { id: "belief-panel" });
    screen.appendChild(panel);
    this.root.replaceChildren(screen);
    renderBeliefPanel(panel, session.belief, this.grids());
  }
}

function triggerDownload(text: string, filename: string): void {
  const blob = new Blob([text], { type: "application/x-ndjson" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  document.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
