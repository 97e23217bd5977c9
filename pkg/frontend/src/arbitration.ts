/** Arbitrator flow: list conflicting cases, show the two anonymous primary
 * calls, and submit the final call. */

import { ApiError, Call, Conflict, ReaderApi } from "./api.js";
import { SliceViewer } from "./viewer.js";

export class ArbitrationView {
  conflicts: Conflict[] = [];
  selected: Conflict | null = null;
  readonly viewer: SliceViewer;
  private queueEl: HTMLElement;
  private detailEl: HTMLElement;
  private callsEl: HTMLElement;
  private banner: HTMLElement;
  private viewerRoot: HTMLElement;

  constructor(
    root: HTMLElement,
    private api: ReaderApi,
    private sessionId: string,
    private arbitratorId: string,
  ) {
    root.innerHTML = "";
    root.className = "arbitration";
    this.banner = document.createElement("div");
    this.banner.className = "banner";
    this.banner.hidden = true;
    this.queueEl = document.createElement("ul");
    this.queueEl.className = "conflict-queue";
    this.detailEl = document.createElement("div");
    this.detailEl.className = "conflict-detail";
    this.callsEl = document.createElement("div");
    this.callsEl.className = "primary-calls";
    this.viewerRoot = document.createElement("div");
    this.viewerRoot.hidden = true;
    this.viewer = new SliceViewer(this.viewerRoot, api);
    const callBar = document.createElement("div");
    callBar.className = "call-bar";
    for (const call of ["positive", "negative"] as Call[]) {
      const btn = document.createElement("button");
      btn.textContent = `final: ${call}`;
      btn.dataset.call = call;
      btn.addEventListener("click", () => void this.submit(call));
      callBar.appendChild(btn);
    }
    this.detailEl.append(this.callsEl, this.viewerRoot, callBar);
    root.append(this.banner, this.queueEl, this.detailEl);
  }

  async load(): Promise<void> {
    try {
      const { conflicts } = await this.api.conflicts(this.sessionId);
      this.banner.hidden = true;
      this.conflicts = conflicts;
      if (this.selected &&
          !conflicts.some((c) => c.case_id === this.selected!.case_id)) {
        this.selected = null;
      }
      this.render();
    } catch (e) {
      this.showBanner(e);
    }
  }

  select(caseId: string): void {
    this.selected = this.conflicts.find((c) => c.case_id === caseId) ?? null;
    this.render();
  }

  async submit(call: Call): Promise<void> {
    if (!this.selected) return;
    try {
      await this.api.submitArbitration(
        this.sessionId, this.selected.case_id, this.arbitratorId, call);
      this.selected = null;
      await this.load();
    } catch (e) {
      await this.load(); // refresh the queue first: load() clears the banner
      this.showBanner(e);
    }
  }

  private render(): void {
    this.queueEl.innerHTML = "";
    for (const c of this.conflicts) {
      const li = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent = `Case ${c.case_id}`;
      btn.dataset.caseId = c.case_id;
      btn.addEventListener("click", () => this.select(c.case_id));
      li.appendChild(btn);
      this.queueEl.appendChild(li);
    }
    if (this.conflicts.length === 0) {
      const li = document.createElement("li");
      li.textContent = "No conflicting cases.";
      this.queueEl.appendChild(li);
    }
    if (this.selected) {
      // the two primary calls are shown without reader identities
      this.callsEl.textContent =
        `Primary calls: ${this.selected.primary_calls.join(" / ")}`;
      this.viewerRoot.hidden = false;
      this.viewer.showCase(this.selected);
      this.detailEl.hidden = false;
    } else {
      this.callsEl.textContent = "";
      this.viewerRoot.hidden = true;
      this.detailEl.hidden = this.conflicts.length === 0;
    }
  }

  private showBanner(e: unknown): void {
    const msg = e instanceof ApiError ? e.message : "service unreachable";
    this.banner.hidden = false;
    this.banner.textContent = msg;
  }
}
