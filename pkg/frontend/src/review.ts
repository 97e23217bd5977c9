/** Primary-reader flow: fetch next unread case, view slices, submit a call.
 *
 * The server is the source of truth: every submission waits for the service
 * acknowledgment before advancing, and a page reload resumes at the first
 * unread case reported by the service.
 */

import { ApiError, Call, CaseInfo, ReaderApi } from "./api.js";
import { SliceViewer } from "./viewer.js";

export class ReviewView {
  currentCase: CaseInfo | null = null;
  readonly viewer: SliceViewer;
  private progressEl: HTMLElement;
  private statusEl: HTMLElement;
  private caseEl: HTMLElement;
  private banner: HTMLElement;
  private submitting = false;
  private keyHandler: (ev: KeyboardEvent) => void;

  constructor(
    root: HTMLElement,
    private api: ReaderApi,
    private sessionId: string,
    private readerId: string,
  ) {
    root.innerHTML = "";
    root.className = "review";
    this.banner = document.createElement("div");
    this.banner.className = "banner";
    this.banner.hidden = true;
    this.progressEl = document.createElement("div");
    this.progressEl.className = "progress";
    this.caseEl = document.createElement("div");
    this.caseEl.className = "case-id";
    const viewerRoot = document.createElement("div");
    this.viewer = new SliceViewer(viewerRoot, api);
    const callBar = document.createElement("div");
    callBar.className = "call-bar";
    for (const call of ["positive", "negative"] as Call[]) {
      const btn = document.createElement("button");
      btn.textContent = call;
      btn.dataset.call = call;
      btn.addEventListener("click", () => void this.submit(call));
      callBar.appendChild(btn);
    }
    this.statusEl = document.createElement("div");
    this.statusEl.className = "status";
    root.append(this.banner, this.progressEl, this.caseEl, viewerRoot, callBar, this.statusEl);

    this.keyHandler = (ev) => {
      if (!this.currentCase) return;
      if (ev.key === "p" || ev.key === "P") void this.submit("positive");
      else if (ev.key === "n" || ev.key === "N") void this.submit("negative");
      else if (ev.key === "ArrowRight") this.viewer.stepIndex(1);
      else if (ev.key === "ArrowLeft") this.viewer.stepIndex(-1);
    };
    document.addEventListener("keydown", this.keyHandler);
  }

  dispose(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  async load(): Promise<void> {
    try {
      const next = await this.api.nextCase(this.sessionId, this.readerId);
      this.banner.hidden = true;
      this.progressEl.textContent = `${next.progress.read}/${next.progress.total} read`;
      this.currentCase = next.case;
      if (next.case) {
        this.caseEl.textContent = `Case ${next.case.case_id}`;
        this.viewer.showCase(next.case);
        this.statusEl.textContent = "";
      } else {
        this.caseEl.textContent = "";
        this.statusEl.textContent = "All cases read.";
      }
    } catch (e) {
      this.showBanner(e);
    }
  }

  async submit(call: Call): Promise<void> {
    if (!this.currentCase || this.submitting) return;
    this.submitting = true;
    try {
      await this.api.submitJudgment(
        this.sessionId, this.currentCase.case_id, this.readerId, call);
      await this.load();
    } catch (e) {
      this.showBanner(e);
    } finally {
      this.submitting = false;
    }
  }

  private showBanner(e: unknown): void {
    const msg = e instanceof ApiError ? e.message : "service unreachable";
    this.banner.hidden = false;
    this.banner.innerHTML = "";
    this.banner.append(`${msg} — `);
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => void this.load());
    this.banner.appendChild(retry);
  }
}
