import { beforeEach, describe, expect, it } from "vitest";

import { ReaderApi } from "../src/api";
import { ReviewView } from "../src/review";
import { createFakeService, flush } from "./fakeService";

function mount(): HTMLElement {
  document.body.innerHTML = "<div id='root'></div>";
  return document.getElementById("root")!;
}

describe("review flow", () => {
  let root: HTMLElement;

  beforeEach(() => {
    root = mount();
  });

  it("submits all ten judgments via the call buttons and reaches done", async () => {
    const svc = createFakeService();
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();

    for (let i = 0; i < 10; i += 1) {
      const caseId = view.currentCase!.case_id;
      const call = svc.expectedCall("reader_a", caseId);
      (root.querySelector(`button[data-call="${call}"]`) as HTMLButtonElement).click();
      await flush();
    }
    expect(svc.posted.judgments).toHaveLength(10);
    expect(view.currentCase).toBeNull();
    expect(root.querySelector(".progress")!.textContent).toBe("10/10 read");
    expect(root.querySelector(".status")!.textContent).toContain("All cases read");
    view.dispose();
  });

  it("advances and increments progress after each submission", async () => {
    const svc = createFakeService();
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();
    const first = view.currentCase!.case_id;
    expect(root.querySelector(".progress")!.textContent).toBe("0/10 read");
    await view.submit(svc.expectedCall("reader_a", first) as "positive" | "negative");
    expect(root.querySelector(".progress")!.textContent).toBe("1/10 read");
    expect(view.currentCase!.case_id).not.toBe(first);
    view.dispose();
  });

  it("issues slice requests with the chosen axis, index, and display", async () => {
    const svc = createFakeService();
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();
    const img = root.querySelector("img.slice") as HTMLImageElement;
    const cid = view.currentCase!.case_id;
    expect(img.src).toContain(`/cases/${cid}/slice`);
    expect(img.src).toContain("axis=axial");
    expect(img.src).toContain("index=8"); // middle of a 16-deep volume
    expect(img.src).toContain("display=gray");

    for (const axis of ["sagittal", "coronal", "axial"] as const) {
      (root.querySelector(`button[data-axis="${axis}"]`) as HTMLButtonElement).click();
      expect(img.src).toContain(`axis=${axis}`);
    }
    const slider = root.querySelector("input[type=range]") as HTMLInputElement;
    slider.value = "3";
    slider.dispatchEvent(new Event("input"));
    expect(img.src).toContain("index=3");
    (root.querySelector("button.display-toggle") as HTMLButtonElement).click();
    expect(img.src).toContain("display=pseudocolor");
    view.dispose();
  });

  it("supports P/N and arrow-key shortcuts", async () => {
    const svc = createFakeService();
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();
    const img = root.querySelector("img.slice") as HTMLImageElement;
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowRight" }));
    expect(img.src).toContain("index=9");
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowLeft" }));
    expect(img.src).toContain("index=8");

    // the first recorded call for reader_a is positive
    expect(svc.expectedCall("reader_a", view.currentCase!.case_id)).toBe("positive");
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "p" }));
    await flush();
    expect(svc.posted.judgments).toHaveLength(1);
    expect(svc.posted.judgments[0].call).toBe("positive");
    view.dispose();
  });

  it("resumes at the first unread case after a reload", async () => {
    const svc = createFakeService();
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();
    for (let i = 0; i < 4; i += 1) {
      const cid = view.currentCase!.case_id;
      await view.submit(svc.expectedCall("reader_a", cid) as "positive" | "negative");
    }
    const pendingCase = view.currentCase!.case_id;
    view.dispose();

    const reloaded = new ReviewView(mount(), api, "fixture", "reader_a");
    await reloaded.load();
    expect(reloaded.currentCase!.case_id).toBe(pendingCase);
    expect(document.querySelector(".progress")!.textContent).toBe("4/10 read");
    reloaded.dispose();
  });

  it("shows a retry banner when the service is unreachable and recovers", async () => {
    const svc = createFakeService();
    svc.offline = true;
    const api = new ReaderApi("", svc.fetchFn);
    const view = new ReviewView(root, api, "fixture", "reader_a");
    await view.load();
    const banner = root.querySelector(".banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("service unreachable");

    svc.offline = false;
    (banner.querySelector("button") as HTMLButtonElement).click();
    await flush();
    expect(banner.hidden).toBe(true);
    expect(view.currentCase).not.toBeNull();
    view.dispose();
  });
});
