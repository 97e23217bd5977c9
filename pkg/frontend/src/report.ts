/** Session report: agreement and accuracy metrics for a finished session. */

import { ApiError, ReaderApi, Report } from "./api.js";

const METRIC_ROWS: [keyof Report, string][] = [
  ["kappa", "Cohen's kappa vs reference"],
  ["inter_reader_kappa", "Inter-reader kappa"],
  ["accuracy", "Accuracy"],
  ["sensitivity", "Sensitivity"],
  ["specificity", "Specificity"],
  ["f1", "F1"],
];

function fmt(v: number | null | undefined): string {
  return v === null || v === undefined ? "n/a" : v.toFixed(3);
}

export class ReportView {
  report: Report | null = null;

  constructor(
    private root: HTMLElement,
    private api: ReaderApi,
    private sessionId: string,
  ) {
    root.innerHTML = "";
    root.className = "report";
  }

  async load(): Promise<void> {
    this.root.innerHTML = "";
    try {
      this.report = await this.api.report(this.sessionId);
    } catch (e) {
      const msg = e instanceof ApiError ? e.message : "service unreachable";
      const banner = document.createElement("div");
      banner.className = "banner";
      banner.textContent = msg;
      this.root.appendChild(banner);
      return;
    }
    const summary = document.createElement("p");
    summary.textContent =
      `${this.report.n_cases} cases, ${this.report.n_arbitrated} arbitrated`;
    const table = document.createElement("table");
    for (const [key, label] of METRIC_ROWS) {
      const tr = document.createElement("tr");
      const name = document.createElement("td");
      name.textContent = label;
      const value = document.createElement("td");
      value.dataset.metric = key;
      value.textContent = fmt(this.report[key] as number | null);
      tr.append(name, value);
      table.appendChild(tr);
    }
    this.root.append(summary, table);
  }
}
