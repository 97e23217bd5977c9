/** Entry point: session/reader sign-in form and flow switching. */

import { ReaderApi } from "./api.js";
import { ArbitrationView } from "./arbitration.js";
import { ReportView } from "./report.js";
import { ReviewView } from "./review.js";

export function mountApp(root: HTMLElement, api: ReaderApi = new ReaderApi()): void {
  root.innerHTML = "";
  const form = document.createElement("form");
  form.className = "signin";
  const session = input(form, "session", "session id");
  const reader = input(form, "reader", "reader id");
  const role = document.createElement("select");
  role.name = "role";
  for (const value of ["reader", "arbitrator", "report"]) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value;
    role.appendChild(opt);
  }
  form.appendChild(role);
  const go = document.createElement("button");
  go.type = "submit";
  go.textContent = "open";
  form.appendChild(go);
  const main = document.createElement("div");
  main.id = "main";
  root.append(form, main);

  let active: ReviewView | ArbitrationView | ReportView | null = null;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (active instanceof ReviewView) active.dispose();
    if (role.value === "reader") {
      const view = new ReviewView(main, api, session.value, reader.value);
      active = view;
      void view.load();
    } else if (role.value === "arbitrator") {
      const view = new ArbitrationView(main, api, session.value, reader.value);
      active = view;
      void view.load();
    } else {
      const view = new ReportView(main, api, session.value);
      active = view;
      void view.load();
    }
  });
}

function input(form: HTMLFormElement, name: string, placeholder: string): HTMLInputElement {
  const el = document.createElement("input");
  el.name = name;
  el.placeholder = placeholder;
  el.required = true;
  form.appendChild(el);
  return el;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app")!);
}
