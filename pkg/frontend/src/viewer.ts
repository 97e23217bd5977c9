/** Tri-planar slice viewer: axis toggle, index slider, gray/pseudocolor toggle.
 *
 * Renders server-side PNG slices only; the case payload carries nothing but
 * the case id and volume dimensions.
 */

import { AXES, Axis, CaseInfo, Display, ReaderApi } from "./api.js";

export class SliceViewer {
  axis: Axis = "axial";
  index = 0;
  display: Display = "gray";
  private caseInfo: CaseInfo | null = null;
  private img: HTMLImageElement;
  private slider: HTMLInputElement;
  private axisButtons = new Map<Axis, HTMLButtonElement>();
  private displayButton: HTMLButtonElement;
  private label: HTMLSpanElement;

  constructor(root: HTMLElement, private api: ReaderApi) {
    root.classList.add("viewer");
    const axisBar = document.createElement("div");
    axisBar.className = "axis-bar";
    for (const axis of AXES) {
      const btn = document.createElement("button");
      btn.textContent = axis;
      btn.dataset.axis = axis;
      btn.addEventListener("click", () => this.setAxis(axis));
      this.axisButtons.set(axis, btn);
      axisBar.appendChild(btn);
    }
    this.displayButton = document.createElement("button");
    this.displayButton.className = "display-toggle";
    this.displayButton.addEventListener("click", () =>
      this.setDisplay(this.display === "gray" ? "pseudocolor" : "gray"),
    );
    axisBar.appendChild(this.displayButton);
    root.appendChild(axisBar);

    this.img = document.createElement("img");
    this.img.className = "slice";
    this.img.alt = "volume slice";
    root.appendChild(this.img);

    const sliderRow = document.createElement("div");
    sliderRow.className = "slider-row";
    this.slider = document.createElement("input");
    this.slider.type = "range";
    this.slider.min = "0";
    this.slider.addEventListener("input", () => this.setIndex(Number(this.slider.value)));
    this.label = document.createElement("span");
    this.label.className = "slice-label";
    sliderRow.append(this.slider, this.label);
    root.appendChild(sliderRow);
  }

  get extent(): number {
    if (!this.caseInfo) return 0;
    return this.caseInfo.dims[AXES.indexOf(this.axis)];
  }

  showCase(info: CaseInfo): void {
    this.caseInfo = info;
    this.axis = "axial";
    this.display = "gray";
    this.index = Math.floor(this.extent / 2);
    this.update();
  }

  setAxis(axis: Axis): void {
    this.axis = axis;
    this.index = Math.min(this.index, Math.max(this.extent - 1, 0));
    this.update();
  }

  setIndex(index: number): void {
    this.index = Math.min(Math.max(index, 0), Math.max(this.extent - 1, 0));
    this.update();
  }

  stepIndex(delta: number): void {
    this.setIndex(this.index + delta);
  }

  setDisplay(display: Display): void {
    this.display = display;
    this.update();
  }

  private update(): void {
    if (!this.caseInfo) return;
    this.img.src = this.api.sliceUrl(this.caseInfo.case_id, this.axis, this.index, this.display);
    this.slider.max = String(Math.max(this.extent - 1, 0));
    this.slider.value = String(this.index);
    this.label.textContent = `${this.axis} ${this.index + 1}/${this.extent}`;
    for (const [axis, btn] of this.axisButtons) {
      btn.classList.toggle("active", axis === this.axis);
    }
    this.displayButton.textContent =
      this.display === "gray" ? "color map" : "grayscale";
  }
}
