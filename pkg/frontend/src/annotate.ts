// Annotation editor: existing boxes overlaid on the image, new boxes drawn
// by dragging, concepts assigned via autocomplete, drafts submitted as a
// small upload into the contribution collection. Server truth wins: drafts
// stay visually distinct until the service confirms them, and every
// successful submission is followed by a refetch.

import { ApiClient, ApiError } from "./api.js";
import type { ConceptIndex } from "./autocomplete.js";
import { buildContributionMeta, buildSubmissionCsv } from "./csv.js";
import { clear, el, errorBanner } from "./dom.js";
import {
  draftBoxValid,
  draftSubmittable,
  type DraftBox,
  type MergedImage,
} from "./state.js";
import {
  boxToView,
  dragToBox,
  fitTransform,
  viewToBox,
  zoomed,
  type Affine,
} from "./transform.js";
import type { AppConfig, BBox } from "./types.js";

const VIEW_W = 800;
const VIEW_H = 600;

interface DraftEntry {
  box: DraftBox;
  error: string | null;
}

export class AnnotateView {
  readonly root: HTMLElement;
  image: MergedImage | null = null;
  drafts: DraftEntry[] = [];
  transform: Affine = { scale: 1, offsetX: 0, offsetY: 0 };
  onRefresh: () => Promise<void> = async () => {};

  private readonly stage: HTMLElement;
  private readonly overlay: HTMLElement;
  private readonly draftList: HTMLElement;
  private readonly notice: HTMLElement;
  readonly submitButton: HTMLButtonElement;
  private dragStart: [number, number] | null = null;
  private rubberBand: HTMLElement | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly concepts: ConceptIndex,
    private readonly config: AppConfig,
  ) {
    this.overlay = el("div", { class: "overlay" });
    this.stage = el("div", {
      class: "stage",
      style: `position:relative;width:${VIEW_W}px;height:${VIEW_H}px;`,
    }, this.overlay);
    this.draftList = el("div", { class: "drafts" });
    this.notice = el("div", { class: "notice" });
    this.submitButton = el("button", { disabled: "" }, "Submit boxes") as HTMLButtonElement;
    this.submitButton.addEventListener("click", () => void this.submit());

    const zoomIn = el("button", {}, "+");
    const zoomOut = el("button", {}, "-");
    zoomIn.addEventListener("click", () => this.zoom(1.25));
    zoomOut.addEventListener("click", () => this.zoom(0.8));

    this.overlay.addEventListener("pointerdown", (event) => {
      const [vx, vy] = this.eventView(event as PointerEvent);
      this.startDrag(vx, vy);
    });
    this.overlay.addEventListener("pointermove", (event) => {
      const [vx, vy] = this.eventView(event as PointerEvent);
      this.moveDrag(vx, vy);
    });
    this.overlay.addEventListener("pointerup", (event) => {
      const [vx, vy] = this.eventView(event as PointerEvent);
      this.endDrag(vx, vy);
    });

    this.root = el(
      "section",
      { class: "annotate-view" },
      el("div", { class: "toolbar" }, zoomIn, zoomOut, this.submitButton),
      this.notice,
      this.stage,
      this.draftList,
    );
  }

  private eventView(event: PointerEvent): [number, number] {
    const rect = this.stage.getBoundingClientRect();
    return [event.clientX - rect.left, event.clientY - rect.top];
  }

  open(image: MergedImage): void {
    this.image = image;
    this.drafts = [];
    const w = image.widthPx ?? VIEW_W;
    const h = image.heightPx ?? VIEW_H;
    this.transform = fitTransform(w, h, VIEW_W, VIEW_H);
    this.render();
  }

  zoom(factor: number): void {
    this.transform = zoomed(this.transform, factor, VIEW_W / 2, VIEW_H / 2);
    this.render();
  }

  // -- drawing --

  startDrag(vx: number, vy: number): void {
    this.dragStart = [vx, vy];
    this.rubberBand = el("div", { class: "rubber-band" });
    this.overlay.append(this.rubberBand);
  }

  moveDrag(vx: number, vy: number): void {
    if (!this.dragStart || !this.rubberBand) return;
    const box = dragToBox(this.dragStart[0], this.dragStart[1], vx, vy);
    this.positionBox(this.rubberBand, box);
  }

  endDrag(vx: number, vy: number): void {
    if (!this.dragStart) return;
    const viewBox = dragToBox(this.dragStart[0], this.dragStart[1], vx, vy);
    this.dragStart = null;
    this.rubberBand?.remove();
    this.rubberBand = null;

    const imageBox = viewToBox(this.transform, viewBox);
    const rounded: BBox = {
      x: Math.max(0, Math.round(imageBox.x)),
      y: Math.max(0, Math.round(imageBox.y)),
      width: Math.round(imageBox.width),
      height: Math.round(imageBox.height),
    };
    if (!draftBoxValid(rounded, this.image?.widthPx, this.image?.heightPx)) {
      this.setNotice("draft rejected: boxes need positive width and height "
        + "inside the image frame");
      return;
    }
    this.setNotice("");
    this.drafts.push({ box: { ...rounded, concept: "" }, error: null });
    this.render();
  }

  deleteDraft(index: number): void {
    this.drafts.splice(index, 1);
    this.render();
  }

  setDraftConcept(index: number, concept: string): void {
    const entry = this.drafts[index];
    if (entry) {
      entry.box.concept = concept;
      entry.error = null;
      this.updateSubmitState();
    }
  }

  get submittable(): boolean {
    return this.drafts.length > 0 && this.drafts.every((d) =>
      draftSubmittable(d.box, this.image?.widthPx, this.image?.heightPx));
  }

  async submit(): Promise<void> {
    if (!this.image || !this.submittable) return;
    const csv = buildSubmissionCsv(this.image.imageUrl,
                                   this.drafts.map((d) => d.box));
    const meta = buildContributionMeta(this.config.contributor);
    try {
      await this.client.postCollection(csv, meta);
      this.drafts = [];
      this.setNotice("boxes saved; reloading from server");
      await this.onRefresh();
      this.render();
    } catch (error) {
      if (error instanceof ApiError) {
        this.attachFieldErrors(error);
        this.render();
      } else {
        this.setNotice(String(error));
      }
    }
  }

  /** Map the service's "row N: field" errors back onto draft rows. */
  private attachFieldErrors(error: ApiError): void {
    for (const fieldError of error.errors) {
      const match = /^row (\d+)/.exec(fieldError.field);
      const index = match ? Number(match[1]) - 1 : -1;
      const entry = this.drafts[index];
      if (entry) {
        entry.error = fieldError.message;
      } else {
        this.setNotice(`${fieldError.field}: ${fieldError.message}`);
      }
    }
  }

  // -- rendering --

  private setNotice(message: string): void {
    clear(this.notice);
    if (message) this.notice.append(errorBanner(message));
  }

  private positionBox(node: HTMLElement, viewBox: BBox): void {
    node.style.position = "absolute";
    node.style.left = `${viewBox.x}px`;
    node.style.top = `${viewBox.y}px`;
    node.style.width = `${viewBox.width}px`;
    node.style.height = `${viewBox.height}px`;
  }

  private updateSubmitState(): void {
    if (this.submittable) this.submitButton.removeAttribute("disabled");
    else this.submitButton.setAttribute("disabled", "");
  }

  render(): void {
    clear(this.overlay);
    clear(this.draftList);
    if (!this.image) return;

    const img = el("img", {
      src: this.image.imageUrl,
      alt: this.image.imageUrl,
      draggable: "false",
    });
    const w = this.image.widthPx ?? VIEW_W;
    const h = this.image.heightPx ?? VIEW_H;
    this.positionBox(img, boxToView(this.transform, { x: 0, y: 0, width: w, height: h }));
    this.overlay.append(img);

    for (const loc of this.image.localizations) {
      const node = el("div", {
        class: `box saved state-${loc.verification}`,
        "data-loc": loc.uuid,
        title: loc.concept,
      }, el("span", { class: "box-label" }, loc.concept));
      this.positionBox(node, boxToView(this.transform, loc.bbox));
      this.overlay.append(node);
    }

    this.drafts.forEach((entry, index) => {
      const node = el("div", { class: "box draft", "data-draft": String(index) });
      this.positionBox(node, boxToView(this.transform, entry.box));
      this.overlay.append(node);

      const input = el("input", {
        type: "text",
        placeholder: "concept",
        value: entry.box.concept,
        list: "",
      });
      input.addEventListener("input", () => {
        this.setDraftConcept(index, input.value);
        this.renderSuggestionsFor(entry, input, suggestions);
      });
      const suggestions = el("ul", { class: "suggestions" });
      const remove = el("button", {}, "delete");
      remove.addEventListener("click", () => this.deleteDraft(index));
      const rowAttrs: Record<string, string> = { class: "draft-row" };
      const parts: (Node | string)[] = [
        `#${index + 1} [${entry.box.x},${entry.box.y} ${entry.box.width}x${entry.box.height}] `,
        input, suggestions, remove,
      ];
      if (entry.error) {
        parts.push(el("span", { class: "field-error" }, entry.error));
      }
      this.draftList.append(el("div", rowAttrs, ...parts));
    });
    this.updateSubmitState();
  }

  private renderSuggestionsFor(
    entry: DraftEntry,
    input: HTMLInputElement,
    list: HTMLElement,
  ): void {
    clear(list);
    for (const name of this.concepts.suggest(input.value, 5)) {
      const item = el("li", { class: "suggestion" }, name);
      item.addEventListener("click", () => {
        input.value = name;
        entry.box.concept = name;
        clear(list);
        this.updateSubmitState();
      });
      list.append(item);
    }
  }
}
