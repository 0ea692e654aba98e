// Verification queue: unverified localizations one at a time, verify or
// reject via the API's state machine. Concurrent reviewers reconcile
// through the service; a conflict here just skips the item with a notice.
// Keyboard: v = verify, r = reject (reviewer throughput matters).

import { ApiClient, ApiError } from "./api.js";
import { clear, el, errorBanner } from "./dom.js";
import { queueFromImages, type ReviewQueue } from "./state.js";
import { boxToView, fitTransform } from "./transform.js";

export class VerifyView {
  readonly root: HTMLElement;
  queue: ReviewQueue | null = null;
  verifier = "anonymous reviewer";

  private readonly panel: HTMLElement;
  private readonly counter: HTMLElement;
  private readonly notice: HTMLElement;

  constructor(private readonly client: ApiClient) {
    this.panel = el("div", { class: "review-panel" });
    this.counter = el("div", { class: "queue-count" });
    this.notice = el("div", { class: "notice" });
    const verifierInput = el("input", { type: "text", value: this.verifier });
    verifierInput.addEventListener("change", () => {
      this.verifier = verifierInput.value.trim() || "anonymous reviewer";
    });
    this.root = el(
      "section",
      { class: "verify-view" },
      el("div", {}, el("label", {}, "reviewer: ", verifierInput)),
      this.counter,
      this.notice,
      this.panel,
    );
    this.root.addEventListener("keydown", (event) => {
      const key = (event as KeyboardEvent).key;
      if (key === "v") void this.review("verified");
      if (key === "r") void this.review("rejected");
    });
  }

  async load(): Promise<void> {
    try {
      const page = await this.client.images({
        state: "unverified", page: 1, page_size: 200,
      });
      this.queue = queueFromImages(page.items);
      this.render();
    } catch (error) {
      clear(this.panel);
      this.panel.append(errorBanner(String(error)));
    }
  }

  async review(state: "verified" | "rejected"): Promise<void> {
    const item = this.queue?.current();
    if (!this.queue || !item) return;
    try {
      await this.client.patchLocalization(
        item.localization.uuid, state, this.verifier);
      this.queue.advance();
      this.setNotice("");
    } catch (error) {
      if (error instanceof ApiError && (error.status === 409 || error.status === 404)) {
        // someone else reviewed it first; skip with a notice
        this.queue.skip();
        this.setNotice(`skipped: already reviewed elsewhere (${error.message})`);
      } else {
        this.setNotice(String(error));
      }
    }
    this.render();
  }

  private setNotice(message: string): void {
    clear(this.notice);
    if (message) this.notice.append(errorBanner(message));
  }

  render(): void {
    clear(this.panel);
    clear(this.counter);
    if (!this.queue) return;
    this.counter.append(
      `${this.queue.remaining} to review; ${this.queue.reviewed} reviewed`
      + (this.queue.skipped.length ? `; ${this.queue.skipped.length} skipped` : ""),
    );
    const item = this.queue.current();
    if (!item) {
      this.panel.append(el("p", { class: "queue-done" },
        "done: nothing left to review"));
      return;
    }
    const stage = el("div", {
      class: "stage",
      style: "position:relative;width:400px;height:300px;",
    });
    const img = el("img", { src: item.imageUrl, alt: item.imageUrl });
    const transform = fitTransform(400, 300, 400, 300);
    const box = el("div", { class: "box saved" });
    const viewBox = boxToView(transform, item.localization.bbox);
    box.style.position = "absolute";
    box.style.left = `${viewBox.x}px`;
    box.style.top = `${viewBox.y}px`;
    box.style.width = `${viewBox.width}px`;
    box.style.height = `${viewBox.height}px`;
    stage.append(img, box);

    const verifyButton = el("button", { class: "verify" }, "verify (v)");
    const rejectButton = el("button", { class: "reject" }, "reject (r)");
    verifyButton.addEventListener("click", () => void this.review("verified"));
    rejectButton.addEventListener("click", () => void this.review("rejected"));

    this.panel.append(
      el("div", { class: "review-item", "data-loc": item.localization.uuid },
        el("h3", {}, item.localization.concept),
        stage,
        el("div", { class: "actions" }, verifyButton, rejectButton)),
    );
  }
}
