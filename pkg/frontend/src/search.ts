// Search view: concept search bar with autocomplete plus the filter panel;
// the result grid reflects exactly one API response page.

import { ApiClient, ApiError } from "./api.js";
import type { ConceptIndex } from "./autocomplete.js";
import { clear, el, errorBanner } from "./dom.js";
import { mergeByUrl, type MergedImage } from "./state.js";
import type { SearchFilters } from "./types.js";

export class SearchView {
  readonly root: HTMLElement;
  filters: SearchFilters = { page: 1, page_size: 24 };
  results: MergedImage[] = [];
  total = 0;
  onOpen: (image: MergedImage) => void = () => {};

  private readonly grid: HTMLElement;
  private readonly status: HTMLElement;
  private readonly suggestions: HTMLElement;
  readonly conceptInput: HTMLInputElement;
  readonly descendantsBox: HTMLInputElement;

  constructor(
    private readonly client: ApiClient,
    private readonly concepts: ConceptIndex,
  ) {
    this.conceptInput = el("input", {
      type: "search",
      placeholder: "concept, e.g. Bathochordaeus",
      class: "concept-input",
    });
    this.descendantsBox = el("input", { type: "checkbox", checked: "" });
    this.suggestions = el("ul", { class: "suggestions" });
    this.grid = el("div", { class: "grid" });
    this.status = el("div", { class: "status" });

    const searchButton = el("button", {}, "Search");
    searchButton.addEventListener("click", () => void this.search());
    this.conceptInput.addEventListener("input", () => this.renderSuggestions());
    this.conceptInput.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") void this.search();
    });

    this.root = el(
      "section",
      { class: "search-view" },
      el("div", { class: "search-bar" },
        this.conceptInput,
        el("label", {}, this.descendantsBox, " include descendants"),
        searchButton),
      this.suggestions,
      this.buildFilterPanel(),
      this.status,
      this.grid,
    );
  }

  private buildFilterPanel(): HTMLElement {
    const numeric = (name: keyof SearchFilters, label: string) => {
      const input = el("input", { type: "number", "data-filter": name });
      input.addEventListener("change", () => {
        const value = input.value === "" ? undefined : Number(input.value);
        (this.filters as Record<string, unknown>)[name] = value;
      });
      return el("label", { class: "filter" }, `${label} `, input);
    };
    return el(
      "div",
      { class: "filters" },
      numeric("minlat", "min lat"), numeric("maxlat", "max lat"),
      numeric("minlon", "min lon"), numeric("maxlon", "max lon"),
      numeric("mindepth", "min depth (m)"), numeric("maxdepth", "max depth (m)"),
    );
  }

  private renderSuggestions(): void {
    clear(this.suggestions);
    for (const name of this.concepts.suggest(this.conceptInput.value)) {
      const item = el("li", { class: "suggestion" }, name);
      item.addEventListener("click", () => {
        this.conceptInput.value = name;
        clear(this.suggestions);
        void this.search();
      });
      this.suggestions.append(item);
    }
  }

  async search(page = 1): Promise<void> {
    this.filters.concept = this.conceptInput.value.trim() || undefined;
    this.filters.descendants = this.descendantsBox.checked;
    this.filters.page = page;
    try {
      const result = await this.client.images(this.filters);
      this.results = mergeByUrl(result.items);
      this.total = result.total;
      this.render();
    } catch (error) {
      this.renderError(error);
    }
  }

  private render(): void {
    clear(this.status);
    clear(this.grid);
    const page = this.filters.page ?? 1;
    this.status.append(
      `${this.total} image record(s); page ${page}`,
    );
    if (this.total > (this.filters.page_size ?? 24) * page) {
      const more = el("button", {}, "next page");
      more.addEventListener("click", () => void this.search(page + 1));
      this.status.append(" ", more);
    }
    for (const image of this.results) {
      const card = el(
        "figure",
        { class: "card", "data-url": image.imageUrl },
        el("img", { src: image.imageUrl, alt: image.imageUrl, loading: "lazy" }),
        el("figcaption", {},
          `${image.localizations.length} localization(s)`),
      );
      card.addEventListener("click", () => this.onOpen(image));
      this.grid.append(card);
    }
    if (this.results.length === 0) {
      this.grid.append(el("p", { class: "empty" }, "no images match"));
    }
  }

  private renderError(error: unknown): void {
    clear(this.status);
    const message = error instanceof ApiError
      ? error.errors.map((e) => `${e.field}: ${e.message}`).join("; ")
      : String(error);
    this.status.append(errorBanner(message));
  }
}
